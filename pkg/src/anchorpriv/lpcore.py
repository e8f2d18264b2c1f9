"""Sparse linear-program container and a deterministic solve wrapper.

Programs are built row by row as sparse triplets (explicit zeros are
dropped) and solved through scipy's HiGHS backend, which returns clean
basic solutions and is deterministic for a fixed input. The container
hides the backend so callers only see :class:`LinearProgram` and
:class:`LpSolution`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import SolverError

__all__ = ["LinearProgram", "LpSolution", "solve_lp"]

FEASIBILITY_TOL = 1e-7
OPTIMALITY_TOL = 1e-8

# HiGHS is run well below the contract tolerances so downstream log-space
# constraint checks keep their slack budget.
_SOLVE_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


@dataclass
class LinearProgram:
    """min c.x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lo <= x <= hi.

    Variable bounds default to [0, +inf). ``var_shape`` optionally records
    the logical 2-D shape of the variable vector for table-valued programs.
    """

    objective: np.ndarray
    var_shape: tuple | None = None
    _ub_rows: list = field(default_factory=list, repr=False)
    _eq_rows: list = field(default_factory=list, repr=False)
    _bounds: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float).ravel()
        if self.objective.size < 1:
            raise ValueError("objective must have at least one variable")

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_ub_rows(self) -> int:
        return len(self._ub_rows)

    @property
    def n_eq_rows(self) -> int:
        return len(self._eq_rows)

    def _check_terms(self, terms):
        cleaned = [(int(j), float(v)) for j, v in terms if v != 0.0]
        for j, _ in cleaned:
            if not 0 <= j < self.n_vars:
                raise ValueError(f"variable index {j} out of range")
        return cleaned

    def add_le(self, terms, rhs: float):
        """Append one row sum_j coef_j x_j <= rhs; zero coefficients dropped."""
        self._ub_rows.append((self._check_terms(terms), float(rhs)))

    def add_eq(self, terms, rhs: float):
        """Append one equality row; degenerate 0 = 0 rows are dropped."""
        cleaned = self._check_terms(terms)
        if not cleaned and rhs == 0.0:
            return
        self._eq_rows.append((cleaned, float(rhs)))

    def set_bounds(self, j: int, lo: float = 0.0, hi: float | None = None):
        self._bounds[int(j)] = (lo, hi)

    def _assemble(self, rows):
        if not rows:
            return None, None
        data, ri, ci, rhs = [], [], [], []
        for r, (terms, b) in enumerate(rows):
            rhs.append(b)
            for j, v in terms:
                ri.append(r)
                ci.append(j)
                data.append(v)
        mat = sparse.csr_matrix(
            (data, (ri, ci)), shape=(len(rows), self.n_vars)
        )
        return mat, np.asarray(rhs, dtype=float)

    def matrices(self):
        """Assembled (A_ub, b_ub, A_eq, b_eq, bounds) for the backend."""
        a_ub, b_ub = self._assemble(self._ub_rows)
        a_eq, b_eq = self._assemble(self._eq_rows)
        bounds = [self._bounds.get(j, (0.0, None)) for j in range(self.n_vars)]
        return a_ub, b_ub, a_eq, b_eq, bounds

    def to_mps(self, name: str = "PROGRAM") -> str:
        """Fixed-column MPS rendering for cross-checking with other solvers."""
        lines = [f"NAME          {name}", "ROWS", " N  COST"]
        for r in range(self.n_ub_rows):
            lines.append(f" L  UB{r:06d}")
        for r in range(self.n_eq_rows):
            lines.append(f" E  EQ{r:06d}")
        cols: dict[int, list[tuple[str, float]]] = {j: [] for j in range(self.n_vars)}
        for j, v in enumerate(self.objective):
            if v != 0.0:
                cols[j].append(("COST", v))
        for r, (terms, _) in enumerate(self._ub_rows):
            for j, v in terms:
                cols[j].append((f"UB{r:06d}", v))
        for r, (terms, _) in enumerate(self._eq_rows):
            for j, v in terms:
                cols[j].append((f"EQ{r:06d}", v))

        def entry(col, row, val):
            return f"    {col:<10}{row:<10}{val:< .9E}"

        lines.append("COLUMNS")
        for j in range(self.n_vars):
            for row, val in cols[j]:
                lines.append(entry(f"X{j:06d}", row, val))
        lines.append("RHS")
        for r, (_, b) in enumerate(self._ub_rows):
            if b != 0.0:
                lines.append(entry("RHS", f"UB{r:06d}", b))
        for r, (_, b) in enumerate(self._eq_rows):
            if b != 0.0:
                lines.append(entry("RHS", f"EQ{r:06d}", b))
        lines.append("BOUNDS")
        for j in range(self.n_vars):
            lo, hi = self._bounds.get(j, (0.0, None))
            if lo != 0.0:
                lines.append(f" LO BND       X{j:06d}  {lo:< .9E}")
            if hi is not None:
                lines.append(f" UP BND       X{j:06d}  {hi:< .9E}")
        lines.append("ENDATA")
        return "\n".join(lines) + "\n"


@dataclass
class LpSolution:
    """Solver outcome; ``values`` and ``objective_value`` are set when optimal."""

    status: str
    values: np.ndarray | None = None
    objective_value: float | None = None

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"


_STATUS_MAP = {0: "optimal", 2: "infeasible", 3: "unbounded"}


def solve_lp(lp: LinearProgram) -> LpSolution:
    """Solve a program to optimality, or report infeasible/unbounded.

    Optimal solutions are validated against the assembled constraints within
    FEASIBILITY_TOL; violations raise SolverError since they indicate a
    backend fault rather than a property of the program.
    """
    a_ub, b_ub, a_eq, b_eq, bounds = lp.matrices()
    res = linprog(
        lp.objective,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=bounds,
        method="highs",
        options=dict(_SOLVE_OPTIONS),
    )
    status = _STATUS_MAP.get(res.status)
    if status is None:
        raise SolverError(f"LP backend failed: {res.message}")
    if status != "optimal":
        return LpSolution(status=status)
    x = np.asarray(res.x, dtype=float)
    if a_ub is not None:
        worst = float(np.max(a_ub @ x - b_ub, initial=0.0))
        if worst > FEASIBILITY_TOL:
            raise SolverError(f"inequality residual {worst:.3e} above tolerance")
    if a_eq is not None:
        worst = float(np.max(np.abs(a_eq @ x - b_eq), initial=0.0))
        if worst > FEASIBILITY_TOL:
            raise SolverError(f"equality residual {worst:.3e} above tolerance")
    return LpSolution(status="optimal", values=x, objective_value=float(res.fun))
