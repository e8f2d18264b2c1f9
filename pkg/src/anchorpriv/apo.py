"""Anchor perturbation programs.

Builds and solves the neighbor-constrained anchor LP with its linear
surrogate objective, the relaxed all-pairs anchor variant, the coarse
representative-grid LP, and the cell-aggregated universal lower bound on
the expected loss of any mechanism meeting the same privacy constraint.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import SolverError
from .geometry import (
    Partition,
    axis_neighbors,
    dual_exponent,
    interpolation_weights,
    locate_cell,
    lp_distance,
)
from .lpcore import LinearProgram, solve_lp

__all__ = [
    "OutputDomain",
    "PerturbationTable",
    "SurrogateCoefficients",
    "BudgetVector",
    "BudgetCheck",
    "check_budget",
    "surrogate_coefficients",
    "build_approx_apo",
    "solve_approx_apo",
    "build_aipo_relaxed",
    "build_coarse_lp",
    "lower_bound",
]

ROW_SUM_TOL = 1e-9
PRE_NORMALIZATION_TOL = 1e-7
BUDGET_TOL = 1e-12


@dataclass(frozen=True)
class OutputDomain:
    """Discrete candidate outputs, as points of the secret space."""

    points: np.ndarray
    labels: tuple | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] < 1:
            raise ValueError("output domain must contain at least one candidate")
        if len(np.unique(pts, axis=0)) != pts.shape[0]:
            raise ValueError("output candidates must be distinct")
        object.__setattr__(self, "points", pts)
        if self.labels is None:
            object.__setattr__(
                self, "labels", tuple(f"y{k}" for k in range(pts.shape[0]))
            )
        elif len(self.labels) != pts.shape[0]:
            raise ValueError("one label per candidate required")

    @property
    def size(self) -> int:
        return self.points.shape[0]


class PerturbationTable:
    """Row-stochastic probabilities z(y_k | anchor_i), one row per anchor."""

    def __init__(self, probs):
        probs = np.atleast_2d(np.asarray(probs, dtype=float))
        if np.any(probs < 0):
            raise ValueError("probabilities must be non-negative")
        sums = probs.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
            worst = float(np.abs(sums - 1.0).max())
            raise ValueError(f"row sums deviate from 1 by {worst:.3e}")
        self.probs = probs

    @property
    def n_rows(self) -> int:
        return self.probs.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.probs.shape[1]

    def to_csv(self, labels=None) -> str:
        """CSV with a header of output ids, rows as (anchor id, probabilities).

        Probabilities carry 17 significant digits, enough to round-trip
        float64 exactly.
        """
        labels = labels or [f"y{k}" for k in range(self.n_outputs)]
        buf = io.StringIO()
        buf.write("anchor," + ",".join(labels) + "\n")
        for i, row in enumerate(self.probs):
            cells = ",".join(format(v, ".17g") for v in row)
            buf.write(f"a{i},{cells}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PerturbationTable":
        lines = [ln for ln in text.strip().splitlines() if ln]
        rows = [
            [float(v) for v in ln.split(",")[1:]] for ln in lines[1:]
        ]
        return cls(np.asarray(rows))

    def to_json_dict(self) -> dict:
        return {"probs": [[float(v) for v in row] for row in self.probs]}

    @classmethod
    def from_json_dict(cls, d: dict) -> "PerturbationTable":
        return cls(np.asarray(d["probs"], dtype=float))

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())


@dataclass(frozen=True)
class SurrogateCoefficients:
    """Constant objective coefficients over anchors x outputs.

    Entry (i, k) aggregates prior-mass-weighted pointwise loss against the
    corner weight anchor i receives from every sample point of its
    incident cells.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2:
            raise ValueError("coefficient matrix must be 2-D")
        if np.any(m < 0):
            raise ValueError("coefficients must be non-negative")
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class BudgetVector:
    """Per-dimension privacy budgets with their composition certificate.

    For p > 1 the vector must satisfy sum_l eps_l^q <= (eps/2)^q with
    q = p/(p-1); for p = 1 the rule is max_l eps_l <= eps/2. The factor 2
    covers the slack introduced by normalizing the interpolated scores.
    """

    eps: np.ndarray
    total_eps: float
    p: float

    def __post_init__(self):
        eps = np.asarray(self.eps, dtype=float).ravel()
        if eps.size < 1 or np.any(eps < 0) or not np.all(np.isfinite(eps)):
            raise ValueError("per-dimension budgets must be finite and >= 0")
        if not self.total_eps > 0:
            raise ValueError("total budget must be positive")
        if not self.p >= 1:
            raise ValueError("metric order must satisfy p >= 1")
        object.__setattr__(self, "eps", eps)

    @property
    def n_dims(self) -> int:
        return self.eps.size


@dataclass(frozen=True)
class BudgetCheck:
    ok: bool
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def check_budget(budget: BudgetVector, tol: float = BUDGET_TOL) -> BudgetCheck:
    """Evaluate the composition certificate of a budget vector.

    Returns the aggregate (sum of eps_l^q, or max for p=1) next to the
    half-budget bound it must stay under.
    """
    half = budget.total_eps / 2.0
    if budget.p == 1:
        lhs = float(budget.eps.max())
        rhs = half
    else:
        q = dual_exponent(budget.p)
        lhs = float(np.sum(budget.eps**q))
        rhs = half**q
    return BudgetCheck(ok=lhs <= rhs + tol, lhs=lhs, rhs=rhs)


def surrogate_coefficients(partition: Partition, prior, loss, outputs: OutputDomain) -> SurrogateCoefficients:
    """Accumulate the linear surrogate objective over anchors x outputs.

    Each prior sample point x contributes w_g(x) * mass(x) * loss(x, y_k)
    to the corner anchors of its enclosing cell, where w_g are the convex
    corner weights of x. Anchors shared between cells accumulate
    contributions from sample points of every incident cell.
    """
    masses = np.asarray(prior.masses, dtype=float)
    points = np.asarray(prior.points, dtype=float)
    loss_mat = np.asarray(loss.loss_matrix(points, outputs), dtype=float)
    coeffs = np.zeros((partition.n_anchors, outputs.size))
    for i in range(points.shape[0]):
        m = locate_cell(partition, points[i])
        w = interpolation_weights(partition.cell(m), points[i]).weights
        rows = partition.cell_corner_anchors[m]
        coeffs[rows] += np.outer(w, masses[i] * loss_mat[i])
    return SurrogateCoefficients(matrix=coeffs)


def _table_program(objective: np.ndarray, n_rows: int, n_cols: int) -> LinearProgram:
    lp = LinearProgram(objective=objective.ravel(), var_shape=(n_rows, n_cols))
    for i in range(n_rows):
        lp.add_eq([(i * n_cols + k, 1.0) for k in range(n_cols)], 1.0)
    return lp


def _add_ratio_pair(lp: LinearProgram, i: int, j: int, bound: float, n_cols: int):
    # z(y|i) <= bound * z(y|j) and symmetrically, for every output column.
    for k in range(n_cols):
        lp.add_le([(i * n_cols + k, 1.0), (j * n_cols + k, -bound)], 0.0)
        lp.add_le([(j * n_cols + k, 1.0), (i * n_cols + k, -bound)], 0.0)


def build_approx_apo(
    partition: Partition,
    outputs: OutputDomain,
    budget: BudgetVector,
    coeffs: SurrogateCoefficients,
    validate_budget: bool = True,
) -> LinearProgram:
    """Anchor LP with per-axis ratio constraints on lattice neighbors.

    Variables are the table entries z(y_k | anchor_i); for every pair of
    anchors adjacent along axis l the two rows
    z(y|i) - exp(eps_l * delta_l) z(y|j) <= 0 (and the symmetric row) bound
    the log-gap by eps_l per unit of axis-l distance. One equality row per
    anchor normalizes the table.

    ``validate_budget=False`` skips the composition certificate; only the
    alternate arc conventions use this, and the synthesized mechanism then
    carries no end-to-end guarantee at the nominal total budget.
    """
    if validate_budget:
        chk = check_budget(budget)
        if not chk.ok:
            raise ValueError(
                f"budget violates composition: aggregate {chk.lhs:.6g} > bound {chk.rhs:.6g}"
            )
    if budget.n_dims != partition.n_dims:
        raise ValueError("budget dimension does not match partition")
    if coeffs.matrix.shape != (partition.n_anchors, outputs.size):
        raise ValueError("coefficient matrix shape mismatch")
    lp = _table_program(coeffs.matrix, partition.n_anchors, outputs.size)
    for pair in axis_neighbors(partition):
        bound = math.exp(budget.eps[pair.axis] * pair.gap)
        _add_ratio_pair(lp, pair.first, pair.second, bound, outputs.size)
    return lp


def solve_approx_apo(lp: LinearProgram) -> PerturbationTable:
    """Solve an anchor program and return the renormalized table.

    The uniform table is always feasible, so infeasibility signals a build
    bug and raises. Row sums may drift from 1 by at most
    PRE_NORMALIZATION_TOL before the final exact renormalization.
    """
    if lp.var_shape is None:
        raise ValueError("program carries no table shape")
    sol = solve_lp(lp)
    if not sol.is_optimal:
        raise SolverError(f"anchor program unexpectedly {sol.status}")
    probs = np.clip(sol.values.reshape(lp.var_shape), 0.0, None)
    sums = probs.sum(axis=1)
    drift = float(np.abs(sums - 1.0).max())
    if drift > PRE_NORMALIZATION_TOL:
        raise SolverError(f"row sums drifted by {drift:.3e} before renormalization")
    return PerturbationTable(probs / sums[:, None])


def build_aipo_relaxed(
    partition: Partition,
    outputs: OutputDomain,
    eps_total: float,
    p: float,
    coeffs: SurrogateCoefficients,
) -> LinearProgram:
    """All-pairs anchor LP bounding ratios by exp(eps * d_p(anchor_i, anchor_j)).

    No per-dimension budgets and no normalization slack are reserved, so
    interpolating the solved table does not inherit a distance-based
    guarantee between non-anchor points.
    """
    if eps_total < 0:
        raise ValueError("total budget must be non-negative")
    if coeffs.matrix.shape != (partition.n_anchors, outputs.size):
        raise ValueError("coefficient matrix shape mismatch")
    lp = _table_program(coeffs.matrix, partition.n_anchors, outputs.size)
    anchors = partition.anchors
    for i in range(partition.n_anchors):
        for j in range(i + 1, partition.n_anchors):
            bound = math.exp(eps_total * lp_distance(anchors[i], anchors[j], p))
            _add_ratio_pair(lp, i, j, bound, outputs.size)
    return lp


def build_coarse_lp(
    representatives,
    masses,
    outputs: OutputDomain,
    eps_total: float,
    p: float,
    loss,
) -> LinearProgram:
    """Classic discretized program over representative points.

    All-pairs ratio constraints use the representative-to-representative
    distance; the objective is the prior-weighted pointwise loss at the
    representatives themselves.
    """
    reps = np.atleast_2d(np.asarray(representatives, dtype=float))
    masses = np.asarray(masses, dtype=float)
    if len(np.unique(reps, axis=0)) != reps.shape[0]:
        raise ValueError("representatives must be distinct")
    if masses.shape[0] != reps.shape[0]:
        raise ValueError("one mass per representative required")
    if eps_total < 0:
        raise ValueError("total budget must be non-negative")
    loss_mat = np.asarray(loss.loss_matrix(reps, outputs), dtype=float)
    objective = masses[:, None] * loss_mat
    lp = _table_program(objective, reps.shape[0], outputs.size)
    for i in range(reps.shape[0]):
        for j in range(i + 1, reps.shape[0]):
            bound = math.exp(eps_total * lp_distance(reps[i], reps[j], p))
            _add_ratio_pair(lp, i, j, bound, outputs.size)
    return lp


def _max_cell_distance(cell_a, cell_b, p: float) -> float:
    """Largest lp distance between two axis-aligned orthotopes (at corners)."""
    gap_low = np.abs(cell_a.base_corner - cell_b.upper_corner)
    gap_high = np.abs(cell_a.upper_corner - cell_b.base_corner)
    worst = np.maximum(gap_low, gap_high)
    if math.isinf(p):
        return float(worst.max())
    return float(np.sum(worst**p) ** (1.0 / p))


def lower_bound(
    partition: Partition,
    outputs: OutputDomain,
    eps_total: float,
    p: float,
    loss,
    prior,
) -> float:
    """Universal lower bound on expected loss of any compliant mechanism.

    Relaxes the distance in the ratio constraints to the maximum inter-cell
    distance and aggregates the mechanism into one variable per (cell,
    output) with per-cell mass equal to the cell volume. The objective
    uses the cheapest prior-weighted loss among each cell's sample points,
    so the value bounds the discretized expected loss from below.
    """
    if eps_total < 0:
        raise ValueError("total budget must be non-negative")
    cells = partition.cells()
    volume = cells[0].volume
    n_cells, n_out = partition.n_cells, outputs.size
    points = np.asarray(prior.points, dtype=float)
    masses = np.asarray(prior.masses, dtype=float)
    loss_mat = np.asarray(loss.loss_matrix(points, outputs), dtype=float)

    floor_loss = np.full((n_cells, n_out), np.inf)
    for i in range(points.shape[0]):
        m = locate_cell(partition, points[i])
        floor_loss[m] = np.minimum(floor_loss[m], masses[i] * loss_mat[i])
    # Cells without sample points contribute nothing to the discretized loss.
    floor_loss[~np.isfinite(floor_loss)] = 0.0

    lp = LinearProgram(objective=floor_loss.ravel(), var_shape=(n_cells, n_out))
    for m in range(n_cells):
        lp.add_eq([(m * n_out + k, 1.0) for k in range(n_out)], volume)
    for m in range(n_cells):
        for m2 in range(m + 1, n_cells):
            bound = math.exp(eps_total * _max_cell_distance(cells[m], cells[m2], p))
            _add_ratio_pair(lp, m, m2, bound, n_out)
    sol = solve_lp(lp)
    if not sol.is_optimal:
        raise SolverError(f"lower-bound program unexpectedly {sol.status}")
    return float(sol.objective_value)
