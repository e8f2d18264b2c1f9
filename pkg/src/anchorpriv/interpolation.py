"""Log-convex interpolation of anchor tables over the continuous domain.

An anchor table fixes output distributions at cell corners; between
corners each log-probability is the corner-weighted average of anchor
log-probabilities (a weighted geometric mean of the probabilities), and
the resulting scores are normalized into a distribution. All arithmetic
happens in log space and is exponentiated once.

Exact zeros in an anchor row would put -inf into the interpolant, so
tables are floored at PROB_FLOOR and renormalized when a mechanism is
built. Flooring is a contraction in log space (it never widens a pairwise
log-gap), so it cannot break a ratio constraint the table already
satisfies; it perturbs each row's normalizer by at most K * PROB_FLOOR.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .apo import BudgetVector, OutputDomain, PerturbationTable
from .geometry import Partition, as_point, interpolation_weights, locate_cell

__all__ = [
    "PROB_FLOOR",
    "logcvx_1d",
    "Mechanism",
    "f_int_unnormalized",
    "distribution_at",
    "sample",
]

PROB_FLOOR = 1e-12


def logcvx_1d(z_lo: float, z_hi: float, lam: float) -> float:
    """Weighted geometric mean exp(lam ln z_lo + (1 - lam) ln z_hi).

    Endpoints are exact: lam = 1 returns z_lo, lam = 0 returns z_hi.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"interpolation coefficient must be in [0, 1], got {lam}")
    if z_lo <= 0.0 or z_hi <= 0.0:
        raise ValueError("probabilities must be strictly positive; floor the table first")
    if lam == 1.0:
        return float(z_lo)
    if lam == 0.0:
        return float(z_hi)
    return float(math.exp(lam * math.log(z_lo) + (1.0 - lam) * math.log(z_hi)))


class Mechanism:
    """Sampleable perturbation mechanism over a partitioned domain.

    Wraps a partition, an anchor table (floored to keep logs finite), the
    output candidates and the budget provenance. Instances are immutable
    after construction and safe to share across worker threads.
    """

    def __init__(
        self,
        partition: Partition,
        table: PerturbationTable,
        outputs: OutputDomain,
        budget: BudgetVector | None = None,
        total_eps: float | None = None,
        metric_p: float | None = None,
        floor: float | None = PROB_FLOOR,
    ):
        if table.n_rows != partition.n_anchors:
            raise ValueError("table rows must be indexed by partition anchors")
        if table.n_outputs != outputs.size:
            raise ValueError("table columns must match output candidates")
        probs = table.probs
        if floor is not None:
            probs = np.maximum(probs, floor)
            probs = probs / probs.sum(axis=1, keepdims=True)
        if np.any(probs <= 0):
            raise ValueError("anchor probabilities must be positive (set a floor)")
        self.partition = partition
        self.table = PerturbationTable(probs)
        self.outputs = outputs
        self.budget = budget
        self.metric_p = metric_p if metric_p is not None else (budget.p if budget else None)
        self.total_eps = total_eps if total_eps is not None else (
            budget.total_eps if budget else None
        )
        self._log_table = np.log(self.table.probs)

    @property
    def bounds(self):
        return self.partition.bounds

    @property
    def n_outputs(self) -> int:
        return self.outputs.size

    def _log_scores(self, x) -> np.ndarray:
        m = locate_cell(self.partition, x)
        w = interpolation_weights(self.partition.cell(m), x).weights
        rows = self.partition.cell_corner_anchors[m]
        return w @ self._log_table[rows]

    def log_distribution_at(self, x) -> np.ndarray:
        s = self._log_scores(x)
        smax = s.max()
        return s - (smax + math.log(np.exp(s - smax).sum()))

    def distribution_at(self, x) -> np.ndarray:
        """Normalized output distribution at ``x``; sums to one.

        Continuous across cell faces: a shared face fixes the weights of
        the corners both cells have in common and zeroes the rest.
        """
        return np.exp(self.log_distribution_at(x))

    def unnormalized_at(self, x) -> np.ndarray:
        """Interpolated scores before normalization, one per output."""
        return np.exp(self._log_scores(x))

    def sample(self, x, rng) -> int:
        """Draw one output index by inverse CDF in stored candidate order."""
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        probs = self.distribution_at(x)
        cum = np.cumsum(probs)
        idx = int(np.searchsorted(cum, rng.random(), side="right"))
        return min(idx, self.n_outputs - 1)

    def to_json_dict(self) -> dict:
        lo, hi = self.partition.bounds
        return {
            "format": "anchorpriv-mechanism",
            "version": 1,
            "metric_p": None if self.metric_p is None else float(self.metric_p),
            "total_eps": None if self.total_eps is None else float(self.total_eps),
            "budget_eps": None if self.budget is None else [float(v) for v in self.budget.eps],
            "partition": {
                "lower": [float(v) for v in lo],
                "upper": [float(v) for v in hi],
                "counts": [int(c) for c in self.partition.counts],
            },
            "outputs": {
                "points": [[float(v) for v in pt] for pt in self.outputs.points],
                "labels": list(self.outputs.labels),
            },
            "table": self.table.to_json_dict(),
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json_dict(cls, d: dict) -> "Mechanism":
        part = Partition(
            d["partition"]["lower"], d["partition"]["upper"], d["partition"]["counts"]
        )
        outputs = OutputDomain(
            points=np.asarray(d["outputs"]["points"], dtype=float),
            labels=tuple(d["outputs"]["labels"]),
        )
        table = PerturbationTable.from_json_dict(d["table"])
        budget = None
        if d.get("budget_eps") is not None:
            budget = BudgetVector(
                eps=np.asarray(d["budget_eps"], dtype=float),
                total_eps=float(d["total_eps"]),
                p=float(d["metric_p"]),
            )
        # Stored tables were floored before saving; do not re-floor, so a
        # load/save cycle reproduces the file bit for bit.
        return cls(
            part,
            table,
            outputs,
            budget=budget,
            total_eps=d.get("total_eps"),
            metric_p=d.get("metric_p"),
            floor=None,
        )

    @classmethod
    def load(cls, path) -> "Mechanism":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def f_int_unnormalized(x, y_index: int, mech: Mechanism) -> float:
    """Interpolated score of one output: prod_g z(y | corner_g)^{w_g}."""
    return float(mech.unnormalized_at(as_point(x))[y_index])


def distribution_at(x, mech: Mechanism) -> np.ndarray:
    """Normalized interpolated distribution at ``x`` (module-level form)."""
    return mech.distribution_at(as_point(x))


def sample(x, mech: Mechanism, rng) -> int:
    """Draw an output index at ``x``; deterministic for a fixed seed."""
    return mech.sample(as_point(x), rng)
