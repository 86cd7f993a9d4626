"""Distances between clusterings living on a shared finite carrier.

All distances are functions of the overlap table ``P(C_i & D_j)``.  Every
distance function accepts either two `Partition` objects or a single
precomputed `OverlapTable`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assignment import solve_lbap, solve_lsap
from .errors import CarrierMismatchError, InputError
from .mode_seek import UNASSIGNED, Partition


@dataclass
class OverlapTable:
    masses: np.ndarray
    row_ids: list
    col_ids: list
    unassigned_mass: float = 0.0

    def __post_init__(self):
        self.masses = np.atleast_2d(np.asarray(self.masses, dtype=float))
        if self.masses.size == 0:
            self.masses = self.masses.reshape(len(self.row_ids), len(self.col_ids))
        if self.masses.shape != (len(self.row_ids), len(self.col_ids)):
            raise InputError("overlap masses do not match the cluster id lists")
        if np.any(self.masses < 0):
            raise InputError("overlap masses must be nonnegative")

    @classmethod
    def from_masses(cls, masses) -> "OverlapTable":
        M = np.atleast_2d(np.asarray(masses, dtype=float))
        return cls(M, list(range(M.shape[0])), list(range(M.shape[1])))

    @property
    def row_marginals(self) -> np.ndarray:
        return self.masses.sum(axis=1)

    @property
    def col_marginals(self) -> np.ndarray:
        return self.masses.sum(axis=0)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def symmetric_difference(self) -> np.ndarray:
        """``P(C_i) + P(D_j) - 2 P(C_i & D_j)`` (clipped at zero against rounding)."""
        sd = self.row_marginals[:, None] + self.col_marginals[None, :] - 2.0 * self.masses
        return np.maximum(sd, 0.0)

    def transposed(self) -> "OverlapTable":
        return OverlapTable(self.masses.T.copy(), list(self.col_ids), list(self.row_ids), self.unassigned_mass)


def _count_table(a: np.ndarray, b: np.ndarray, rows: list, cols: list) -> np.ndarray:
    ri = {c: k for k, c in enumerate(rows)}
    ci = {c: k for k, c in enumerate(cols)}
    counts = np.zeros((len(rows), len(cols)), dtype=np.int64)
    np.add.at(counts, ([ri[x] for x in a], [ci[x] for x in b]), 1)
    return counts


def overlap_from_partitions(C: Partition, D: Partition) -> OverlapTable:
    """Tabulate ``P(C_i & D_j)`` over atoms assigned in both partitions."""
    if C.atoms.shape != D.atoms.shape or not np.array_equal(C.atoms, D.atoms) \
            or not np.array_equal(C.weights, D.weights):
        raise CarrierMismatchError("partitions do not share the same carrier atoms and weights")
    keep = (C.labels != UNASSIGNED) & (D.labels != UNASSIGNED)
    rows, cols = C.cluster_ids, D.cluster_ids
    unassigned = float(C.weights[~keep].sum())
    w = C.weights
    n = len(w)
    if n and np.all(w == w[0]):
        # uniform carrier: mass = count / n, identical to the empirical table
        counts = _count_table(C.labels[keep], D.labels[keep], rows, cols)
        masses = counts / n
    else:
        ri = {c: k for k, c in enumerate(rows)}
        ci = {c: k for k, c in enumerate(cols)}
        masses = np.zeros((len(rows), len(cols)))
        np.add.at(masses, ([ri[x] for x in C.labels[keep]], [ci[x] for x in D.labels[keep]]), w[keep])
    return OverlapTable(masses, rows, cols, unassigned)


def empirical_overlap(labels_c, labels_d) -> OverlapTable:
    """Overlap table of two clusterings of the same ``n`` data points (mass ``count / n``).

    ``UNASSIGNED`` (-1) labels are excluded and their share reported.
    """
    a = np.asarray(labels_c).reshape(-1)
    b = np.asarray(labels_d).reshape(-1)
    if a.shape != b.shape:
        raise InputError(f"label vectors differ in length: {a.size} vs {b.size}")
    n = a.size
    if n == 0:
        raise InputError("label vectors are empty")
    keep = (a != UNASSIGNED) & (b != UNASSIGNED)
    rows = sorted(np.unique(a[a != UNASSIGNED]).tolist())
    cols = sorted(np.unique(b[b != UNASSIGNED]).tolist())
    counts = _count_table(a[keep], b[keep], rows, cols)
    return OverlapTable(counts / n, rows, cols, float(np.sum(~keep)) / n)


def _table(C, D) -> OverlapTable:
    if isinstance(C, OverlapTable):
        if D is not None:
            raise InputError("pass either two partitions or one overlap table")
        return C
    if D is None:
        raise InputError("second partition missing")
    return overlap_from_partitions(C, D)


# ---------------------------------------------------------------------------
# d_p family
# ---------------------------------------------------------------------------


def _dp_solution(tab: OverlapTable, p: float):
    r, s = tab.masses.shape
    if r != s:
        raise InputError(f"d_p needs equal cluster counts (got {r} and {s}); use dist_transfer")
    if not (p >= 1):
        raise InputError(f"p must be >= 1 or inf, got {p!r}")
    cost = tab.symmetric_difference()
    if math.isinf(p):
        sigma, value = solve_lbap(cost)
    elif p == 1:
        sigma, value = solve_lsap(cost)
    else:
        sigma, value = solve_lsap(cost ** p)
        value = float(value ** (1.0 / p))
    return sigma, value, cost


def dist_dp_family(C, D=None, p: float = 1.0) -> float:
    """``min_sigma || (P(C_i triangle D_sigma(i)))_i ||_p`` for equal cluster counts.

    ``p = inf`` gives the bottleneck version.  For different counts use
    `dist_transfer`, which pads with empty clusters.
    """
    return _dp_solution(_table(C, D), p)[1]


# ---------------------------------------------------------------------------
# Transfer distance d_P
# ---------------------------------------------------------------------------


@dataclass
class TransferResult:
    distance: float
    pairs: list = field(default_factory=list)  # (C id or None, D id or None, mass moved)
    unmatched_penalty: float = 0.0
    unassigned_mass: float = 0.0

    def to_dict(self) -> dict:
        return {
            "distance": self.distance,
            "optimal_matching": [
                {"c": c, "d": d, "mass_moved": m} for c, d, m in self.pairs
            ],
            "unmatched_penalty": self.unmatched_penalty,
            "unassigned_mass": self.unassigned_mass,
        }


def padded_cost(tab: OverlapTable) -> np.ndarray:
    """Symmetric-difference costs with empty-cluster rows appended (requires r <= s)."""
    r, s = tab.masses.shape
    cost = tab.symmetric_difference()
    if r < s:
        cost = np.vstack([cost, np.tile(tab.col_marginals, (s - r, 1))])
    return cost


def transfer_details(C, D=None) -> TransferResult:
    """Transfer distance with its optimal matching.

    The smaller partition is padded with empty clusters; each empty cluster
    matched to ``D_j`` costs ``P(D_j)`` (mass that has nowhere to come from).
    """
    tab = _table(C, D)
    swapped = tab.masses.shape[0] > tab.masses.shape[1]
    work = tab.transposed() if swapped else tab
    r, s = work.masses.shape
    if s == 0:
        return TransferResult(0.0, [], 0.0, tab.unassigned_mass)
    cost = padded_cost(work)
    sigma, total = solve_lsap(cost)
    pairs = []
    penalty = 0.0
    for i, j in enumerate(sigma):
        moved = 0.5 * float(cost[i, j])
        row_id = work.row_ids[i] if i < r else None
        col_id = work.col_ids[j]
        if row_id is None:
            penalty += moved
        pair = (col_id, row_id, moved) if swapped else (row_id, col_id, moved)
        pairs.append(pair)
    return TransferResult(0.5 * total, pairs, penalty, tab.unassigned_mass)


def dist_transfer(C, D=None) -> float:
    """Transfer distance ``d_P``: half the padded optimal sum of symmetric differences."""
    return transfer_details(C, D).distance


# ---------------------------------------------------------------------------
# Hausdorff distance
# ---------------------------------------------------------------------------


def dist_hausdorff(C, D=None) -> float:
    """Largest row-wise or column-wise minimum of the symmetric-difference matrix."""
    tab = _table(C, D)
    sd = tab.symmetric_difference()
    if sd.size == 0:
        return 0.0
    return float(max(sd.min(axis=1).max(), sd.min(axis=0).max()))


def distance_report(C, D=None, metric: str = "dP") -> dict:
    """JSON-ready report for the CLI: distance plus matching details where meaningful."""
    tab = _table(C, D)
    if metric == "dP":
        return transfer_details(tab).to_dict()
    if metric == "dH":
        return {"distance": dist_hausdorff(tab), "optimal_matching": [], "unmatched_penalty": 0.0,
                "unassigned_mass": tab.unassigned_mass}
    if metric == "dinf":
        p = math.inf
    elif metric.startswith("dp:"):
        try:
            p = float(metric[3:])
        except ValueError:
            raise InputError(f"bad metric {metric!r}; expected dp:<p>") from None
    else:
        raise InputError(f"unknown metric {metric!r}; expected dP, dH, dinf or dp:<p>")
    sigma, value, cost = _dp_solution(tab, p)
    pairs = [{"c": tab.row_ids[i], "d": tab.col_ids[j], "mass_moved": float(cost[i, j])}
             for i, j in enumerate(sigma)]
    return {"distance": value, "optimal_matching": pairs, "unmatched_penalty": 0.0,
            "unassigned_mass": tab.unassigned_mass}
