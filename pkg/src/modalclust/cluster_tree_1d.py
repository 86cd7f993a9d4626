"""Level sets and the cluster tree of a univariate density on a grid.

Everything here works on a fixed grid: the density is evaluated once at the
grid points and level sets are maximal runs of grid points with ``f >= lam``.
Probability contents use midpoint quadrature over the grid cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .density_models import NormalMixture
from .errors import DegenerateDensityError, InputError
from .mode_seek import UNASSIGNED, Partition, _cell_widths

DEFAULT_GRID_SIZE = 4096


def default_grid(model, num: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """``num`` points over [smallest centre - 4 s, largest centre + 4 s].

    For mixtures the centres are the component means and ``s`` the largest
    component standard deviation; for kernel estimators the data points and
    the bandwidth.
    """
    _check_1d(model)
    if isinstance(model, NormalMixture):
        centres = model.means[:, 0]
        s = float(np.sqrt(np.max(model.covs[:, 0, 0])))
    else:
        centres = model.data[:, 0]
        s = float(np.sqrt(model.bandwidth[0, 0]))
    return np.linspace(centres.min() - 4 * s, centres.max() + 4 * s, num)


def _check_1d(model):
    if getattr(model, "dim", None) != 1:
        raise InputError("cluster trees are built for univariate densities only")


@dataclass
class GridDensity:
    """Density values and midpoint cell widths on a grid."""

    x: np.ndarray
    f: np.ndarray
    dx: np.ndarray

    @classmethod
    def evaluate(cls, model, grid=None) -> "GridDensity":
        _check_1d(model)
        x = default_grid(model) if grid is None else np.asarray(grid, dtype=float).reshape(-1)
        if x.size < 3 or np.any(np.diff(x) <= 0):
            raise InputError("grid must be strictly increasing with at least 3 points")
        f = np.asarray(model.density(x[:, None]), dtype=float)
        return cls(x, f, _cell_widths(x))

    def mass(self, lo: int, hi: int) -> float:
        return float(np.sum(self.f[lo:hi + 1] * self.dx[lo:hi + 1]))


def _runs(mask: np.ndarray, offset: int = 0) -> list:
    """Inclusive index runs where ``mask`` is true."""
    if mask.size == 0:
        return []
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return [(int(a) + offset, int(b) - 1 + offset) for a, b in zip(edges[::2], edges[1::2])]


# ---------------------------------------------------------------------------
# Level sets
# ---------------------------------------------------------------------------


@dataclass
class LevelSet1D:
    level: float
    runs: list  # inclusive grid index pairs
    intervals: list  # (a, b) coordinates of each run
    content: float

    @property
    def n_components(self) -> int:
        return len(self.runs)


def _level_set(gd: GridDensity, lam: float) -> LevelSet1D:
    runs = _runs(gd.f >= lam)
    content = sum(gd.mass(a, b) for a, b in runs)
    return LevelSet1D(float(lam), runs, [(float(gd.x[a]), float(gd.x[b])) for a, b in runs], content)


def level_set(model, lam: float, grid=None) -> LevelSet1D:
    """Connected components of ``{x : f(x) >= lam}`` on the grid."""
    if lam < 0:
        raise InputError(f"level must be nonnegative, got {lam!r}")
    return _level_set(GridDensity.evaluate(model, grid), lam)


def component_counts(model, levels=None, grid=None):
    """Number of level-set components at each level (all grid density values by default)."""
    gd = GridDensity.evaluate(model, grid)
    if levels is None:
        levels = np.unique(gd.f)
    levels = np.asarray(levels, dtype=float)
    counts = np.array([len(_runs(gd.f >= lam)) for lam in levels])
    return levels, counts


def coverage_level(model, p: float, grid=None) -> float:
    """Largest level whose level set has probability content greater than ``p``.

    Content is monotone in the level, so the threshold is located by binary
    search over the sorted grid density values.
    """
    if not 0 < p < 1:
        raise InputError(f"coverage probability must lie in (0, 1), got {p!r}")
    gd = GridDensity.evaluate(model, grid)
    order = np.argsort(-gd.f, kind="stable")
    fs = gd.f[order]
    content = np.cumsum(fs * gd.dx[order])
    k = int(np.searchsorted(content, p, side="right"))
    if k >= len(fs):
        return float(fs[-1])
    return float(fs[k])


# ---------------------------------------------------------------------------
# Local minima and plateaus
# ---------------------------------------------------------------------------


def _flat_runs(f: np.ndarray) -> list:
    """Maximal runs ``(a, b)`` of exactly equal consecutive values, length >= 2."""
    eq = f[1:] == f[:-1]
    return [(a, b + 1) for a, b in _runs(eq)]


def _check_plateaus(gd: GridDensity):
    n = len(gd.f)
    for a, b in _flat_runs(gd.f):
        if a == 0 or b == n - 1 or b - a < 2:
            continue
        left, right, v = gd.f[a - 1], gd.f[b + 1], gd.f[a]
        if (left > v and right > v) or (left < v and right < v):
            raise DegenerateDensityError(
                f"density is flat at a critical level on [{gd.x[a]:.6g}, {gd.x[b]:.6g}]",
                (float(gd.x[a]), float(gd.x[b])))


def _minimum_runs(f: np.ndarray, lo: int, hi: int) -> list:
    """Runs of grid local minima strictly inside ``[lo, hi]``.

    A minimum is one point with both neighbours strictly larger, or two
    equal adjacent points flanked by larger values (a minimum between nodes).
    """
    out = []
    k = lo + 1
    while k < hi:
        if f[k] < f[k - 1]:
            b = k
            if b + 1 < hi and f[b + 1] == f[k]:
                b += 1
            if b + 1 <= hi and f[b + 1] > f[b]:
                out.append((k, b))
            k = b + 1
        else:
            k += 1
    return out


def _refine_minimum(model, gd: GridDensity, run, iters: int = 200) -> float:
    """Locate the minimum inside a grid run by bisection on the derivative."""
    a, b = run
    lo, hi = gd.x[a - 1], gd.x[b + 1]
    if not hasattr(model, "gradient"):
        return float(0.5 * (gd.x[a] + gd.x[b]))

    def deriv(t):
        return float(np.asarray(model.gradient(np.array([t]))).reshape(-1)[0])

    d_lo = deriv(lo)
    if not (d_lo < 0 < deriv(hi)):
        return float(0.5 * (gd.x[a] + gd.x[b]))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if deriv(mid) < 0:
            lo = mid
        else:
            hi = mid
    return float(0.5 * (lo + hi))


# ---------------------------------------------------------------------------
# Cluster tree
# ---------------------------------------------------------------------------


@dataclass
class TreeNode:
    """A cluster: an inclusive grid index range born at ``level``."""

    lo: int
    hi: int
    level: float
    split_level: Optional[float] = None
    split_runs: list = field(default_factory=list)
    split_points: list = field(default_factory=list)
    cores: list = field(default_factory=list)
    fluff: list = field(default_factory=list)  # (run, index of the core it joins)
    children: list = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class ClusterTree1D:
    root: TreeNode
    grid: GridDensity

    def leaves(self) -> list:
        out = []

        def walk(node):
            if node.is_leaf:
                out.append(node)
            for c in node.children:
                walk(c)

        walk(self.root)
        return sorted(out, key=lambda nd: nd.lo)

    def splits(self) -> list:
        out = []

        def walk(node):
            if not node.is_leaf:
                out.append(node)
            for c in node.children:
                walk(c)

        walk(self.root)
        return out

    @property
    def split_points(self) -> list:
        return sorted(p for nd in self.splits() for p in nd.split_points)

    @property
    def split_indices(self) -> list:
        return sorted(k for nd in self.splits() for a, b in nd.split_runs for k in range(a, b + 1))

    def labels(self) -> np.ndarray:
        lab = np.full(len(self.grid.x), UNASSIGNED, dtype=int)
        for i, leaf in enumerate(self.leaves()):
            lab[leaf.lo:leaf.hi + 1] = i
        return lab

    def partition(self) -> Partition:
        return _grid_partition(self.grid, self.labels())

    def to_dict(self) -> dict:
        x = self.grid.x

        def enc(node):
            return {
                "interval": [float(x[node.lo]), float(x[node.hi])],
                "level": node.level,
                "split_level": node.split_level,
                "split_points": node.split_points,
                "children": [enc(c) for c in node.children],
            }

        return enc(self.root)


def _split_node(model, gd: GridDensity, node: TreeNode):
    f, x = gd.f, gd.x
    minima = _minimum_runs(f, node.lo, node.hi)
    if not minima:
        return
    lam = min(float(f[a]) for a, _ in minima)
    split_runs = [r for r in minima if f[r[0]] == lam]
    split_idx = {k for a, b in split_runs for k in range(a, b + 1)}
    node.split_level = lam
    node.split_runs = split_runs
    node.split_points = [_refine_minimum(model, gd, r) for r in split_runs]

    seg = slice(node.lo, node.hi + 1)
    node.cores = _runs(f[seg] > lam, offset=node.lo)
    core_lo = np.array([x[a] for a, _ in node.cores])
    core_hi = np.array([x[b] for _, b in node.cores])
    owner = np.full(node.hi - node.lo + 1, -1, dtype=int)
    for c, (a, b) in enumerate(node.cores):
        owner[a - node.lo:b - node.lo + 1] = c
    # fluff joins the core with the nearest endpoint; split atoms stay out
    for k in range(node.lo, node.hi + 1):
        if owner[k - node.lo] >= 0 or k in split_idx:
            continue
        dist = np.where(x[k] < core_lo, core_lo - x[k], np.where(x[k] > core_hi, x[k] - core_hi, 0.0))
        best = np.flatnonzero(dist == dist.min())
        owner[k - node.lo] = best[0] if len(best) == 1 else -1
    for a, b in _runs(owner < 0, offset=node.lo):
        if not all(k in split_idx for k in range(a, b + 1)):
            raise DegenerateDensityError(
                f"fluff on [{x[a]:.6g}, {x[b]:.6g}] is equidistant from two cores", (float(x[a]), float(x[b])))
    for c in range(len(node.cores)):
        member = np.flatnonzero(owner == c) + node.lo
        core = node.cores[c]
        for run in _runs(owner == c, offset=node.lo):
            if run != core:
                node.fluff.append((run, c))
        child = TreeNode(int(member.min()), int(member.max()), lam)
        node.children.append(child)
    for child in node.children:
        _split_node(model, gd, child)


def build_tree(model, grid=None) -> ClusterTree1D:
    """Cluster tree of a univariate density on a grid.

    Starting from the whole grid (the 0-level set), each node splits at the
    lowest local minimum strictly inside it: the level-set components just
    above that level are the cores, and the remaining atoms (fluff) join the
    nearest core.  The minimum atoms themselves are left unassigned.
    """
    gd = GridDensity.evaluate(model, grid)
    _check_plateaus(gd)
    root = TreeNode(0, len(gd.x) - 1, 0.0)
    _split_node(model, gd, root)
    return ClusterTree1D(root, gd)


def _grid_partition(gd: GridDensity, labels: np.ndarray) -> Partition:
    w = gd.f * gd.dx
    w = w / w.sum()
    clusters = {int(c): None for c in np.unique(labels[labels != UNASSIGNED])}
    return Partition(gd.x[:, None], w, labels, clusters, "grid")


@dataclass
class MinimaPartition:
    partition: Partition
    minima_runs: list
    minima: list  # refined locations

    @property
    def boundaries(self) -> list:
        return self.minima


def minima_partition(model, grid=None) -> MinimaPartition:
    """Intervals between consecutive local minima of the density."""
    gd = GridDensity.evaluate(model, grid)
    _check_plateaus(gd)
    runs = _minimum_runs(gd.f, 0, len(gd.f) - 1)
    labels = np.empty(len(gd.x), dtype=int)
    cut = 0
    lab = 0
    for a, b in runs:
        labels[cut:a] = lab
        labels[a:b + 1] = UNASSIGNED
        cut = b + 1
        lab += 1
    labels[cut:] = lab
    return MinimaPartition(_grid_partition(gd, labels), runs, [_refine_minimum(model, gd, r) for r in runs])
