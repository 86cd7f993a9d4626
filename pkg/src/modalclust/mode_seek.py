"""Mean-shift mode seeking and basin-of-attraction partitions.

The population cluster of a mode is the set of starting points whose
steepest-ascent path ends at it.  Here ascent is realised by the mean-shift
recursion ``y <- y + A Df(y)/f(y)`` with a step matrix ``A`` that guarantees
monotone convergence:

* ``"sigma_star"`` for normal mixtures, ``A = (sum_l alpha_l(y) Sigma_l^{-1})^{-1}``;
* ``"bandwidth"`` for kernel estimators, ``A = H`` (the weighted-mean form);
* ``"fixed"`` with a user matrix (no convergence guarantee).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .density_models import (
    CriticalPoint,
    KernelModel,
    NormalMixture,
    _as_points,
    kind_from_index,
    morse_index,
)
from .errors import InputError, NotCriticalPointError, NumericalError, ShiftUndefinedError

logger = logging.getLogger(__name__)

UNASSIGNED = -1

STEP_RULES = ("auto", "sigma_star", "bandwidth", "fixed")


@dataclass(frozen=True)
class ShiftConfig:
    """Stopping and merging parameters for mean-shift ascent.

    Tolerances left as ``None`` are resolved against the problem at hand:
    ``grad_tol = grad_rtol * density scale`` and
    ``step_tol = step_rtol * carrier diameter``; the merge radius defaults to
    ``merge_rtol * carrier diameter``.
    """

    step_rule: str = "auto"
    step_matrix: Optional[np.ndarray] = None
    grad_tol: Optional[float] = None
    step_tol: Optional[float] = None
    max_iter: int = 10_000
    merge_radius: Optional[float] = None
    grad_rtol: float = 1e-8
    step_rtol: float = 1e-8
    merge_rtol: float = 1e-3

    def __post_init__(self):
        if self.step_rule not in STEP_RULES:
            raise InputError(f"unknown step rule {self.step_rule!r}; expected one of {STEP_RULES}")
        if self.step_rule == "fixed" and self.step_matrix is None:
            raise InputError("step rule 'fixed' needs a step_matrix")
        for name in ("grad_tol", "step_tol", "merge_radius"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise InputError(f"{name} must be positive, got {v!r}")
        for name in ("grad_rtol", "step_rtol", "merge_rtol"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InputError("max_iter must be a positive integer")

    def resolve(self, model, starts: np.ndarray) -> "ShiftConfig":
        """Fill in absolute tolerances from the starting points."""
        starts = np.atleast_2d(starts)
        diameter = carrier_diameter(starts)
        if diameter == 0.0:
            diameter = carrier_diameter(_model_points(model)) or 1.0
        updates = {}
        if self.grad_tol is None:
            scale = float(np.max(model.density(starts)))
            scale = max(scale, float(np.max(model.density(_model_points(model)))))
            updates["grad_tol"] = self.grad_rtol * scale
        if self.step_tol is None:
            updates["step_tol"] = self.step_rtol * diameter
        if self.merge_radius is None:
            updates["merge_radius"] = self.merge_rtol * diameter
        return replace(self, **updates) if updates else self

    def halved(self) -> "ShiftConfig":
        """Same configuration with both convergence tolerances halved."""
        return replace(self, grad_tol=self.grad_tol / 2, step_tol=self.step_tol / 2)


def _model_points(model) -> np.ndarray:
    if isinstance(model, NormalMixture):
        return model.means
    return model.data


def carrier_diameter(points) -> float:
    """Length of the diagonal of the bounding box of ``points``."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if P.shape[0] == 0:
        return 0.0
    return float(np.linalg.norm(P.max(axis=0) - P.min(axis=0)))


def _resolve_rule(model, config: ShiftConfig) -> str:
    rule = config.step_rule
    if rule == "auto":
        return "sigma_star" if isinstance(model, NormalMixture) else "bandwidth"
    if rule == "sigma_star" and not isinstance(model, NormalMixture):
        raise InputError("step rule 'sigma_star' applies to normal mixtures only")
    if rule == "bandwidth" and not isinstance(model, KernelModel):
        raise InputError("step rule 'bandwidth' applies to kernel models only")
    return rule


def _step_batch(model, X: np.ndarray, rule: str, config: ShiftConfig):
    """One mean-shift step for every row of ``X``.

    Returns ``(Y, log_f, grad_norm)`` where the density and gradient norm are
    those at ``X``.
    """
    if rule == "sigma_star":
        Y, logf, ngrad = model.sigma_star_step(X)
    elif rule == "bandwidth":
        Y, logf, ngrad = model.bandwidth_step(X)
    else:
        logf = np.atleast_1d(model.log_density(X))
        if np.any(~np.isfinite(logf)):
            raise ShiftUndefinedError("density vanishes at a mean-shift iterate")
        ngrad = np.atleast_2d(model.normalized_gradient(X))
        A = np.atleast_2d(np.asarray(config.step_matrix, dtype=float))
        Y = X + ngrad @ A.T
    grad_norm = np.exp(logf) * np.linalg.norm(ngrad, axis=1)
    return Y, logf, grad_norm


def shift_step(model, y, config: ShiftConfig = ShiftConfig()):
    """One mean-shift update ``y + A Df(y)/f(y)`` with ``A`` given by the step rule."""
    X, single = _as_points(y, model.dim)
    rule = _resolve_rule(model, config)
    if rule == "fixed":
        A = np.atleast_2d(np.asarray(config.step_matrix, dtype=float))
        if A.shape != (model.dim, model.dim):
            raise InputError(f"step_matrix must be {model.dim}x{model.dim}")
    Y, logf, _ = _step_batch(model, X, rule, config)
    if not np.all(np.isfinite(logf)):
        raise ShiftUndefinedError("density vanishes at the requested point")
    return Y[0] if single else Y


@dataclass
class AscentResult:
    """Terminal points of a batch of ascents."""

    terminals: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    log_density: np.ndarray
    # smallest f(y_{j+1}) - f(y_j) seen along each trajectory (only when tracked)
    min_increase: Optional[np.ndarray] = None


def ascend_many(model, starts, config: ShiftConfig = ShiftConfig(), track_density: bool = False,
                resolved: bool = False) -> AscentResult:
    """Run mean-shift ascent from every row of ``starts`` simultaneously."""
    Y, _ = _as_points(starts, model.dim)
    Y = Y.copy()
    if not resolved:
        config = config.resolve(model, Y)
    rule = _resolve_rule(model, config)
    m = Y.shape[0]
    iterations = np.zeros(m, dtype=int)
    converged = np.zeros(m, dtype=bool)
    min_inc = np.full(m, np.inf) if track_density else None
    f_prev = np.full(m, np.nan)
    active = np.arange(m)
    for _ in range(config.max_iter):
        if active.size == 0:
            break
        X = Y[active]
        Ynew, logf, gnorm = _step_batch(model, X, rule, config)
        if not np.all(np.isfinite(Ynew)):
            raise NumericalError("NaN encountered during mean-shift ascent")
        if track_density:
            f = np.exp(logf)
            inc = f - f_prev[active]
            seen = ~np.isnan(inc)
            min_inc[active[seen]] = np.minimum(min_inc[active[seen]], inc[seen])
            f_prev[active] = f
        disp = np.linalg.norm(Ynew - X, axis=1)
        Y[active] = Ynew
        iterations[active] += 1
        done = (gnorm <= config.grad_tol) & (disp <= config.step_tol)
        converged[active[done]] = True
        active = active[~done]
    logf_final = np.atleast_1d(model.log_density(Y))
    if track_density:
        inc = np.exp(logf_final) - f_prev
        seen = ~np.isnan(inc)
        min_inc[seen] = np.minimum(min_inc[seen], inc[seen])
    return AscentResult(Y, iterations, converged, logf_final, min_inc)


def ascend(model, y0, config: ShiftConfig = ShiftConfig()):
    """Ascend from ``y0``; returns ``(terminal, iterations, converged)``.

    Non-convergence within ``max_iter`` is reported through the flag, not raised.
    """
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    res = ascend_many(model, y0[None, :], config)
    return res.terminals[0], int(res.iterations[0]), bool(res.converged[0])


def trace_ascent(model, y0, config: ShiftConfig = ShiftConfig()):
    """Full trajectory ``(iterates, densities)`` of a single ascent (for diagnostics)."""
    y = np.asarray(y0, dtype=float).reshape(1, -1)
    config = config.resolve(model, y)
    rule = _resolve_rule(model, config)
    path = [y[0].copy()]
    dens = []
    for _ in range(config.max_iter):
        ynew, logf, gnorm = _step_batch(model, y, rule, config)
        dens.append(float(np.exp(logf[0])))
        disp = float(np.linalg.norm(ynew - y))
        y = ynew
        path.append(y[0].copy())
        if gnorm[0] <= config.grad_tol and disp <= config.step_tol:
            break
    dens.append(float(model.density(y[0])))
    return np.array(path), np.array(dens)


# ---------------------------------------------------------------------------
# Critical points and modes
# ---------------------------------------------------------------------------


def classify_critical(model, x, tol: float = 1e-6) -> CriticalPoint:
    """Morse classification of a critical point.

    ``x`` must satisfy ``|Df(x)| <= tol * f(x)``, i.e. the normalised
    gradient is negligible.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    f = float(model.density(x))
    grad = np.asarray(model.gradient(x))
    gnorm = float(np.linalg.norm(grad))
    if gnorm > tol * max(f, np.finfo(float).tiny):
        raise NotCriticalPointError(f"gradient norm {gnorm:.3e} is not negligible at {x.tolist()}")
    return _classify(model, x, f, gnorm)


def _classify(model, x, f, gnorm) -> CriticalPoint:
    hess = np.asarray(model.hessian(x))
    index, degenerate = morse_index(np.atleast_2d(hess))
    return CriticalPoint(np.array(x, dtype=float), f, gnorm, index, kind_from_index(index, model.dim, degenerate))


@dataclass
class ModeSet:
    """Local maxima found by ascent, with the other critical terminals kept for reporting."""

    modes: list
    merge_radius: float
    other_critical: list = field(default_factory=list)

    def __len__(self):
        return len(self.modes)

    @property
    def locations(self) -> np.ndarray:
        if not self.modes:
            return np.empty((0, 0))
        return np.array([m.location for m in self.modes])

    def to_list(self) -> list:
        return [
            {"location": [float(v) for v in m.location], "density": float(m.density),
             "morse_index": int(m.morse_index)}
            for m in self.modes
        ]


def _merge_terminals(model, res: AscentResult, config: ShiftConfig):
    """Group converged terminals within the merge radius.

    Returns ``(ModeSet, atom_labels)``; labels index into ``ModeSet.modes``
    or are ``UNASSIGNED``.
    """
    m = res.terminals.shape[0]
    labels = np.full(m, UNASSIGNED, dtype=int)
    conv = np.flatnonzero(res.converged)
    if conv.size == 0:
        return ModeSet([], config.merge_radius), labels
    order = conv[np.lexsort((conv, -res.log_density[conv]))]
    reps: list[int] = []
    group = np.full(m, -1, dtype=int)
    rep_locs = np.empty((0, model.dim))
    for i in order:
        y = res.terminals[i]
        if reps:
            dist = np.linalg.norm(rep_locs - y, axis=1)
            j = int(np.argmin(dist))
            if dist[j] <= config.merge_radius:
                group[i] = j
                continue
        group[i] = len(reps)
        reps.append(i)
        rep_locs = np.vstack([rep_locs, y])

    points = []
    for i in reps:
        y = res.terminals[i]
        f = float(np.exp(res.log_density[i]))
        gnorm = float(np.linalg.norm(model.gradient(y)))
        points.append(_classify(model, y, f, gnorm))
    maxima = [k for k, p in enumerate(points) if p.kind == "maximum"]
    # deterministic mode order: lexicographic in location
    maxima.sort(key=lambda k: tuple(points[k].location))
    new_label = {k: lab for lab, k in enumerate(maxima)}
    for i in conv:
        labels[i] = new_label.get(int(group[i]), UNASSIGNED)
    others = [p for k, p in enumerate(points) if p.kind != "maximum"]
    for p in others:
        logger.info("ascent terminal at %s is a %s (Morse index %d)", p.location, p.kind, p.morse_index)
    return ModeSet([points[k] for k in maxima], config.merge_radius, others), labels


def find_modes(model, starts, config: ShiftConfig = ShiftConfig()) -> ModeSet:
    """Ascend from every start and merge the terminals into distinct modes."""
    S, _ = _as_points(starts, model.dim)
    if S.shape[0] == 0:
        raise InputError("find_modes needs at least one start")
    config = config.resolve(model, S)
    res = ascend_many(model, S, config, resolved=True)
    modes, _ = _merge_terminals(model, res, config)
    return modes


# ---------------------------------------------------------------------------
# Partitions
# ---------------------------------------------------------------------------


@dataclass
class Partition:
    """Labelled atoms of a finite carrier.

    ``labels[k]`` is a cluster id from ``clusters`` or ``UNASSIGNED``;
    ``clusters`` maps each cluster id to an optional mode index.
    """

    atoms: np.ndarray
    weights: np.ndarray
    labels: np.ndarray
    clusters: dict
    carrier: str = "grid"
    modes: Optional[ModeSet] = None
    nonconverged: int = 0

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=float)
        if self.atoms.ndim == 1:
            self.atoms = self.atoms[:, None]
        self.weights = np.asarray(self.weights, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        n = self.atoms.shape[0]
        if self.weights.shape != (n,) or self.labels.shape != (n,):
            raise InputError("atoms, weights and labels must have matching lengths")
        if self.carrier not in ("grid", "sample"):
            raise InputError(f"unknown carrier kind {self.carrier!r}")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise InputError("atom weights must be nonnegative and sum to 1")
        used = set(np.unique(self.labels[self.labels != UNASSIGNED]).tolist())
        missing = used - set(self.clusters)
        if missing:
            raise InputError(f"labels {sorted(missing)} are not in the cluster table")

    @property
    def cluster_ids(self) -> list:
        return sorted(self.clusters)

    @property
    def unassigned_mass(self) -> float:
        return float(self.weights[self.labels == UNASSIGNED].sum())

    def cluster_masses(self) -> dict:
        return {c: float(self.weights[self.labels == c].sum()) for c in self.cluster_ids}

    @classmethod
    def from_labels(cls, atoms, labels, weights=None, carrier="sample"):
        """Build a partition whose clusters are exactly the labels present."""
        labels = np.asarray(labels, dtype=int)
        n = len(labels)
        if weights is None:
            weights = np.full(n, 1.0 / n)
        clusters = {int(c): None for c in np.unique(labels[labels != UNASSIGNED])}
        return cls(atoms, weights, labels, clusters, carrier)


def grid_carrier(model, axes):
    """Cartesian grid atoms with midpoint-rule probability weights.

    ``axes`` is a sequence of 1-D coordinate arrays, one per dimension.
    Weights are density times cell volume, renormalised to total mass one.
    """
    axes = [np.asarray(a, dtype=float) for a in axes]
    if len(axes) != model.dim:
        raise InputError(f"need {model.dim} grid axes, got {len(axes)}")
    mesh = np.meshgrid(*axes, indexing="ij")
    atoms = np.stack([g.ravel() for g in mesh], axis=1)
    widths = [_cell_widths(a) for a in axes]
    vol = np.ones(1)
    for w in widths:
        vol = np.multiply.outer(vol, w)
    vol = vol.reshape(-1)
    weights = np.asarray(model.density(atoms)) * vol
    total = weights.sum()
    if not total > 0:
        raise NumericalError("grid carries no probability mass")
    return atoms, weights / total


def _cell_widths(a: np.ndarray) -> np.ndarray:
    if len(a) == 1:
        return np.ones(1)
    mid = 0.5 * (a[1:] + a[:-1])
    edges = np.concatenate([[a[0] - (mid[0] - a[0])], mid, [a[-1] + (a[-1] - mid[-1])]])
    return np.diff(edges)


def partition_carrier(model, atoms, weights=None, config: ShiftConfig = ShiftConfig(),
                      carrier: str = "grid", n_jobs: int = 1) -> Partition:
    """Label every atom by the mode its ascent reaches.

    Atoms whose ascent does not converge, or converges to a critical point
    that is not a maximum, are ``UNASSIGNED``.  ``weights`` default to
    ``1/n`` (sample carrier).  With ``n_jobs > 1`` the ascents are spread
    over worker processes; labels depend only on per-atom trajectories.
    """
    A, _ = _as_points(atoms, model.dim)
    n = A.shape[0]
    if n == 0:
        raise InputError("carrier is empty")
    if weights is None:
        weights = np.full(n, 1.0 / n)
    config = config.resolve(model, A)
    if n_jobs != 1 and n > 1:
        res = _ascend_parallel(model, A, config, n_jobs)
    else:
        res = ascend_many(model, A, config, resolved=True)
    n_fail = int(np.sum(~res.converged))
    if n_fail:
        logger.warning("%d of %d ascents did not converge within %d iterations", n_fail, n, config.max_iter)
    modes, labels = _merge_terminals(model, res, config)
    clusters = {k: k for k in range(len(modes))}
    return Partition(A, weights, labels, clusters, carrier, modes, n_fail)


def _ascend_parallel(model, A, config, n_jobs):
    from joblib import Parallel, delayed

    chunks = np.array_split(np.arange(A.shape[0]), max(1, abs(n_jobs) * 4))
    chunks = [c for c in chunks if c.size]
    parts = Parallel(n_jobs=n_jobs)(
        delayed(ascend_many)(model, A[c], config, resolved=True) for c in chunks)
    return AscentResult(
        np.concatenate([p.terminals for p in parts]),
        np.concatenate([p.iterations for p in parts]),
        np.concatenate([p.converged for p in parts]),
        np.concatenate([p.log_density for p in parts]),
    )
