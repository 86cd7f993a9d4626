"""Normal mixtures and kernel density estimators with analytic derivatives.

Every evaluation method accepts either a single point of shape ``(d,)`` or a
batch of shape ``(m, d)`` and answers with matching shape (scalar / ``(m,)``
for densities, ``(d,)`` / ``(m, d)`` for gradients and so on).  Models are
immutable once built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln, logsumexp

from .errors import (
    DimensionError,
    IllConditionedModelError,
    InputError,
    ShiftUndefinedError,
    UnsupportedOperationError,
)

LOG_2PI = math.log(2.0 * math.pi)

# Blocks of the (points x data) kernel matrix are kept below this many entries.
_BLOCK_ENTRIES = 1 << 22

# |det Hf| < DEGENERATE_RTOL * (|trace Hf| / d) ** d flags a degenerate critical point.
DEGENERATE_RTOL = 1e-10


def _as_points(x, d: int):
    """Return ``(X, single)`` with ``X`` of shape ``(m, d)``."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != d:
        raise DimensionError(f"expected points of dimension {d}, got array of shape {np.shape(x)}")
    return arr, single


def _check_spd(mat: np.ndarray, what: str, tol: float = 1e-12) -> np.ndarray:
    """Validate symmetry and positive definiteness; return the lower Cholesky factor."""
    scale = max(1.0, float(np.max(np.abs(mat))))
    if not np.all(np.isfinite(mat)):
        raise InputError(f"{what} has non-finite entries")
    if np.max(np.abs(mat - mat.T)) > tol * scale:
        raise InputError(f"{what} is not symmetric")
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        raise InputError(f"{what} is not positive definite") from None
    if np.min(np.linalg.eigvalsh(mat)) <= 0:
        raise InputError(f"{what} is not positive definite")
    return chol


# ---------------------------------------------------------------------------
# Kernel profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Profile:
    """A radial kernel profile ``k`` with ``K(x) = c_d * k(x'x)``.

    ``g`` is ``-k'`` (the profile of the shadow kernel driving mean shift).
    ``smooth`` says whether ``k`` is twice differentiable, which the Hessian
    needs.  ``compact`` profiles can produce zero density.
    """

    name: str
    k: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    log_norm: Callable[[int], float]
    smooth: bool
    compact: bool

    def check_admissible(self, t_max: float = 50.0, num: int = 2001) -> None:
        """Numerically verify the profile is convex and non-increasing on ``[0, t_max]``."""
        t = np.linspace(0.0, t_max, num)
        v = self.k(t)
        if np.any(np.diff(v) > 1e-14):
            raise InputError(f"profile {self.name!r} is not monotonically decreasing")
        second = v[2:] - 2.0 * v[1:-1] + v[:-2]
        if np.any(second < -1e-12):
            raise InputError(f"profile {self.name!r} is not convex")


def _epanechnikov_log_norm(d: int) -> float:
    # integral of (1 - |x|^2)_+ over R^d equals 2 V_d / (d + 2)
    log_vd = 0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1.0)
    return math.log(d + 2.0) - math.log(2.0) - log_vd


GAUSSIAN = Profile(
    name="gaussian",
    k=lambda t: np.exp(-0.5 * t),
    g=lambda t: 0.5 * np.exp(-0.5 * t),
    log_norm=lambda d: -0.5 * d * LOG_2PI,
    smooth=True,
    compact=False,
)

EPANECHNIKOV = Profile(
    name="epanechnikov",
    k=lambda t: np.maximum(1.0 - t, 0.0),
    g=lambda t: (t < 1.0).astype(float),
    log_norm=_epanechnikov_log_norm,
    smooth=False,
    compact=True,
)

PROFILES = {p.name: p for p in (GAUSSIAN, EPANECHNIKOV)}


def get_profile(profile) -> Profile:
    if isinstance(profile, Profile):
        return profile
    try:
        return PROFILES[str(profile).lower()]
    except KeyError:
        raise InputError(f"unknown kernel profile {profile!r}; known: {sorted(PROFILES)}") from None


# ---------------------------------------------------------------------------
# Critical points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CriticalPoint:
    location: np.ndarray
    density: float
    gradient_norm: float
    morse_index: int
    kind: str  # "maximum" | "saddle" | "minimum" | "degenerate"

    def to_dict(self) -> dict:
        return {
            "location": [float(v) for v in self.location],
            "density": float(self.density),
            "gradient_norm": float(self.gradient_norm),
            "morse_index": int(self.morse_index),
            "kind": self.kind,
        }


def morse_index(hessian: np.ndarray, rtol: float = DEGENERATE_RTOL) -> tuple[int, bool]:
    """Count negative Hessian eigenvalues; also report whether the point is degenerate."""
    hess = 0.5 * (hessian + hessian.T)
    eig = np.linalg.eigvalsh(hess)
    d = len(eig)
    index = int(np.sum(eig < 0))
    scale = abs(float(np.trace(hess))) / d
    det = float(np.prod(eig))
    degenerate = scale == 0.0 or abs(det) < rtol * scale**d
    return index, degenerate


def kind_from_index(index: int, d: int, degenerate: bool) -> str:
    if degenerate:
        return "degenerate"
    if index == d:
        return "maximum"
    if index == 0:
        return "minimum"
    return "saddle"


# ---------------------------------------------------------------------------
# Normal mixture
# ---------------------------------------------------------------------------


class NormalMixture:
    """Finite mixture of multivariate normal densities.

    Parameters
    ----------
    weights : (L,) array_like
        Nonnegative mixing proportions summing to one.
    means : (L, d) array_like
    covs : (L, d, d) array_like
        Symmetric positive-definite covariance matrices.
    """

    def __init__(self, weights, means, covs):
        weights = np.atleast_1d(np.asarray(weights, dtype=float))
        means = np.asarray(means, dtype=float)
        covs = np.asarray(covs, dtype=float)
        if weights.ndim != 1 or len(weights) == 0:
            raise InputError("weights must be a non-empty vector")
        n_comp = len(weights)
        if means.ndim == 1:
            means = means.reshape(n_comp, -1)
        if means.ndim != 2 or means.shape[0] != n_comp:
            raise DimensionError(f"means must have shape ({n_comp}, d), got {means.shape}")
        d = means.shape[1]
        if covs.ndim == 1 and d == 1:
            covs = covs.reshape(n_comp, 1, 1)
        if covs.shape != (n_comp, d, d):
            raise DimensionError(f"covs must have shape ({n_comp}, {d}, {d}), got {covs.shape}")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise InputError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise InputError(f"weights sum to {weights.sum()!r}, not 1")
        if not np.all(np.isfinite(means)):
            raise InputError("means must be finite")
        chols = np.stack([_check_spd(c, f"covariance {i}") for i, c in enumerate(covs)])

        self.weights = weights
        self.means = means
        self.covs = covs
        self.dim = d
        self._chols = chols
        eye = np.eye(d)
        inv_chols = np.stack([solve_triangular(c, eye, lower=True) for c in chols])
        self._inv_chols = inv_chols
        self.precisions = np.einsum("lki,lkj->lij", inv_chols, inv_chols)
        log_det = 2.0 * np.sum(np.log(np.diagonal(chols, axis1=1, axis2=2)), axis=1)
        with np.errstate(divide="ignore"):
            self._log_coef = np.log(weights) - 0.5 * (d * LOG_2PI + log_det)
        for arr in (self.weights, self.means, self.covs, self.precisions):
            arr.setflags(write=False)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def __repr__(self):
        return f"NormalMixture(n_components={self.n_components}, dim={self.dim})"

    # -- core evaluations ---------------------------------------------------

    def _log_joint(self, X: np.ndarray) -> np.ndarray:
        """log(pi_l * phi(x | mu_l, Sigma_l)) with shape (m, L)."""
        out = np.empty((X.shape[0], self.n_components))
        for l in range(self.n_components):
            z = (X - self.means[l]) @ self._inv_chols[l].T
            out[:, l] = self._log_coef[l] - 0.5 * np.einsum("ij,ij->i", z, z)
        return out

    def _posterior(self, X):
        lj = self._log_joint(X)
        logf = logsumexp(lj, axis=1)
        return np.exp(lj - logf[:, None]), logf

    def log_density(self, x):
        X, single = _as_points(x, self.dim)
        out = logsumexp(self._log_joint(X), axis=1)
        return float(out[0]) if single else out

    def density(self, x):
        out = np.exp(self.log_density(x))
        return float(out) if np.ndim(out) == 0 else out

    def posterior(self, x):
        X, single = _as_points(x, self.dim)
        alpha, _ = self._posterior(X)
        return alpha[0] if single else alpha

    def normalized_gradient(self, x):
        """``Df(x) / f(x) = sum_l alpha_l(x) Sigma_l^{-1} (mu_l - x)``."""
        X, single = _as_points(x, self.dim)
        alpha, _ = self._posterior(X)
        out = self._normalized_gradient(X, alpha)
        return out[0] if single else out

    def _normalized_gradient(self, X, alpha):
        out = np.zeros_like(X)
        for l in range(self.n_components):
            out += alpha[:, l:l + 1] * ((self.means[l] - X) @ self.precisions[l])
        return out

    def gradient(self, x):
        X, single = _as_points(x, self.dim)
        alpha, logf = self._posterior(X)
        out = np.exp(logf)[:, None] * self._normalized_gradient(X, alpha)
        return out[0] if single else out

    def hessian(self, x):
        X, single = _as_points(x, self.dim)
        alpha, logf = self._posterior(X)
        out = np.zeros((X.shape[0], self.dim, self.dim))
        for l in range(self.n_components):
            u = (self.means[l] - X) @ self.precisions[l]
            term = np.einsum("mi,mj->mij", u, u) - self.precisions[l]
            out += alpha[:, l, None, None] * term
        out *= np.exp(logf)[:, None, None]
        return out[0] if single else out

    def sigma_star(self, x, max_condition: float = 1e12):
        """Posterior-weighted harmonic mean of the component covariances."""
        X, single = _as_points(x, self.dim)
        alpha, _ = self._posterior(X)
        acc = np.einsum("ml,lij->mij", alpha, self.precisions)
        cond = np.linalg.cond(acc)
        if np.any(~np.isfinite(cond)) or np.any(cond > max_condition):
            raise IllConditionedModelError("accumulated precision matrix is numerically singular",
                                           float(np.max(cond)))
        out = np.linalg.inv(acc)
        out = 0.5 * (out + np.swapaxes(out, 1, 2))
        return out[0] if single else out

    def sigma_star_step(self, X: np.ndarray):
        """Batch mean-shift step with the harmonic-mean step matrix.

        Returns ``(Y_next, log_f, normalized_gradient)`` evaluated at ``X``.
        """
        alpha, logf = self._posterior(X)
        acc = np.einsum("ml,lij->mij", alpha, self.precisions)
        pm = np.einsum("lij,lj->li", self.precisions, self.means)
        rhs = alpha @ pm
        Y = np.linalg.solve(acc, rhs[:, :, None])[:, :, 0]
        ngrad = rhs - np.einsum("mij,mj->mi", acc, X)
        return Y, logf, ngrad

    # -- sampling and serialisation ---------------------------------------

    def sample(self, n: int, rng=None) -> np.ndarray:
        if int(n) != n or n < 1:
            raise InputError(f"sample size must be a positive integer, got {n!r}")
        rng = np.random.default_rng(rng)
        comp = rng.choice(self.n_components, size=int(n), p=self.weights)
        z = rng.standard_normal((int(n), self.dim))
        return self.means[comp] + np.einsum("nij,nj->ni", self._chols[comp], z)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "components": [
                {"weight": float(w), "mean": m.tolist(), "cov": c.tolist()}
                for w, m, c in zip(self.weights, self.means, self.covs)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NormalMixture":
        if not isinstance(doc, dict):
            raise InputError("mixture document must be a JSON object")
        if "components" not in doc:
            raise InputError("mixture document lacks field 'components'")
        comps = doc["components"]
        if not isinstance(comps, list) or not comps:
            raise InputError("field 'components' must be a non-empty list")
        dim = doc.get("dim")
        weights, means, covs = [], [], []
        for i, comp in enumerate(comps):
            for key in ("weight", "mean", "cov"):
                if not isinstance(comp, dict) or key not in comp:
                    raise InputError(f"field 'components[{i}].{key}' is missing")
            try:
                weights.append(float(comp["weight"]))
                mean = np.asarray(comp["mean"], dtype=float).reshape(-1)
                cov = np.atleast_2d(np.asarray(comp["cov"], dtype=float))
            except (TypeError, ValueError):
                raise InputError(f"field 'components[{i}]' has non-numeric entries") from None
            if dim is not None and mean.shape != (dim,):
                raise InputError(f"field 'components[{i}].mean' does not have dimension {dim}")
            if cov.shape != (len(mean), len(mean)):
                raise InputError(f"field 'components[{i}].cov' must be {len(mean)}x{len(mean)}")
            means.append(mean)
            covs.append(cov)
        if len({len(m) for m in means}) != 1:
            raise InputError("field 'components[].mean' has inconsistent dimensions")
        return cls(weights, np.array(means), np.array(covs))


# ---------------------------------------------------------------------------
# Kernel density estimator
# ---------------------------------------------------------------------------


def scalar_bandwidth(h: float, d: int) -> np.ndarray:
    """Bandwidth matrix ``h**2 * I`` for a scalar (standard-deviation scale) bandwidth."""
    if not h > 0:
        raise InputError(f"bandwidth must be positive, got {h!r}")
    return (h * h) * np.eye(d)


def normal_reference_bandwidth(data) -> np.ndarray:
    """Normal-reference bandwidth matrix ``(4/(d+2))^{2/(d+4)} n^{-2/(d+4)} S``.

    Heuristic: optimal for normal data, not aimed at clustering.
    """
    X = np.atleast_2d(np.asarray(data, dtype=float))
    n, d = X.shape
    if n < 2:
        raise InputError("normal-reference bandwidth needs at least two points")
    S = np.atleast_2d(np.cov(X, rowvar=False))
    factor = (4.0 / (d + 2.0)) ** (2.0 / (d + 4.0)) * n ** (-2.0 / (d + 4.0))
    return factor * S


class KernelModel:
    """Kernel density estimator ``f_H(x) = n^-1 sum_i K_H(x - X_i)``.

    ``K_H(x) = |H|^{-1/2} c_d k(x' H^{-1} x)`` for a radial profile ``k``.
    """

    def __init__(self, data, bandwidth, profile="gaussian"):
        X = np.asarray(data, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] < 1:
            raise InputError("data must be a non-empty (n, d) matrix")
        if not np.all(np.isfinite(X)):
            raise InputError("data contains non-finite values")
        n, d = X.shape
        H = np.asarray(bandwidth, dtype=float)
        if H.ndim == 0:
            raise InputError("bandwidth must be a d x d matrix; use scalar_bandwidth(h, d)")
        H = np.atleast_2d(H)
        if H.shape != (d, d):
            raise DimensionError(f"bandwidth must be {d}x{d}, got {H.shape}")
        chol = _check_spd(H, "bandwidth matrix")
        self.profile = get_profile(profile)
        self.profile.check_admissible()
        self.data = X
        self.bandwidth = H
        self.dim = d
        self.n = n
        self._chol = chol
        self._inv_chol = solve_triangular(chol, np.eye(d), lower=True)
        self.precision = self._inv_chol.T @ self._inv_chol
        self._white = X @ self._inv_chol.T
        self._white_sq = np.einsum("ij,ij->i", self._white, self._white)
        log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
        self._log_coef = self.profile.log_norm(d) - 0.5 * log_det - math.log(n)
        for arr in (self.data, self.bandwidth, self.precision):
            arr.setflags(write=False)

    def __repr__(self):
        return f"KernelModel(n={self.n}, dim={self.dim}, profile={self.profile.name!r})"

    def as_mixture(self) -> NormalMixture:
        """The Gaussian KDE viewed as an equal-weight normal mixture."""
        if self.profile is not GAUSSIAN:
            raise UnsupportedOperationError("only the Gaussian KDE is a normal mixture")
        w = np.full(self.n, 1.0 / self.n)
        w[-1] = 1.0 - w[:-1].sum()
        return NormalMixture(w, self.data, np.broadcast_to(self.bandwidth, (self.n, self.dim, self.dim)))

    def _sqdist_blocks(self, X: np.ndarray):
        """Yield ``(slice, T)`` where ``T[i, j] = (x_i - X_j)' H^{-1} (x_i - X_j)``."""
        step = max(1, _BLOCK_ENTRIES // self.n)
        for start in range(0, X.shape[0], step):
            sl = slice(start, min(start + step, X.shape[0]))
            W = X[sl] @ self._inv_chol.T
            T = np.einsum("ij,ij->i", W, W)[:, None] + self._white_sq[None, :] - 2.0 * W @ self._white.T
            np.maximum(T, 0.0, out=T)
            yield sl, T

    def log_density(self, x):
        X, single = _as_points(x, self.dim)
        out = np.empty(X.shape[0])
        for sl, T in self._sqdist_blocks(X):
            if self.profile is GAUSSIAN:
                out[sl] = logsumexp(-0.5 * T, axis=1)
            else:
                with np.errstate(divide="ignore"):
                    out[sl] = np.log(self.profile.k(T).sum(axis=1))
        out += self._log_coef
        return float(out[0]) if single else out

    def density(self, x):
        out = np.exp(self.log_density(x))
        return float(out) if np.ndim(out) == 0 else out

    def weights(self, x):
        """Mean-shift weights ``W_i(x) = g(t_i) / sum_j g(t_j)``, shape ``(m, n)``."""
        X, single = _as_points(x, self.dim)
        W, _, _ = self._shift_terms(X)
        return W[0] if single else W

    def _shift_terms(self, X):
        """Return mean-shift weights, log density, and ``sum_i g_i`` scale factor."""
        m = X.shape[0]
        W = np.empty((m, self.n))
        logf = np.empty(m)
        gsum = np.empty(m)
        for sl, T in self._sqdist_blocks(X):
            if self.profile is GAUSSIAN:
                # T >= 0, so shifting by the row minimum keeps exp() in range
                tmin = T.min(axis=1)
                T -= tmin[:, None]
                T *= -0.5
                E = np.exp(T, out=T)
                esum = E.sum(axis=1)
                W[sl] = E / esum[:, None]
                logf[sl] = np.log(esum) - 0.5 * tmin
                gsum[sl] = 0.5  # sum_i g_i / sum_i k_i for the Gaussian profile
            else:
                g = self.profile.g(T)
                ksum = self.profile.k(T).sum(axis=1)
                gs = g.sum(axis=1)
                with np.errstate(divide="ignore", invalid="ignore"):
                    W[sl] = g / gs[:, None]
                    logf[sl] = np.log(ksum)
                    gsum[sl] = gs / ksum
        logf += self._log_coef
        return W, logf, gsum

    def normalized_gradient(self, x):
        X, single = _as_points(x, self.dim)
        W, logf, ratio = self._shift_terms(X)
        if np.any(~np.isfinite(logf)):
            raise ShiftUndefinedError("kernel density vanishes at a requested point")
        out = 2.0 * ratio[:, None] * ((W @ self.data - X) @ self.precision)
        return out[0] if single else out

    def gradient(self, x):
        X, single = _as_points(x, self.dim)
        W, logf, ratio = self._shift_terms(X)
        f = np.exp(logf)
        mean = W @ self.data
        out = 2.0 * (f * ratio)[:, None] * ((mean - X) @ self.precision)
        out[~np.isfinite(logf)] = 0.0
        return out[0] if single else out

    def hessian(self, x):
        if not self.profile.smooth:
            raise UnsupportedOperationError(
                f"Hessian requires a twice-differentiable profile, not {self.profile.name!r}")
        X, single = _as_points(x, self.dim)
        W, logf, _ = self._shift_terms(X)
        P = self.precision
        out = np.empty((X.shape[0], self.dim, self.dim))
        for i in range(X.shape[0]):
            U = (self.data - X[i]) @ P
            out[i] = (U.T * W[i]) @ U - P
        out *= np.exp(logf)[:, None, None]
        return out[0] if single else out

    def bandwidth_step(self, X: np.ndarray):
        """Batch step ``y -> sum_i W_i(y) X_i``; returns ``(Y_next, log_f, normalized_gradient)``."""
        W, logf, ratio = self._shift_terms(X)
        if np.any(~np.isfinite(logf)):
            raise ShiftUndefinedError("kernel density vanishes at a mean-shift iterate")
        Y = W @ self.data
        ngrad = 2.0 * ratio[:, None] * ((Y - X) @ self.precision)
        return Y, logf, ngrad


# ---------------------------------------------------------------------------
# Functional surface
# ---------------------------------------------------------------------------


def eval_density(model, x):
    """Density of ``model`` at ``x`` (a point or a batch of points)."""
    return model.density(x)


def eval_gradient(model, x):
    return model.gradient(x)


def eval_hessian(model, x):
    return model.hessian(x)


def posterior_weights(mixture: NormalMixture, y):
    """Posterior component probabilities ``alpha_l(y)``."""
    return mixture.posterior(y)


def sigma_star(mixture: NormalMixture, y):
    return mixture.sigma_star(y)


def sample(mixture: NormalMixture, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` i.i.d. points; ``seed`` may be an int or a ``numpy.random.Generator``."""
    return mixture.sample(n, seed)


def density_scale(model, points: Optional[np.ndarray] = None) -> float:
    """A representative density magnitude: the largest density at ``points``
    (component means / data points when omitted)."""
    if points is None:
        points = model.means if isinstance(model, NormalMixture) else model.data
    return float(np.max(model.density(np.atleast_2d(points))))
