"""Reference densities used throughout the tests and the documentation."""

import math

import numpy as np

from .density_models import NormalMixture


def trimodal_1d() -> NormalMixture:
    """Density proportional to 6 exp(-x^2/2) + 4 exp(-(x-3)^2/2) + 2 exp(-(x-6)^2).

    Three modes whose cluster structure no single level set captures.
    """
    raw = np.array([6 * math.sqrt(2 * math.pi), 4 * math.sqrt(2 * math.pi), 2 * math.sqrt(math.pi)])
    w = raw / raw.sum()
    return NormalMixture(w, [[0.0], [3.0], [6.0]], [[[1.0]], [[1.0]], [[0.5]]])


def symmetric_bimodal_2d() -> NormalMixture:
    """Equal mixture of N((-1.5, 0), I) and N((1.5, 0), I); a saddle at the origin."""
    return NormalMixture([0.5, 0.5], [[-1.5, 0.0], [1.5, 0.0]], [np.eye(2), np.eye(2)])


def standard_normal(d: int = 1) -> NormalMixture:
    return NormalMixture([1.0], np.zeros((1, d)), np.eye(d)[None])
