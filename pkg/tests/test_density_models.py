import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import kstest, multivariate_normal

from conftest import random_kde, random_mixture
from modalclust.density_models import (
    EPANECHNIKOV,
    KernelModel,
    NormalMixture,
    eval_density,
    eval_gradient,
    get_profile,
    morse_index,
    normal_reference_bandwidth,
    posterior_weights,
    sample,
    scalar_bandwidth,
    sigma_star,
)
from modalclust.errors import (
    DimensionError,
    IllConditionedModelError,
    InputError,
    ShiftUndefinedError,
    UnsupportedOperationError,
)
from modalclust.mode_seek import classify_critical

# independent scalar evaluation (closed-form normal densities, no linear algebra)
BIMODAL_F_ORIGIN = 0.05167004496706156
BIMODAL_POSTERIOR_LEFT_MODE = (0.9890130573694068, 0.01098694263059318)
BIMODAL_MODE_X = 1.4632437386096906
TRIMODAL_CRITICAL = [
    (0.02366451216919245, 0.21131634473727046, "maximum"),
    (1.7450515233832102, 0.1093585729904444, "minimum"),
    (2.9419107500744515, 0.14234430410153548, "maximum"),
    (4.881965949825759, 0.043820966858694785, "minimum"),
    (5.963215974331099, 0.07154133079555629, "maximum"),
]


def fd_gradient(model, x, h=1e-5):
    x = np.asarray(x, float)
    g = np.empty_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (model.density(x + e) - model.density(x - e)) / (2 * h)
    return g


def fd_hessian(model, x, h=1e-4):
    x = np.asarray(x, float)
    d = len(x)
    H = np.empty((d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        H[:, k] = (model.gradient(x + e) - model.gradient(x - e)) / (2 * h)
    return H


class TestNormalMixture:
    def test_density_at_saddle_matches_scalar_formula(self, bimodal):
        assert eval_density(bimodal, [0.0, 0.0]) == pytest.approx(BIMODAL_F_ORIGIN, rel=1e-12)

    def test_posterior_near_left_mode(self, bimodal):
        alpha = posterior_weights(bimodal, [-1.5, 0.0])
        np.testing.assert_allclose(alpha, BIMODAL_POSTERIOR_LEFT_MODE, rtol=1e-12)
        assert alpha.sum() == pytest.approx(1.0, abs=1e-15)

    def test_gradient_vanishes_at_origin_and_origin_is_saddle(self, bimodal):
        np.testing.assert_allclose(eval_gradient(bimodal, [0.0, 0.0]), 0.0, atol=1e-16)
        cp = classify_critical(bimodal, [0.0, 0.0])
        assert cp.morse_index == 1 and cp.kind == "saddle"

    def test_mode_locations(self, bimodal, trimodal):
        for s in (1, -1):
            cp = classify_critical(bimodal, [s * BIMODAL_MODE_X, 0.0])
            assert cp.kind == "maximum" and cp.morse_index == 2
        for x, f, kind in TRIMODAL_CRITICAL:
            assert trimodal.density([x]) == pytest.approx(f, rel=1e-10)
            assert abs(trimodal.gradient([x])[0]) < 1e-12
            assert classify_critical(trimodal, [x]).kind == kind

    def test_matches_scipy(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            m = random_mixture(rng)
            x = rng.normal(size=(7, m.dim))
            ref = sum(w * multivariate_normal(mu, c).pdf(x) for w, mu, c in zip(m.weights, m.means, m.covs))
            np.testing.assert_allclose(m.density(x), np.atleast_1d(ref), rtol=1e-12)

    def test_batch_and_single_shapes(self, bimodal):
        X = np.zeros((5, 2))
        assert np.shape(bimodal.density(X)) == (5,)
        assert np.shape(bimodal.density(X[0])) == ()
        assert bimodal.gradient(X).shape == (5, 2)
        assert bimodal.hessian(X).shape == (5, 2, 2)
        assert bimodal.hessian(X[0]).shape == (2, 2)

    def test_far_tail_is_finite(self, bimodal):
        x = np.array([60.0, 0.0])
        assert bimodal.density(x) == 0.0 or bimodal.density(x) > 0
        assert np.isfinite(bimodal.log_density(x))
        assert np.all(np.isfinite(bimodal.normalized_gradient(x)))

    def test_riemann_integral_is_one(self, bimodal):
        ax = np.linspace(-9, 9, 361)
        gx, gy = np.meshgrid(ax, ax, indexing="ij")
        f = bimodal.density(np.stack([gx.ravel(), gy.ravel()], axis=1))
        assert abs(f.sum() * (ax[1] - ax[0]) ** 2 - 1.0) < 1e-3

    def test_finite_differences(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            m = random_mixture(rng)
            x = rng.uniform(-2, 2, m.dim)
            np.testing.assert_allclose(m.gradient(x), fd_gradient(m, x), rtol=1e-5, atol=1e-9)
            np.testing.assert_allclose(m.hessian(x), fd_hessian(m, x), rtol=1e-5, atol=1e-8)

    def test_rejects_bad_parameters(self):
        with pytest.raises(InputError, match="sum"):
            NormalMixture([0.5, 0.4], [[0.0], [1.0]], [[[1.0]], [[1.0]]])
        with pytest.raises(InputError, match="positive definite"):
            NormalMixture([1.0], [[0.0, 0.0]], [[[1.0, 2.0], [2.0, 1.0]]])
        with pytest.raises(InputError, match="symmetric"):
            NormalMixture([1.0], [[0.0, 0.0]], [[[1.0, 0.5], [0.0, 1.0]]])
        with pytest.raises(InputError):
            NormalMixture([-0.5, 1.5], [[0.0], [1.0]], [[[1.0]], [[1.0]]])

    def test_dimension_mismatch(self, bimodal):
        with pytest.raises(DimensionError):
            bimodal.density([1.0, 2.0, 3.0])

    def test_dict_round_trip_and_field_errors(self, bimodal):
        again = NormalMixture.from_dict(bimodal.to_dict())
        assert again.density([0.3, -0.2]) == bimodal.density([0.3, -0.2])
        with pytest.raises(InputError, match=r"components\[1\]\.cov"):
            NormalMixture.from_dict({"components": [{"weight": 0.5, "mean": [0], "cov": [[1]]},
                                                    {"weight": 0.5, "mean": [1]}]})
        with pytest.raises(InputError, match="components"):
            NormalMixture.from_dict({"dim": 1})

    def test_immutable(self, bimodal):
        with pytest.raises(ValueError):
            bimodal.means[0, 0] = 3.0


class TestSigmaStar:
    def test_single_component_gives_covariance(self):
        rng = np.random.default_rng(2)
        m = random_mixture(rng, d=3, n_comp=1)
        np.testing.assert_allclose(sigma_star(m, rng.normal(size=3)), m.covs[0], rtol=1e-10)

    def test_equal_covariances_give_that_covariance(self):
        rng = np.random.default_rng(3)
        from conftest import random_spd

        S = random_spd(rng, 2)
        m = NormalMixture([0.3, 0.7], [[0, 0], [2, 1]], [S, S])
        np.testing.assert_allclose(sigma_star(m, [0.4, 0.1]), S, rtol=1e-10)

    def test_step_is_fixed_point_form(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            m = random_mixture(rng)
            x = rng.uniform(-2, 2, (4, m.dim))
            Y, _, _ = m.sigma_star_step(x)
            S = m.sigma_star(x)
            expected = x + np.einsum("mij,mj->mi", S, m.normalized_gradient(x))
            np.testing.assert_allclose(Y, expected, atol=1e-10)
            # stationary points of the step are critical points of f
            assert np.allclose(Y - x, 0) == np.allclose(m.normalized_gradient(x), 0)

    def test_ill_conditioned_raises(self):
        m = NormalMixture([1.0], [[0.0, 0.0]], [np.diag([1.0, 1e-14])])
        with pytest.raises(IllConditionedModelError) as err:
            m.sigma_star([0.1, 0.0])
        assert err.value.condition > 1e12


class TestSampling:
    def test_mean(self, bimodal):
        X = sample(bimodal, 100_000, seed=0)
        np.testing.assert_allclose(X.mean(axis=0), [0.0, 0.0], atol=0.02)

    def test_single_normal_mahalanobis_is_chi_square(self):
        from conftest import random_spd

        rng = np.random.default_rng(1)
        S = random_spd(rng, 3)
        m = NormalMixture([1.0], [[1.0, -1.0, 0.5]], [S])
        X = m.sample(20_000, 7) - m.means[0]
        q = np.einsum("ni,ij,nj->n", X, np.linalg.inv(S), X)
        assert kstest(q, "chi2", args=(3,)).pvalue > 1e-3

    def test_deterministic(self, bimodal):
        a = sample(bimodal, 50, seed=12)
        b = sample(bimodal, 50, seed=12)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, sample(bimodal, 50, seed=13))

    def test_rejects_bad_size(self, bimodal):
        with pytest.raises(InputError):
            sample(bimodal, 0)


class TestKernelModel:
    def test_equals_its_mixture(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            kde = random_kde(rng)
            mix = kde.as_mixture()
            x = rng.normal(size=(6, kde.dim))
            np.testing.assert_allclose(kde.density(x), mix.density(x), rtol=1e-12)
            np.testing.assert_allclose(kde.gradient(x), mix.gradient(x), rtol=1e-12, atol=1e-16)
            np.testing.assert_allclose(kde.hessian(x), mix.hessian(x), rtol=1e-11, atol=1e-15)

    def test_full_bandwidth_matrix(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(40, 2))
        H = np.array([[0.5, 0.2], [0.2, 0.3]])
        kde = KernelModel(X, H)
        ref = np.mean([multivariate_normal(xi, H).pdf([0.1, 0.2]) for xi in X])
        assert kde.density([0.1, 0.2]) == pytest.approx(ref, rel=1e-12)

    def test_finite_differences(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            kde = random_kde(rng)
            x = kde.data.mean(axis=0) + rng.normal(size=kde.dim) * 0.5
            np.testing.assert_allclose(kde.gradient(x), fd_gradient(kde, x), rtol=1e-5, atol=1e-9)
            np.testing.assert_allclose(kde.hessian(x), fd_hessian(kde, x), rtol=1e-5, atol=1e-8)

    def test_bandwidth_step_is_weighted_mean(self):
        rng = np.random.default_rng(13)
        kde = random_kde(rng, d=2, n=30)
        y = rng.normal(size=(3, 2))
        Y, _, _ = kde.bandwidth_step(y)
        W = kde.weights(y)
        np.testing.assert_allclose(W.sum(axis=1), 1.0)
        np.testing.assert_allclose(Y, W @ kde.data, atol=1e-14)
        # equals y + H Df / f
        expected = y + kde.normalized_gradient(y) @ kde.bandwidth
        np.testing.assert_allclose(Y, expected, atol=1e-10)

    def test_scalar_bandwidth_convention(self):
        np.testing.assert_array_equal(scalar_bandwidth(0.6, 2), 0.36 * np.eye(2))
        with pytest.raises(InputError):
            scalar_bandwidth(0.0, 2)
        with pytest.raises(InputError):
            KernelModel(np.zeros((4, 2)), 0.5)

    def test_normal_reference_shrinks_with_n(self, bimodal):
        small = normal_reference_bandwidth(bimodal.sample(100, 0))
        large = normal_reference_bandwidth(bimodal.sample(10_000, 0))
        assert np.trace(large) < np.trace(small)

    def test_epanechnikov_density_integrates_to_one(self):
        kde = KernelModel(np.array([[0.0], [0.5]]), scalar_bandwidth(1.0, 1), EPANECHNIKOV)
        x = np.linspace(-2, 3, 50_001)
        f = kde.density(x[:, None])
        assert abs(f.sum() * (x[1] - x[0]) - 1.0) < 1e-3
        with pytest.raises(UnsupportedOperationError):
            kde.hessian([0.1])

    def test_compact_kernel_shift_undefined_far_away(self):
        kde = KernelModel(np.array([[0.0], [0.5]]), scalar_bandwidth(0.3, 1), "epanechnikov")
        with pytest.raises(ShiftUndefinedError):
            kde.bandwidth_step(np.array([[10.0]]))

    def test_unknown_profile(self):
        with pytest.raises(InputError):
            get_profile("triweight")


def test_morse_index_and_degeneracy():
    assert morse_index(np.diag([-1.0, -2.0])) == (2, False)
    assert morse_index(np.diag([-1.0, 2.0])) == (1, False)
    assert morse_index(np.diag([1.0, 1e-14]))[1] is True


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_hypothesis_posterior_is_probability(seed):
    rng = np.random.default_rng(seed)
    m = random_mixture(rng)
    x = rng.normal(size=(3, m.dim)) * 5
    a = m.posterior(x)
    assert np.all(a >= 0)
    np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.isfinite(m.log_density(x)))
    assert math.isclose(float(np.exp(m.log_density(x[0]))), float(m.density(x[0])), rel_tol=1e-12)
