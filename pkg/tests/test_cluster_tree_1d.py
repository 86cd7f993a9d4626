import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from modalclust.cluster_tree_1d import (
    build_tree,
    component_counts,
    coverage_level,
    default_grid,
    level_set,
    minima_partition,
)
from modalclust.density_models import NormalMixture
from modalclust.errors import DegenerateDensityError, InputError
from modalclust.mode_seek import UNASSIGNED
from modalclust.presets import standard_normal

# bisection on the derivative, done in scalar arithmetic (see test_density_models)
MINIMA = [1.7450515233832102, 4.881965949825759]
MINIMUM_VALUES = [0.1093585729904444, 0.043820966858694785]
MAXIMUM_VALUES = [0.21131634473727046, 0.14234430410153548, 0.07154133079555629]


@pytest.fixture(scope="module")
def grid():
    from modalclust.presets import trimodal_1d

    return default_grid(trimodal_1d())


class TestLevelSets:
    def test_between_minimum_values_two_components(self, trimodal, grid):
        # above the lower minimum, below the smallest maximum
        lam = 0.5 * (MINIMUM_VALUES[1] + MAXIMUM_VALUES[2])
        ls = level_set(trimodal, lam, grid)
        assert ls.n_components == 2
        # the two pieces straddle the higher minimum
        assert ls.intervals[0][1] < MINIMA[1] < ls.intervals[1][0]

    def test_never_three_components(self, trimodal, grid):
        levels, counts = component_counts(trimodal, grid=grid)
        assert counts.max() == 2
        # the smallest maximum lies below the higher minimum, so the count goes 1, 2, 1, 2, 1
        m_lo, m_hi = MINIMUM_VALUES[1], MINIMUM_VALUES[0]
        eps = 1e-6
        expected = [((0, m_lo - eps), 1), ((m_lo + eps, MAXIMUM_VALUES[2] - eps), 2),
                    ((MAXIMUM_VALUES[2] + eps, m_hi - eps), 1), ((m_hi + eps, MAXIMUM_VALUES[1] - eps), 2),
                    ((MAXIMUM_VALUES[1] + eps, 1.0), 1)]
        for (lo, hi), k in expected:
            sel = (levels > lo) & (levels < hi)
            assert sel.any() and np.all(counts[sel] == k)

    def test_nested(self, trimodal, grid):
        prev = None
        for lam in np.linspace(0.0, 0.2, 41):
            ls = level_set(trimodal, lam, grid)
            members = set()
            for a, b in ls.runs:
                members.update(range(a, b + 1))
            if prev is not None:
                assert members <= prev
            prev = members

    def test_counts_change_only_at_critical_values(self, trimodal, grid):
        levels, counts = component_counts(trimodal, grid=grid)
        changes = levels[1:][np.diff(counts) != 0]
        critical = np.array(MINIMUM_VALUES + MAXIMUM_VALUES)
        step = np.max(np.abs(np.diff(trimodal.density(grid[:, None]))))
        for c in changes:
            assert np.min(np.abs(critical - c)) <= step

    def test_coverage_level_matches_quadrature(self, trimodal, grid):
        f = lambda t: float(trimodal.density([t]))

        def content(lam):
            xs = np.linspace(-6, 12, 20001)
            above = trimodal.density(xs[:, None]) >= lam
            edges = np.flatnonzero(np.diff(above.astype(int)))
            roots = [brentq(lambda t: f(t) - lam, xs[k], xs[k + 1], xtol=1e-14) for k in edges]
            return sum(quad(f, a, b, epsabs=1e-13)[0] for a, b in zip(roots[::2], roots[1::2]))

        lam_ref = brentq(lambda lam: content(lam) - 0.5, 0.01, 0.2, xtol=1e-12)
        lam = coverage_level(trimodal, 0.5, grid)
        assert lam == pytest.approx(lam_ref, abs=5e-4)
        assert level_set(trimodal, lam, grid).content >= 0.5 - 1e-3

    def test_bad_inputs(self, trimodal, bimodal):
        with pytest.raises(InputError):
            coverage_level(trimodal, 1.0)
        with pytest.raises(InputError):
            level_set(trimodal, -0.1)
        with pytest.raises(InputError):
            build_tree(bimodal)
        with pytest.raises(InputError):
            build_tree(trimodal, np.array([0.0, 2.0, 1.0]))


class TestTree:
    def test_trimodal_shape(self, trimodal, grid):
        tree = build_tree(trimodal, grid)
        step = grid[1] - grid[0]
        assert len(tree.leaves()) == 3 and len(tree.splits()) == 2
        # the first split isolates the rightmost mode, the second separates the other two
        root = tree.root
        assert root.split_points == [pytest.approx(MINIMA[1], abs=step)]
        left, right = root.children
        assert right.is_leaf and not left.is_leaf
        assert left.split_points == [pytest.approx(MINIMA[0], abs=step)]
        assert root.split_level < left.split_level
        np.testing.assert_allclose(tree.split_points, MINIMA, atol=1e-9)

    def test_leaves_equal_minima_partition(self, trimodal, grid):
        tree = build_tree(trimodal, grid)
        mp = minima_partition(trimodal, grid)
        assert np.array_equal(tree.labels(), mp.partition.labels)
        np.testing.assert_allclose(mp.boundaries, MINIMA, atol=grid[1] - grid[0])

    def test_leaves_cover_the_grid(self, trimodal, grid):
        tree = build_tree(trimodal, grid)
        labels = tree.labels()
        assert set(np.unique(labels).tolist()) == {UNASSIGNED, 0, 1, 2}
        assert np.sum(labels == UNASSIGNED) == len(tree.split_indices)
        assert tree.partition().weights.sum() == pytest.approx(1.0)

    def test_fluff_goes_to_nearest_core(self, trimodal, grid):
        tree = build_tree(trimodal, grid)
        node = tree.root
        x = grid
        for run, c in node.fluff:
            a, b = run
            core_a, core_b = node.cores[c]
            for k in range(a, b + 1):
                if core_a <= k <= core_b:
                    continue
                own = min(abs(x[k] - x[core_a]), abs(x[k] - x[core_b]))
                for j, (oa, ob) in enumerate(node.cores):
                    if j != c:
                        assert own <= min(abs(x[k] - x[oa]), abs(x[k] - x[ob]))

    def test_unimodal_single_leaf(self):
        tree = build_tree(standard_normal(1))
        assert len(tree.leaves()) == 1 and tree.splits() == []

    def test_serialisation(self, trimodal, grid):
        doc = build_tree(trimodal, grid).to_dict()
        assert set(doc) >= {"interval", "split_level", "children"}
        assert len(doc["children"]) == 2

    def test_plateau_at_a_minimum_is_degenerate(self):
        base = NormalMixture([0.5, 0.5], [[-2.0], [2.0]], [[[0.5]], [[0.5]]])

        class Floored:
            dim = 1

            def density(self, x):
                return np.maximum(base.density(x), 0.15)

        grid = np.linspace(-3.0, 3.0, 601)
        with pytest.raises(DegenerateDensityError) as err:
            build_tree(Floored(), grid)
        assert err.value.interval[0] < 0 < err.value.interval[1]
