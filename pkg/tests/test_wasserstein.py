import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from sbgsc.analysis import (
    check_assumption1,
    linear_assignment,
    mixture_convexity_check,
    sinkhorn_w2sq,
    w2sq_1d,
    w2sq_empirical,
    w2sq_gaussian,
)
from sbgsc.analysis.assignment import _sap_numba, _sap_numpy
from sbgsc.analysis.wasserstein import sq_dist_matrix
from sbgsc.errors import DomainError, ShapeError, SizeError

square_costs = st.integers(1, 12).flatmap(
    lambda n: st.lists(st.floats(-50, 50, allow_nan=False), min_size=n * n, max_size=n * n).map(
        lambda v: np.array(v).reshape(int(np.sqrt(len(v))), -1)
    )
)


def total(cost, cols):
    return cost[np.arange(len(cols)), cols].sum()


class TestAssignment:
    @given(square_costs)
    def test_matches_scipy(self, cost):
        r, c = linear_sum_assignment(cost)
        want = cost[r, c].sum()
        for jit in (False, True):
            cols = linear_assignment(cost, use_numba=jit)
            assert sorted(cols) == list(range(len(cols)))
            assert total(cost, cols) == pytest.approx(want, abs=1e-9)

    def test_brute_force_small(self):
        cost = np.random.default_rng(0).random((6, 6))
        best = min(sum(cost[i, p[i]] for i in range(6)) for p in itertools.permutations(range(6)))
        assert total(cost, linear_assignment(cost)) == pytest.approx(best, abs=1e-12)

    def test_kernels_agree_on_ties(self):
        # integer costs force many ties
        cost = np.random.default_rng(1).integers(0, 3, (40, 40)).astype(float)
        assert total(cost, _sap_numpy(cost)) == total(cost, _sap_numba(cost))

    def test_large_random(self):
        gen = np.random.default_rng(2)
        cost = sq_dist_matrix(gen.standard_normal((300, 2)), gen.standard_normal((300, 2)))
        r, c = linear_sum_assignment(cost)
        assert total(cost, linear_assignment(cost)) == pytest.approx(cost[r, c].sum(), rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            linear_assignment(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            linear_assignment(np.array([[0.0, np.inf], [1.0, 0.0]]))
        assert linear_assignment(np.zeros((0, 0))).size == 0


class TestEmpirical:
    def test_identical_sets(self):
        a = np.random.default_rng(0).standard_normal((50, 3))
        assert w2sq_empirical(a, a) == 0.0

    @given(st.integers(0, 2**31 - 1))
    def test_translation(self, seed):
        gen = np.random.default_rng(seed)
        a = gen.standard_normal((30, 2))
        v = gen.standard_normal(2) * 3
        assert w2sq_empirical(a, a + v) == pytest.approx(float(v @ v), rel=1e-9)

    def test_two_point_example(self):
        assert w2sq_empirical([0.0, 1.0], [1.0, 2.0]) == pytest.approx(1.0)

    @given(st.integers(0, 2**31 - 1), st.integers(1, 200))
    def test_one_dimensional_agrees_with_sorting(self, seed, n):
        gen = np.random.default_rng(seed)
        a, b = gen.standard_normal(n), 2 * gen.standard_normal(n) + 1
        assert abs(w2sq_empirical(a, b) - w2sq_1d(a, b)) < 1e-10

    def test_numba_and_numpy_paths(self):
        gen = np.random.default_rng(3)
        a, b = gen.standard_normal((200, 2)), gen.standard_normal((200, 2))
        assert w2sq_empirical(a, b, use_numba=True) == pytest.approx(w2sq_empirical(a, b, use_numba=False), rel=1e-12)

    def test_errors(self):
        with pytest.raises(ShapeError):
            w2sq_empirical(np.zeros((3, 2)), np.zeros((4, 2)))
        with pytest.raises(ShapeError):
            w2sq_empirical(np.zeros((3, 2)), np.zeros((3, 1)))
        with pytest.raises(SizeError):
            w2sq_empirical(np.zeros(2049), np.zeros(2049))
        with pytest.raises(ShapeError):
            w2sq_1d([1.0], [1.0, 2.0])


class TestGaussian:
    def test_identical(self):
        c = np.array([[2.0, 0.3], [0.3, 1.0]])
        assert w2sq_gaussian([1, 2], c, [1, 2], c) == pytest.approx(0.0, abs=1e-12)

    def test_mean_shift(self):
        mu = np.array([1.0, -2.0, 0.5])
        assert w2sq_gaussian(np.zeros(3), np.eye(3), mu, np.eye(3)) == pytest.approx(float(mu @ mu))

    @pytest.mark.parametrize("D", [1, 2, 5])
    def test_isotropic_scaling(self, D):
        assert w2sq_gaussian(np.zeros(D), 0.25 * np.eye(D), np.zeros(D), 4.0 * np.eye(D)) == pytest.approx(D * 1.5**2)

    def test_matches_sinkhorn_on_grid_1d(self):
        # discretized N(0, 0.5^2) and N(0, 2^2); grid bias measured at about 0.7%
        x = np.linspace(-10, 10, 201)
        wa = np.exp(-0.5 * (x / 0.5) ** 2)
        wb = np.exp(-0.5 * (x / 2.0) ** 2)
        est = sinkhorn_w2sq(x, wa / wa.sum(), x, wb / wb.sum(), reg=1e-3, tol=1e-9)
        assert est == pytest.approx(w2sq_gaussian([0], [[0.25]], [0], [[4.0]]), rel=0.01)

    def test_sinkhorn_dimensional_scaling(self):
        # on a product grid the 2D cost is twice the 1D cost; the coarse grid
        # itself inflates the continuum value D (2 - 1)^2 by about 12%
        g = np.linspace(-7, 7, 21)
        wa1, wb1 = np.exp(-0.5 * g**2), np.exp(-0.5 * (g / 2.0) ** 2)
        one = sinkhorn_w2sq(g, wa1 / wa1.sum(), g, wb1 / wb1.sum(), reg=5e-2, n_iter=2000, tol=1e-10)
        pts = np.array(list(itertools.product(g, g)))
        wa, wb = np.outer(wa1, wa1).ravel(), np.outer(wb1, wb1).ravel()
        two = sinkhorn_w2sq(pts, wa / wa.sum(), pts, wb / wb.sum(), reg=5e-2, n_iter=2000, tol=1e-8)
        assert two == pytest.approx(2.0 * one, rel=1e-3)
        assert two == pytest.approx(w2sq_gaussian(np.zeros(2), np.eye(2), np.zeros(2), 4.0 * np.eye(2)), rel=0.15)

    def test_non_psd(self):
        with pytest.raises(DomainError):
            w2sq_gaussian([0, 0], [[1, 0], [0, -1]], [0, 0], np.eye(2))
        with pytest.raises(DomainError):
            w2sq_gaussian([0, 0], [[1, 0.5], [0, 1]], [0, 0], np.eye(2))

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            w2sq_gaussian([0, 0], np.eye(2), [0, 0, 0], np.eye(3))

    @given(st.integers(0, 2**31 - 1), st.integers(1, 4))
    def test_symmetric_and_zero_iff_equal(self, seed, D):
        gen = np.random.default_rng(seed)
        A, B = gen.standard_normal((2, D, D))
        c1, c2 = A @ A.T + 0.1 * np.eye(D), B @ B.T + 0.1 * np.eye(D)
        m1, m2 = gen.standard_normal((2, D))
        d12 = w2sq_gaussian(m1, c1, m2, c2)
        assert d12 == pytest.approx(w2sq_gaussian(m2, c2, m1, c1), rel=1e-7, abs=1e-9)
        assert d12 > 0
        assert w2sq_gaussian(m1, c1, m1, c1) == pytest.approx(0.0, abs=1e-8)


class TestAssumption:
    def test_semantic_equals_data(self):
        data = np.random.default_rng(0).standard_normal((128, 2)) + 3.0
        r = check_assumption1(data, data, rng=1, n_bootstrap=20)
        assert r.w2_semantic == 0.0 and r.holds and r.ci_excludes_zero

    def test_prior_draw_is_a_tie(self):
        # the semantic set is itself N(0, I): the bootstrap interval straddles zero
        gen = np.random.default_rng(2)
        data = gen.standard_normal((256, 2))
        r = check_assumption1(gen.standard_normal((256, 2)), data, rng=3, n_bootstrap=100)
        assert r.ci_low < 0.0 < r.ci_high

    def test_report_dict(self):
        d = check_assumption1(np.ones((8, 1)), np.ones((8, 1)), n_bootstrap=4).to_dict()
        assert set(d) == {"w2_semantic", "w2_prior", "holds", "ci_low", "ci_high", "n_bootstrap", "ci_excludes_zero"}

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            check_assumption1(np.zeros((4, 2)), np.zeros((5, 2)))


class TestConvexity:
    def test_single_component(self):
        gen = np.random.default_rng(0)
        mu, nu = gen.standard_normal((100, 2)), gen.standard_normal((100, 2)) + 1
        r = mixture_convexity_check(mu, [nu], [1.0], rng=1)
        assert r.lhs == r.rhs and r.holds

    def test_symmetric_mixture_strictly_smaller(self):
        gen = np.random.default_rng(4)
        n = 512
        mu = gen.standard_normal((n, 1))
        comps = [gen.standard_normal((n, 1)) - 2.0, gen.standard_normal((n, 1)) + 2.0]
        r = mixture_convexity_check(mu, comps, [0.5, 0.5], rng=5)
        assert r.holds and r.lhs < r.rhs

    def test_identical_components(self):
        gen = np.random.default_rng(6)
        mu = gen.standard_normal((400, 2))
        nu = gen.standard_normal((400, 2)) + 1.0
        r = mixture_convexity_check(mu, [nu, nu.copy()], [0.3, 0.7], rng=7)
        assert abs(r.lhs - r.rhs) <= 0.1 * r.rhs

    def test_weight_validation(self):
        a = np.zeros((4, 1))
        with pytest.raises(DomainError):
            mixture_convexity_check(a, [a, a], [0.6, 0.6])
        with pytest.raises(DomainError):
            mixture_convexity_check(a, [a], [0.5, 0.5])
        with pytest.raises(ShapeError):
            mixture_convexity_check(a, [np.zeros((5, 1))], [1.0])
