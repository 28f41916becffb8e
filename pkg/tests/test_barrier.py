import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crhmc.barrier import BOUND_CLAMP, BoxBarrier, clamp_bounds
from crhmc.errors import InfeasiblePointError


def central_diff(f, x, eps=1e-6):
    n = x.size
    out = np.zeros(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = eps
        out[i] = (f(x + e) - f(x - e)) / (2 * eps)
    return out


def random_barrier_and_point(rng, n):
    l = rng.uniform(-3.0, 0.0, n)
    u = l + rng.uniform(0.5, 4.0, n)
    t = rng.uniform(0.1, 0.9, n)
    return BoxBarrier(l, u), l + t * (u - l)


class TestClamping:
    def test_infinite_bounds_clamped(self):
        l, u = clamp_bounds([-np.inf, 0.0], [np.inf, 1.0])
        np.testing.assert_array_equal(l, [-BOUND_CLAMP, 0.0])
        np.testing.assert_array_equal(u, [BOUND_CLAMP, 1.0])

    def test_equal_bounds_rejected(self):
        with pytest.raises(ValueError):
            BoxBarrier([0.0, 1.0], [1.0, 1.0])


class TestGradient:
    def test_symmetric_point_is_zero(self):
        B = BoxBarrier([0.0], [1.0])
        np.testing.assert_allclose(B.gradient(np.array([0.5])), [0.0])

    def test_hand_value(self):
        B = BoxBarrier([0.0], [1.0])
        assert B.gradient(np.array([0.25]))[0] == pytest.approx(-8.0 / 3.0)

    def test_matches_central_difference(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            B, x = random_barrier_and_point(rng, 6)
            g = B.gradient(x)
            fd = central_diff(B.value, x)
            assert np.max(np.abs(g - fd)) / max(1.0, np.max(np.abs(g))) <= 1e-6

    def test_boundary_point_raises(self):
        B = BoxBarrier([0.0], [1.0])
        with pytest.raises(InfeasiblePointError):
            B.gradient(np.array([0.0]))
        with pytest.raises(InfeasiblePointError):
            B.gradient(np.array([1.5]))


class TestHessianDiag:
    def test_hand_value_symmetric(self):
        B = BoxBarrier([-0.5], [0.5])
        assert B.hessian_diag(np.array([0.0]))[0] == pytest.approx(8.0)

    def test_one_sided_clamped(self):
        B = BoxBarrier([0.0], [np.inf])
        g = B.hessian_diag(np.array([1.0]))[0]
        assert g == pytest.approx(1.0 + (BOUND_CLAMP - 1.0) ** -2, rel=1e-12)

    def test_blow_up_toward_boundary(self):
        B = BoxBarrier([0.0], [1.0])
        xs = [1e-2, 1e-4, 1e-6]
        gs = [B.hessian_diag(np.array([x]))[0] for x in xs]
        assert gs[0] < gs[1] < gs[2]
        assert gs[2] > 1e12

    def test_positive_everywhere(self):
        rng = np.random.default_rng(6)
        B, x = random_barrier_and_point(rng, 10)
        assert np.all(B.hessian_diag(x) > 0)


class TestHessianDerivDiag:
    def test_symmetric_point_is_zero(self):
        B = BoxBarrier([0.0, -2.0], [1.0, 4.0])
        np.testing.assert_allclose(B.hessian_deriv_diag(B.center()), [0.0, 0.0])

    def test_hand_value(self):
        B = BoxBarrier([0.0], [1.0])
        expected = -2.0 / 0.25**3 + 2.0 / 0.75**3
        assert B.hessian_deriv_diag(np.array([0.25]))[0] == pytest.approx(expected)

    def test_matches_central_difference_of_hessian(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            B, x = random_barrier_and_point(rng, 5)
            dg = B.hessian_deriv_diag(x)
            fd = np.zeros(5)
            for i in range(5):
                e = np.zeros(5)
                e[i] = 1e-6
                fd[i] = (B.hessian_diag(x + e)[i] - B.hessian_diag(x - e)[i]) / 2e-6
            assert np.max(np.abs(dg - fd)) / max(1.0, np.max(np.abs(dg))) <= 1e-5


class TestStepToBoundary:
    def test_unit_direction(self):
        B = BoxBarrier([-0.5], [0.5])
        assert B.step_to_boundary(np.array([0.0]), np.array([1.0])) == pytest.approx(0.5)

    def test_zero_direction(self):
        B = BoxBarrier([-0.5, 0.0], [0.5, 1.0])
        assert B.step_to_boundary(np.array([0.0, 0.5]), np.zeros(2)) == np.inf

    def test_against_bisection_oracle(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            B, x = random_barrier_and_point(rng, 4)
            d = rng.standard_normal(4)
            t = B.step_to_boundary(x, d)
            lo, hi = 0.0, 1e9
            for _ in range(70):
                mid = 0.5 * (lo + hi)
                y = x + mid * d
                if np.all(y >= B.l) and np.all(y <= B.u):
                    lo = mid
                else:
                    hi = mid
            assert t == pytest.approx(lo, abs=1e-10 * max(1.0, lo))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_self_concordance_properties(seed):
    # with |v|_g <= 1/2: |Dg[v,v]|_{g^{-1}} <= 2 |v|_g^2, and the local metric
    # comparison (1 - |y-x|_g)^2 g(x) <= g(y) elementwise inside the Dikin ball
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 8))
    B, x = random_barrier_and_point(rng, n)
    g = B.hessian_diag(x)
    dg = B.hessian_deriv_diag(x)

    v = rng.standard_normal(n)
    norm_g = np.sqrt(np.sum(g * v * v))
    v *= rng.uniform(0.05, 0.5) / norm_g
    quad = dg * v * v
    lhs = np.sqrt(np.sum(quad * quad / g))
    rhs = 2.0 * np.sum(g * v * v)
    assert lhs <= rhs * (1 + 1e-12)

    w = rng.standard_normal(n)
    w *= rng.uniform(0.05, 0.95) / np.sqrt(np.sum(g * w * w))
    y = x + w
    r = np.sqrt(np.sum(g * w * w))
    gy = B.hessian_diag(y)
    assert np.all((1.0 - r) ** 2 * g <= gy * (1 + 1e-12))
