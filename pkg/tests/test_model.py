import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mobsis.model import (
    FluidState,
    ModelParams,
    ParameterError,
    endemic_equilibrium,
    equilibrium_xstar,
    equilibrium_xstar_derivative,
    f_slow,
    fast_rates,
    g_fast,
    network_effect_dR,
    network_effect_R,
    reduced_rhs,
    sustain_margin,
    sustain_verdict,
    xstar_all,
)

from conftest import valid_params


def bisect_root(f, lo, hi, iters=200):
    flo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def single(m, gamma, mu, nu=1.0):
    # K=1 model whose community 1 has the given (m, gamma, mu)
    return ModelParams([1 - m, m], [1.0, gamma], [nu], [2.0, mu])


class TestParams:
    def test_fig1_valid(self, fig1):
        assert fig1.validate() == []
        assert fig1.K == 2
        np.testing.assert_allclose(fig1.b, [1.6, 1.7, 1.7])

    def test_arrays_read_only(self, fig1):
        with pytest.raises(ValueError):
            fig1.m[0] = 0.5

    @pytest.mark.parametrize(
        "change, needle",
        [
            (dict(mu=(2.0, 0.2, 2.0)), "k=1"),
            (dict(gamma=(1.0, 0.0, 1.0)), "k=1"),
            (dict(m=(0.5, 0.3, 0.3)), "sum"),
            (dict(nu=(8.0, -1.0)), "nu"),
            (dict(epsilon=0.0), "epsilon"),
            (dict(T=-1.0), "T"),
            (dict(nu=(8.0,)), "length"),
        ],
    )
    def test_rejects(self, fig1, change, needle):
        problems = fig1.replace(**change).validate()
        assert problems and any(needle in p for p in problems)
        with pytest.raises(ParameterError):
            fig1.replace(**change).require_valid()

    def test_normalized(self):
        p = ModelParams((2.0, 1.0, 1.0), (1, 1, 1), (8, 8), (2, 2, 2)).normalized()
        np.testing.assert_allclose(p.m, [0.5, 0.25, 0.25])
        assert p.validate() == []

    def test_roundtrip_dict(self, fig1):
        q = ModelParams(**fig1.to_dict())
        assert q.to_dict() == fig1.to_dict()


class TestDrivingFunctions:
    def test_g_fast_hand_value(self):
        # -2*0.05 + (0.3-0.05)*(0.05 + 0.5) = -0.1 + 0.1375
        p = single(0.3, 1.0, 2.0, nu=5.0)
        assert g_fast(p, 1, 0.1, 0.05, 1.0) == pytest.approx(0.0375, abs=1e-15)

    def test_g_fast_reference_example(self, fig1):
        # -2(0.05) + 0.25(0.05 + 0.8)
        assert g_fast(fig1, 1, 0.1, 0.05, 1.0) == pytest.approx(0.1125, abs=1e-15)

    def test_g_fast_hand_value_fig1(self, fig1):
        # x0=0.1, xk=0.05, u=0.5: -0.1 + 0.25*(0.05 + 8*0.05) = 0.0125
        assert g_fast(fig1, 1, 0.1, 0.05, 0.5) == pytest.approx(0.0125, abs=1e-15)

    def test_f_slow_hand_value(self, fig1):
        # x0=0.1, x=(0.05,0), u=1: -0.2 + 0.3*(0.1 + 0.4) = -0.05
        assert f_slow(fig1, 0.1, [0.05, 0.0], 1.0) == pytest.approx(-0.05, abs=1e-15)
        # x=(0.05, 0.05): -0.2 + 0.3*(0.1 + 0.8)
        assert f_slow(fig1, 0.1, [0.05, 0.05], 1.0) == pytest.approx(0.07, abs=1e-15)
        # x=(0.1, 0.1): -0.2 + 0.3*(0.1 + 1.6) = 0.31
        assert f_slow(fig1, 0.1, [0.1, 0.1], 1.0) == pytest.approx(0.31, abs=1e-15)

    def test_index_and_shape_errors(self, fig1):
        with pytest.raises(IndexError):
            g_fast(fig1, 0, 0.1, 0.1, 1.0)
        with pytest.raises(IndexError):
            g_fast(fig1, 3, 0.1, 0.1, 1.0)
        with pytest.raises(ValueError):
            f_slow(fig1, 0.1, [0.1], 1.0)

    def test_fast_rates_matches_g(self, fig1):
        x = np.array([0.07, 0.2])
        got = fast_rates(fig1, 0.2, x, 0.6)
        want = [g_fast(fig1, k, 0.2, x[k - 1], 0.6) for k in (1, 2)]
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-16)


class TestFastEquilibrium:
    def test_hand_value_against_bisection(self):
        # m=0.3, gamma=1, mu=2, xi=1
        p = single(0.3, 1.0, 2.0)
        oracle = bisect_root(lambda x: -2 * x + (0.3 - x) * (x + 1.0), 0.0, 0.3)
        # the same root from the quadratic -x^2 - 2.7x + 0.3 = 0
        assert oracle == pytest.approx((-2.7 + math.sqrt(2.7**2 + 1.2)) / 2, rel=1e-14)
        assert oracle == pytest.approx(0.1068802, abs=1e-7)
        assert equilibrium_xstar(p, 1, 1.0) == pytest.approx(oracle, rel=1e-13)

    def test_zero_input(self, fig1):
        assert equilibrium_xstar(fig1, 1, 0.0) == 0.0

    def test_negative_input_rejected(self, fig1):
        with pytest.raises(ValueError):
            equilibrium_xstar(fig1, 1, -1e-3)

    @given(valid_params(), st.floats(1e-9, 1e3))
    def test_root_in_bounds(self, p, xi):
        for k in range(1, p.K + 1):
            x = equilibrium_xstar(p, k, xi)
            m, b = p.m[k], p.b[k]
            assert 0 < x <= m * xi / (b + xi) * (1 + 1e-14)
            # magnitude of the expanded terms; (m - x) cancels when x* is close to m
            scale = p.mu[k] * x + (m + x) * (p.gamma[k] * x + xi)
            assert abs(-p.mu[k] * x + (m - x) * (p.gamma[k] * x + xi)) <= 1e-12 * scale

    @given(valid_params(), st.floats(1e-6, 1e2))
    def test_unique_root(self, p, xi):
        # the driving function is a downward parabola, positive at 0 and negative at m
        k = 1
        m, g, mu = p.m[k], p.gamma[k], p.mu[k]
        grid = np.linspace(0, m, 2001)
        vals = -mu * grid + (m - grid) * (g * grid + xi)
        assert np.count_nonzero(np.diff(np.sign(vals)) != 0) == 1

    @given(valid_params(), st.floats(1e-4, 1e2))
    def test_derivative_matches_fd(self, p, xi):
        h = 1e-6 * xi
        fd = (equilibrium_xstar(p, 1, xi + h) - equilibrium_xstar(p, 1, xi - h)) / (2 * h)
        assert equilibrium_xstar_derivative(p, 1, xi) == pytest.approx(fd, rel=1e-6)

    def test_derivative_at_zero(self, fig1):
        assert equilibrium_xstar_derivative(fig1, 1, 0.0) == pytest.approx(0.3 / 1.7, rel=1e-14)

    def test_vectorized(self, fig1):
        xi = np.array([0.0, 0.5, 2.0])
        got = equilibrium_xstar(fig1, 2, xi)
        assert got.shape == (3,)
        assert got[1] == equilibrium_xstar(fig1, 2, 0.5)


class TestNetworkEffect:
    def test_R_is_weighted_sum(self, fig1):
        y = 0.07
        want = sum(fig1.nu[k - 1] * equilibrium_xstar(fig1, k, fig1.nu[k - 1] * y) for k in (1, 2))
        assert network_effect_R(fig1, y) == pytest.approx(want, rel=1e-15)
        np.testing.assert_allclose(xstar_all(fig1, y), [equilibrium_xstar(fig1, 1, 8 * y)] * 2)

    @given(valid_params(), st.floats(1e-4, 0.5))
    def test_dR_matches_fd(self, p, y):
        h = 1e-6 * y
        fd = (network_effect_R(p, y + h) - network_effect_R(p, y - h)) / (2 * h)
        assert network_effect_dR(p, y) == pytest.approx(fd, rel=1e-5, abs=1e-9)

    def test_reduced_rhs_artificial(self, fig1):
        x0 = 0.1
        assert reduced_rhs(fig1, x0, 1.0) == reduced_rhs(fig1, x0, 1.0, artificial=True)
        # u = 0 kills the infection term in both
        assert reduced_rhs(fig1, x0, 0.0, artificial=True) == pytest.approx(-0.2)
        half = reduced_rhs(fig1, x0, 0.5)
        half_art = reduced_rhs(fig1, x0, 0.5, artificial=True)
        assert half_art > half


class TestSustain:
    def test_fig1_margin(self, fig1):
        # -1.6 + 0.4 * 2 * 0.3 * 64 / 1.7
        assert sustain_margin(fig1) == pytest.approx(-1.6 + 0.4 * 2 * 0.3 * 64 / 1.7, rel=1e-15)
        assert sustain_margin(fig1) == pytest.approx(7.435294117647061, rel=1e-14)
        assert sustain_verdict(fig1) == "sustains"

    def test_margin_is_slope_at_zero(self, fig1):
        h = 1e-7
        fd = reduced_rhs(fig1, h, 1.0) / h
        assert fd == pytest.approx(sustain_margin(fig1), rel=1e-5)

    def test_no_network(self, fig1):
        p = fig1.replace(nu=(0.0, 0.0))
        assert sustain_verdict(p) == "criterion-not-met"
        assert endemic_equilibrium(p) is None

    def test_inconclusive(self, fig1):
        # choose nu so that the margin vanishes exactly: m0 * 2 * 0.3 nu^2 / 1.7 = 1.6
        nu = math.sqrt(1.6 * 1.7 / (0.4 * 0.6))
        p = fig1.replace(nu=(nu, nu))
        assert abs(sustain_margin(p)) < 1e-13
        assert sustain_verdict(p) == "inconclusive"

    def test_endemic_equilibrium_bisection_oracle(self, fig1):
        xbar = endemic_equilibrium(fig1)
        oracle = bisect_root(lambda x: reduced_rhs(fig1, x, 1.0), 0.05, 0.4)
        assert xbar == pytest.approx(oracle, abs=1e-11)
        assert reduced_rhs(fig1, xbar, 1.0) == pytest.approx(0.0, abs=1e-10)
        # stable: field decreasing through the root
        assert reduced_rhs(fig1, xbar - 1e-4, 1.0) > 0 > reduced_rhs(fig1, xbar + 1e-4, 1.0)


class TestFluidState:
    def test_roundtrip(self):
        s = FluidState(0.1, [0.2, 0.05])
        t = FluidState.from_array(s.as_array())
        assert t.x0 == 0.1 and list(t.x) == [0.2, 0.05]

    def test_in_box(self, fig1):
        assert FluidState(0.4, [0.3, 0.0]).in_box(fig1)
        assert not FluidState(0.41, [0.3, 0.0]).in_box(fig1)
        assert FluidState(0.4 + 1e-12, [0.3, 0.0]).in_box(fig1, tol=1e-10)


def test_vector_field_points_into_box():
    rng = np.random.default_rng(12)
    for _ in range(1000):
        from conftest import random_params

        p = random_params(rng)
        u = rng.uniform(0, 1)
        x0 = rng.uniform(0, p.m[0])
        x = rng.uniform(0, 1, p.K) * p.m[1:]
        k = int(rng.integers(1, p.K + 1))
        assert g_fast(p, k, x0, 0.0, u) >= 0
        assert g_fast(p, k, x0, p.m[k], u) < 0
        assert f_slow(p, 0.0, x, u) >= 0
        assert f_slow(p, p.m[0], x, u) < 0
