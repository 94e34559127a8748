import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mobsis.control import ControlSignal, random_control


def test_right_continuous():
    c = ControlSignal([0.0, 1.0, 2.0], [0.0, 1.0, 0.5], T=3.0)
    assert c(0.999) == 0.0
    assert c(1.0) == 1.0
    assert c(2.0) == 0.5
    assert c(3.0) == 0.5
    np.testing.assert_array_equal(c(np.array([0.5, 1.5, 2.5])), [0.0, 1.0, 0.5])


@pytest.mark.parametrize(
    "bps, vals",
    [([0.5], [1.0]), ([0.0, 1.0, 1.0], [0, 1, 0]), ([0.0], [1.2]), ([0.0, 4.0], [0, 1]), ([], [])],
)
def test_invalid(bps, vals):
    with pytest.raises(ValueError):
        ControlSignal(bps, vals, T=3.0)


def test_threshold_edges():
    assert ControlSignal.threshold(0.0, 5.0).values.tolist() == [1.0]
    assert ControlSignal.threshold(5.0, 5.0).values.tolist() == [0.0]
    c = ControlSignal.threshold(2.0, 5.0)
    assert c.n_discontinuities == 1 and c.is_bang_bang()
    assert c.integral() == 3.0
    with pytest.raises(ValueError):
        ControlSignal.threshold(-1.0, 5.0)


def test_square_wave():
    c = ControlSignal.square_wave(1.0, 0.25, 4.0)
    assert c.breakpoints.tolist() == [0, 0.25, 1, 1.25, 2, 2.25, 3, 3.25]
    assert c(0.1) == 1.0 and c(0.5) == 0.0
    assert c.integral() == pytest.approx(1.0)
    assert ControlSignal.square_wave(0.3, 1.0, 2.0).n_discontinuities == 0


def test_segments_and_budget():
    c = ControlSignal([0.0, 1.0, 2.0], [0.3, 0.3, 1.0], T=3.0)
    assert list(c.segments()) == [(0.0, 1.0, 0.3), (1.0, 2.0, 0.3), (2.0, 3.0, 1.0)]
    # a breakpoint without a value change is not a discontinuity
    assert c.n_discontinuities == 1
    assert c.in_budget(1) and not c.in_budget(0)
    assert not c.is_bang_bang()


@given(st.integers(0, 2**32 - 1), st.integers(0, 6), st.floats(0.0, 5.0))
def test_integral_matches_quadrature(seed, B, t):
    c = random_control(np.random.default_rng(seed), 5.0, B)
    assert c.in_budget(B)
    grid = np.linspace(0.0, t, 200_001)
    mid = 0.5 * (grid[1:] + grid[:-1])
    quad = float(np.sum(c(mid)) * (t / 200_000)) if t > 0 else 0.0
    assert c.integral(t) == pytest.approx(quad, abs=1e-4)
    assert 0.0 <= c.integral(t) <= t + 1e-15


def test_random_bang_bang():
    rng = np.random.default_rng(3)
    for _ in range(20):
        c = random_control(rng, 5.0, 3, bang_bang=True)
        assert c.is_bang_bang() and c.in_budget(3)


def test_cumulative_monotone():
    c = ControlSignal.square_wave(0.7, 0.4, 5.0)
    cum = c.cumulative(np.linspace(0, 5, 101))
    assert np.all(np.diff(cum) >= 0)
    assert cum[-1] == pytest.approx(c.integral())


@given(st.integers(0, 2**32 - 1), st.integers(0, 8))
def test_cumulative_matches_integral(seed, B):
    rng = np.random.default_rng(seed)
    c = random_control(rng, 5.0, B)
    times = np.concatenate((rng.uniform(0, 5.0, 30), c.breakpoints, [5.0]))
    want = [c.integral(t) for t in times]
    np.testing.assert_allclose(c.cumulative(times), want, rtol=0, atol=1e-14)
