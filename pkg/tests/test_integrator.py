import numpy as np
import pytest
from scipy.integrate import solve_ivp

from mobsis.integrator import BoxViolation, DenseSolution, IntegrationError, StepSizeUnderflow, dopri5


def test_harmonic_oscillator_against_scipy():
    def f(t, y):
        return np.array([y[1], -y[0]])

    sol = dopri5(f, 0.0, 10.0, [1.0, 0.0], rtol=1e-6, atol=1e-9)
    ref = solve_ivp(f, (0.0, 10.0), [1.0, 0.0], method="RK45", rtol=1e-6, atol=1e-9)
    # same tableau and controller: same step count and final state
    assert sol.n_steps == ref.t.size - 1
    np.testing.assert_allclose(sol.y[-1], ref.y[:, -1], rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("rtol", [1e-6, 1e-9, 1e-11])
def test_exponential_accuracy(rtol):
    sol = dopri5(lambda t, y: -2.0 * y, 0.0, 3.0, [1.0], rtol=rtol, atol=rtol * 1e-2)
    t = np.linspace(0, 3, 301)
    err = np.max(np.abs(sol(t)[:, 0] - np.exp(-2 * t)))
    assert err < 50 * rtol


def test_dense_output_order():
    # quartic interpolant error well below the tolerance between nodes
    sol = dopri5(lambda t, y: np.cos(t) * np.ones(1), 0.0, 6.0, [0.0], rtol=1e-10, atol=1e-12)
    t = np.linspace(0, 6, 997)
    assert np.max(np.abs(sol(t)[:, 0] - np.sin(t))) < 1e-9


def test_lands_on_endpoint_and_nodes_exact():
    sol = dopri5(lambda t, y: y, 0.3, 1.7, [1.0])
    assert sol.t1 == 1.7
    np.testing.assert_array_equal(sol(sol.t), sol.y)
    assert sol(1.0).shape == (1,)


def test_step_ceiling():
    sol = dopri5(lambda t, y: np.zeros(1), 0.0, 1.0, [1.0], h_max=0.01)
    assert np.max(np.diff(sol.t)) <= 0.01 + 1e-15
    assert sol.n_steps >= 100


def test_box_clipping_small_excursion():
    # logistic growth to exactly the upper bound
    sol = dopri5(lambda t, y: 5.0 * y * (1 - y), 0.0, 20.0, [0.5], rtol=1e-6, atol=1e-8,
                 lower=np.zeros(1), upper=np.ones(1))
    assert np.all(sol.y <= 1.0) and np.all(sol.y >= 0.0)


def test_box_violation():
    with pytest.raises(BoxViolation) as info:
        dopri5(lambda t, y: np.ones(1), 0.0, 2.0, [0.0], lower=np.zeros(1), upper=np.ones(1))
    assert 0.9 < info.value.t < 1.5


def test_underflow():
    # finite-time blow-up at t = 1
    with pytest.raises(StepSizeUnderflow):
        dopri5(lambda t, y: y**2, 0.0, 2.0, [1.0], rtol=1e-10, atol=1e-12)


def test_too_many_steps():
    with pytest.raises(IntegrationError):
        dopri5(lambda t, y: -y, 0.0, 1.0, [1.0], h_max=1e-3, max_steps=10)


def test_bad_interval():
    with pytest.raises(ValueError):
        dopri5(lambda t, y: y, 1.0, 1.0, [1.0])


def test_dense_solution_single_node():
    d = DenseSolution(np.array([0.0]), np.array([[2.0]]), np.zeros((0, 1, 4)))
    np.testing.assert_array_equal(d([0.0, 0.5]), [[2.0], [2.0]])
