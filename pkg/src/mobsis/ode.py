"""Deterministic integration of the two-timescale fluid system and its reductions.

Every integration is split at the control breakpoints so the right-hand side
is smooth on each piece; the integrator lands on each breakpoint exactly.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .control import ControlSignal
from .integrator import DenseSolution, StepBudgetExceeded, StepSizeUnderflow, dopri5
from .model import FluidState, ModelParams, _xstar

log = logging.getLogger(__name__)

DEFAULT_RECORD_POINTS = 1001
# relative tolerance -> absolute tolerance on fractions
ATOL_FACTOR = 1e-2
# the fast components never take steps longer than this multiple of epsilon
FAST_STEP_CEILING = 1.0
# below this epsilon an underflow (or an exhausted step budget) switches to the
# quasi-static fast components
HYBRID_EPSILON = 1e-4
FULL_MAX_STEPS = 500_000


def record_grid(T: float, record=None) -> np.ndarray:
    """Sampling times: a count of uniform points, an explicit array, or the default."""
    if record is None:
        record = DEFAULT_RECORD_POINTS
    if np.isscalar(record):
        n = int(record)
        if n < 2:
            raise ValueError("record grid needs at least 2 points")
        return np.linspace(0.0, T, n)
    times = np.asarray(record, dtype=float).reshape(-1)
    if times.size == 0:
        raise ValueError("empty record grid")
    if np.any(np.diff(times) < 0) or times[0] < 0 or times[-1] > T:
        raise ValueError("record times must be sorted and inside [0, T]")
    return times


@dataclass
class Trajectory:
    """Sampled path of infected fractions.

    ``states[:, 0]`` is the mobile community and ``states[:, k]`` community k.
    For the reduced systems the fast columns hold the quasi-static equilibria.
    """

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    running_cost: np.ndarray
    system: str = "full"
    events: Optional[np.ndarray] = None
    pieces: list = field(default_factory=list, repr=False)
    # stochastic runs only: per-transition tallies and absorption flag
    counters: Optional[np.ndarray] = None
    extinct: Optional[bool] = None

    @property
    def x0(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def terminal_x0(self) -> float:
        return float(self.states[-1, 0])

    def dense_x0(self, t) -> np.ndarray:
        """Evaluate the slow component between samples via the integrator's interpolant."""
        if not self.pieces:
            raise ValueError("trajectory carries no dense output")
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty_like(t)
        starts = np.array([p.t0 for p in self.pieces])
        idx = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(self.pieces) - 1)
        for j in np.unique(idx):
            sel = idx == j
            out[sel] = self.pieces[j](t[sel])[:, 0]
        return out

    def sup_distance(self, other: "Trajectory", t_min: float = 0.0, slow_only: bool = False) -> float:
        """Sup over shared sample times ``>= t_min`` of the max-abs state difference."""
        if self.times.shape != other.times.shape or not np.allclose(self.times, other.times, rtol=0, atol=1e-12):
            raise ValueError("trajectories are sampled on different grids")
        sel = self.times >= t_min
        cols = slice(0, 1) if slow_only else slice(None)
        diff = np.abs(self.states[sel, cols] - other.states[sel, cols])
        return float(diff.max()) if diff.size else 0.0

    def csv_header(self) -> list[str]:
        K = self.states.shape[1] - 1
        return ["t"] + [f"x{k}" for k in range(K + 1)] + ["u", "events_total"]

    def csv_rows(self):
        events = self.events if self.events is not None else np.zeros(len(self.times), dtype=int)
        for t, row, u, ev in zip(self.times, self.states, self.controls, events):
            yield [t, *row, u, int(ev)]


def _check_control(params: ModelParams, control: ControlSignal) -> None:
    if control.T < params.T * (1 - 1e-15):
        raise ValueError(f"control defined up to {control.T}, horizon is {params.T}")


def _integrate_pieces(rhs_for, y0, control, T, tol, upper, h_max=np.inf, max_steps=2_000_000):
    """Integrate segment by segment; ``rhs_for(u)`` builds the smooth field for level u."""
    y = np.asarray(y0, dtype=float)
    pieces = []
    for a, b, u in control.segments(T):
        sol = dopri5(
            rhs_for(u), a, b, y, rtol=tol, atol=tol * ATOL_FACTOR, h_max=h_max,
            lower=np.zeros_like(upper), upper=upper, max_steps=max_steps,
        )
        pieces.append(sol)
        y = sol.y[-1]
    return pieces


def _sample(pieces: Sequence[DenseSolution], times: np.ndarray) -> np.ndarray:
    ends = np.array([p.t1 for p in pieces])
    # a time on a breakpoint belongs to the piece that starts there (state is continuous anyway)
    idx = np.minimum(np.searchsorted(ends, times, side="right"), len(pieces) - 1)
    out = np.empty((times.size, pieces[0].y.shape[1]))
    for j in np.unique(idx):
        sel = idx == j
        out[sel] = pieces[j](times[sel])
    return out


def _check_tol(tol):
    if not 1e-12 <= tol <= 1e-3:
        raise ValueError("tol must lie in [1e-12, 1e-3]")


def integrate_full(
    params: ModelParams,
    init: FluidState,
    control: ControlSignal,
    tol: float = 1e-8,
    record=None,
) -> Trajectory:
    """Integrate ``eps * x_k' = g_k``, ``x0' = f`` on ``[0, T]``."""
    _check_tol(tol)
    _check_control(params, control)
    if not init.in_box(params):
        raise ValueError("initial state outside the box [0, m]")
    T = params.T
    eps = params.epsilon
    m0, g0, mu0 = params.m[0], params.gamma[0], params.mu[0]
    m, g, mu, nu = params.m[1:], params.gamma[1:], params.mu[1:], params.nu

    def rhs_for(u):
        def rhs(t, y):
            x0, x = y[0], y[1:]
            dx0 = -mu0 * x0 + (m0 - x0) * (g0 * x0 + nu @ x) * u
            dx = (-mu * x + (m - x) * (g * x + nu * (x0 * u))) / eps
            return np.concatenate(((dx0,), dx))

        return rhs

    times = record_grid(T, record)

    def hybrid(reason):
        log.warning("%s at eps=%g; using quasi-static fast components", reason, eps)
        red = integrate_reduced(params, init.x0, control, tol, record=times)
        red.system = "full-quasi-static"
        return red

    h_max = FAST_STEP_CEILING * eps
    if eps < HYBRID_EPSILON and T / h_max > FULL_MAX_STEPS:
        # the ceiling alone already exhausts the step budget
        return hybrid("step budget")
    try:
        pieces = _integrate_pieces(
            rhs_for, init.as_array(), control, T, tol, params.m, h_max=h_max, max_steps=FULL_MAX_STEPS
        )
    except (StepSizeUnderflow, StepBudgetExceeded) as exc:
        if eps >= HYBRID_EPSILON:
            raise
        return hybrid(exc)
    states = _sample(pieces, times)
    return Trajectory(times, states, control(times), control.cumulative(times), "full", pieces=pieces)


def _reduced(params, x0_init, control, tol, record, artificial):
    _check_tol(tol)
    _check_control(params, control)
    m0 = params.m[0]
    if not 0.0 <= x0_init <= m0:
        raise ValueError(f"x0_init must lie in [0, {m0}]")
    T = params.T
    g0, mu0 = params.gamma[0], params.mu[0]
    m, g, b, nu = params.m[1:], params.gamma[1:], params.b[1:], params.nu

    # scalar field in plain floats: this is the hot loop of every cost evaluation
    comm = [tuple(map(float, row)) for row in zip(m, g, b, nu)]
    m0f, g0f, mu0f = float(m0), float(g0), float(mu0)
    sqrt = math.sqrt

    def rhs_for(u):
        def rhs(t, y):
            x0 = float(y[0])
            arg = max(x0 if artificial else x0 * u, 0.0)
            R = 0.0
            for mk, gk, bk, nuk in comm:
                xi = nuk * arg
                s = bk + xi
                R += nuk * 2.0 * mk * xi / (s + sqrt(s * s + 4.0 * gk * mk * xi))
            return np.array([-mu0f * x0 + (m0f - x0) * (g0f * x0 + R) * u])

        return rhs

    times = record_grid(T, record)
    pieces = _integrate_pieces(rhs_for, [x0_init], control, T, tol, np.array([m0]))
    x0 = _sample(pieces, times)[:, 0]
    u = control(times)
    arg = np.maximum(x0 if artificial else x0 * u, 0.0)
    fast = _xstar(m, g, b, np.outer(arg, nu))
    states = np.column_stack([x0, fast])
    name = "artificial" if artificial else "reduced"
    return Trajectory(times, states, u, control.cumulative(times), name, pieces=pieces)


def integrate_reduced(params, x0_init, control, tol=1e-8, record=None) -> Trajectory:
    """Scalar slow ODE with the network effect evaluated at ``x0 * u``."""
    return _reduced(params, float(x0_init), control, tol, record, artificial=False)


def integrate_artificial(params, x0_init, control, tol=1e-8, record=None) -> Trajectory:
    """Scalar slow ODE with the network effect always felt, at ``x0``."""
    return _reduced(params, float(x0_init), control, tol, record, artificial=True)


def integrate(system: str, params, init, control, tol=1e-8, record=None) -> Trajectory:
    """Dispatch on ``system`` in {'full', 'reduced', 'artificial'}."""
    if system == "full":
        if not isinstance(init, FluidState):
            raise TypeError("full system needs a FluidState initial condition")
        return integrate_full(params, init, control, tol, record)
    x0 = init.x0 if isinstance(init, FluidState) else float(init)
    if system == "reduced":
        return integrate_reduced(params, x0, control, tol, record)
    if system == "artificial":
        return integrate_artificial(params, x0, control, tol, record)
    raise ValueError(f"unknown system {system!r}")
