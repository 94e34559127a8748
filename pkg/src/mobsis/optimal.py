"""Campaign cost, threshold-policy search and minimum-principle diagnostics.

The cost of a control ``u`` is ``int_0^T u dt - x0(T)``.  The alternative
``objective="disease"`` scores ``int_0^T (1 - u) dt + x0(T)`` instead.
The co-state and switching function are formed on the artificial system,
where the network effect does not depend on the control.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .control import ControlSignal
from .ctmc import EmpiricalState, SimConfig, monte_carlo
from .integrator import dopri5
from .model import ModelParams, network_effect_dR, network_effect_R
from .ode import ATOL_FACTOR, integrate, integrate_artificial

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
OBJECTIVES = ("campaign", "disease")


@dataclass(frozen=True)
class CostReport:
    control_cost: float
    terminal_value: float
    T: float
    objective: str = "campaign"
    std_error: Optional[float] = None

    @property
    def total(self) -> float:
        if self.objective == "disease":
            return (self.T - self.control_cost) + self.terminal_value
        return self.control_cost - self.terminal_value


def evaluate_cost(
    system: str,
    params: ModelParams,
    init,
    control: ControlSignal,
    tol: float = 1e-10,
    cfg: Optional[SimConfig] = None,
    replications: int = 100,
    objective: str = "campaign",
) -> CostReport:
    """Cost of ``control`` on one of 'reduced', 'artificial', 'full' or 'ctmc-ensemble'."""
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    control_cost = control.integral(params.T)
    if system == "ctmc-ensemble":
        if not isinstance(init, EmpiricalState):
            raise TypeError("ctmc-ensemble needs an EmpiricalState initial condition")
        summary = monte_carlo(params, init, control, cfg or SimConfig(), replications)
        # control cost is deterministic, so the spread is all in x0(T)
        return CostReport(
            control_cost, float(summary.mean[-1, 0]), params.T, objective, summary.cost_stderr
        )
    traj = integrate(system, params, init, control, tol, record=2)
    return CostReport(control_cost, traj.terminal_x0, params.T, objective)


def golden_section(f, a: float, b: float, tol: float = 1e-9, max_iter: int = 200):
    """Minimize a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    x1 = b - INV_PHI * (b - a)
    x2 = a + INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - INV_PHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + INV_PHI * (b - a)
            f2 = f(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


@dataclass
class ThresholdSearch:
    tau: float
    cost: CostReport
    taus: np.ndarray
    costs: np.ndarray


def optimize_threshold(
    params: ModelParams,
    x0_init: float,
    T: Optional[float] = None,
    grid_size: int = 512,
    refine_tol: float = 1e-9,
    tol: float = 1e-10,
    system: str = "reduced",
    objective: str = "campaign",
) -> ThresholdSearch:
    """Best switch-on time ``tau`` for ``u = 1{t >= tau}``.

    A uniform grid over ``[0, T]`` (endpoints included) is scanned first since
    ``J(tau)`` need not be unimodal; golden-section then refines around the
    grid minimizer.
    """
    if grid_size < 64:
        raise ValueError("grid_size must be >= 64")
    if T is not None and T != params.T:
        params = params.replace(T=T)
    T = params.T

    def J(tau):
        ctrl = ControlSignal.threshold(tau, T)
        return evaluate_cost(system, params, x0_init, ctrl, tol, objective=objective).total

    taus = np.linspace(0.0, T, grid_size)
    costs = np.array([J(t) for t in taus])
    i = int(np.argmin(costs))
    best_tau, best_J = float(taus[i]), float(costs[i])
    lo, hi = taus[max(i - 1, 0)], taus[min(i + 1, grid_size - 1)]
    tau_ref, J_ref = golden_section(J, lo, hi, refine_tol)
    if J_ref < best_J:
        best_tau, best_J = float(tau_ref), float(J_ref)
    report = evaluate_cost(system, params, x0_init, ControlSignal.threshold(best_tau, T), tol, objective=objective)
    return ThresholdSearch(best_tau, report, taus, costs)


# minimum-principle quantities on the artificial system


def alpha(params: ModelParams, x0):
    return -params.mu[0] * np.asarray(x0, dtype=float)


def beta(params: ModelParams, x0):
    x0 = np.asarray(x0, dtype=float)
    return (params.m[0] - x0) * (params.gamma[0] * x0 + network_effect_R(params, x0))


def beta_prime(params: ModelParams, x0):
    x0 = np.asarray(x0, dtype=float)
    m0, g0 = params.m[0], params.gamma[0]
    R = network_effect_R(params, x0)
    dR = network_effect_dR(params, x0)
    return -(g0 * x0 + R) + (m0 - x0) * (g0 + dR)


def lie_bracket(params: ModelParams, x0):
    """``alpha * beta' - beta * alpha'`` for ``x0 > 0``."""
    x0 = np.asarray(x0, dtype=float)
    if np.any(x0 <= 0):
        raise ValueError("x0 must be > 0")
    mu0 = params.mu[0]
    out = alpha(params, x0) * beta_prime(params, x0) + mu0 * beta(params, x0)
    return float(out) if out.ndim == 0 else out


def derivative_check(params: ModelParams, x0, rel_step: float = 1e-5) -> dict:
    """Max relative gap between closed-form and central-difference derivatives."""
    x0 = np.asarray(x0, dtype=float)
    h = rel_step * np.maximum(x0, 1e-8)
    fd_R = (network_effect_R(params, x0 + h) - network_effect_R(params, x0 - h)) / (2 * h)
    fd_beta = (beta(params, x0 + h) - beta(params, x0 - h)) / (2 * h)
    fd_bracket = alpha(params, x0) * fd_beta + params.mu[0] * beta(params, x0)

    def rel(a, b):
        return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))

    return {
        "dR": rel(fd_R, network_effect_dR(params, x0)),
        "dbeta": rel(fd_beta, beta_prime(params, x0)),
        "bracket": rel(fd_bracket, lie_bracket(params, x0)),
    }


@dataclass
class PmpDiagnostics:
    times: np.ndarray
    x0: np.ndarray
    u: np.ndarray
    p: np.ndarray
    phi: np.ndarray
    H: np.ndarray
    bracket_x: np.ndarray
    bracket: np.ndarray

    def phi_sign_changes(self) -> int:
        s = np.sign(self.phi)
        s = s[s != 0]
        return int(np.count_nonzero(s[1:] != s[:-1]))

    def hamiltonian_spread(self) -> float:
        return float(self.H.max() - self.H.min())


def costate_diagnostics(
    params: ModelParams,
    x0_init: float,
    tau: float,
    tol: float = 1e-11,
    n_grid: int = 1001,
    n_bracket: int = 1000,
) -> PmpDiagnostics:
    """State forward, co-state backward from ``p(T) = -1``, then switching function and H."""
    T = params.T
    control = ControlSignal.threshold(tau, T)
    traj = integrate_artificial(params, x0_init, control, tol, record=n_grid)
    mu0 = params.mu[0]
    times = traj.times
    p = np.empty_like(times)
    p_end = -1.0
    # backwards over the control pieces, in reversed time s = b - t
    for a, b, u in reversed(list(control.segments(T))):

        def rhs(s, y, b=b, u=u):
            x = traj.dense_x0(b - s)[0]
            return y * (-mu0 + beta_prime(params, x) * u)

        sol = dopri5(rhs, 0.0, b - a, [p_end], rtol=tol, atol=tol * ATOL_FACTOR)
        sel = (times >= a) & (times <= b)
        p[sel] = sol(b - times[sel])[:, 0]
        p_end = float(sol.y[-1, 0])
    p[times == T] = -1.0
    x0 = traj.x0
    u = traj.controls
    phi = 1.0 + p * beta(params, x0)
    H = p * alpha(params, x0) + phi * u
    bx = np.linspace(1e-6, params.m[0], n_bracket)
    return PmpDiagnostics(times, x0, u, p, phi, H, bx, lie_bracket(params, bx))
