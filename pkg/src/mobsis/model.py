"""Model parameters, driving functions and closed-form equilibria.

Community 0 is the controlled mobile community; communities ``1..K`` are
the near-isolated ones, which evolve on the fast timescale ``t / epsilon``.
All state values are fractions of the *total* population, so the infected
fraction ``x_k`` of community ``k`` lives in ``[0, m_k]``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

SUM_TOL = 1e-12


class ParameterError(ValueError):
    """Raised when parameters violate the model's standing assumptions."""


def _vec(values) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the mobile/isolated community SIS model.

    Parameters
    ----------
    m : array_like, shape (K+1,)
        Population fractions; index 0 is the mobile community.
    gamma : array_like, shape (K+1,)
        Within-community contact rates.
    nu : array_like, shape (K,)
        Cross-contact rates between the mobile community and community k=1..K.
    mu : array_like, shape (K+1,)
        Curing rates.
    epsilon : float
        Timescale separation of the isolated communities.
    T : float
        Control horizon.
    """

    m: np.ndarray
    gamma: np.ndarray
    nu: np.ndarray
    mu: np.ndarray
    epsilon: float = 0.02
    T: float = 5.0

    def __post_init__(self):
        for name in ("m", "gamma", "nu", "mu"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "T", float(self.T))

    @property
    def K(self) -> int:
        return len(self.nu)

    @property
    def b(self) -> np.ndarray:
        """Stability margins ``mu_k - m_k gamma_k``."""
        return self.mu - self.m * self.gamma

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def normalized(self) -> "ModelParams":
        """Copy with ``m`` rescaled to sum to one."""
        return self.replace(m=self.m / self.m.sum())

    def validate(self) -> list[str]:
        return validate(self)

    def require_valid(self) -> "ModelParams":
        problems = validate(self)
        if problems:
            raise ParameterError("; ".join(problems))
        return self

    def to_dict(self) -> dict:
        return {
            "m": self.m.tolist(),
            "gamma": self.gamma.tolist(),
            "nu": self.nu.tolist(),
            "mu": self.mu.tolist(),
            "epsilon": self.epsilon,
            "T": self.T,
        }


def fig1_params(epsilon: float = 0.02, T: float = 5.0) -> ModelParams:
    """Two isolated communities, m=(0.4, 0.3, 0.3), gamma=1, mu=2, nu=8."""
    return ModelParams(
        m=(0.4, 0.3, 0.3),
        gamma=(1.0, 1.0, 1.0),
        nu=(8.0, 8.0),
        mu=(2.0, 2.0, 2.0),
        epsilon=epsilon,
        T=T,
    )


def validate(params: ModelParams) -> list[str]:
    """Return every violated invariant as a message; empty means valid."""
    problems = []
    K = params.K
    if K < 1:
        problems.append("K must be >= 1 (nu is empty)")
    for name in ("m", "gamma", "mu"):
        if len(getattr(params, name)) != K + 1:
            problems.append(f"{name} must have length K+1={K + 1}")
    if problems:
        return problems
    arrays = {"m": params.m, "gamma": params.gamma, "nu": params.nu, "mu": params.mu}
    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            problems.append(f"{name} has non-finite entries")
    if problems:
        return problems
    for k in np.flatnonzero(params.m <= 0):
        problems.append(f"m[{k}] = {params.m[k]} must be > 0")
    total = params.m.sum()
    if abs(total - 1.0) > SUM_TOL:
        problems.append(f"sum(m) = {total!r} != 1")
    mg = params.m * params.gamma
    for k in range(K + 1):
        if not (0.0 < mg[k] < params.mu[k]):
            problems.append(
                f"(A2) violated at k={k}: need 0 < m*gamma = {mg[k]:g} < mu = {params.mu[k]:g}"
            )
    for k in np.flatnonzero(params.nu < 0):
        problems.append(f"nu[{k + 1}] = {params.nu[k]} must be >= 0")
    if not params.epsilon > 0:
        problems.append(f"epsilon = {params.epsilon} must be > 0")
    if not params.T > 0:
        problems.append(f"T = {params.T} must be > 0")
    return problems


@dataclass
class FluidState:
    """Infected fractions of the deterministic systems."""

    x0: float
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.x0 = float(self.x0)
        self.x = np.array(self.x, dtype=float).reshape(-1)

    def as_array(self) -> np.ndarray:
        return np.concatenate(([self.x0], self.x))

    @classmethod
    def from_array(cls, y) -> "FluidState":
        y = np.asarray(y, dtype=float)
        return cls(y[0], y[1:].copy())

    def in_box(self, params: ModelParams, tol: float = 0.0) -> bool:
        y = self.as_array()
        return bool(np.all(y >= -tol) and np.all(y <= params.m + tol))


def _check_k(params: ModelParams, k: int) -> None:
    if not 1 <= k <= params.K:
        raise IndexError(f"community index {k} outside 1..{params.K}")


def g_fast(params: ModelParams, k: int, x0, xk, u):
    """Fast driving function of isolated community ``k`` (before the 1/eps factor)."""
    _check_k(params, k)
    m, g, mu, nu = params.m[k], params.gamma[k], params.mu[k], params.nu[k - 1]
    return -mu * xk + (m - xk) * (g * xk + nu * x0 * u)


def fast_rates(params: ModelParams, x0: float, x: np.ndarray, u: float) -> np.ndarray:
    """All K fast driving functions at once."""
    m, g, mu = params.m[1:], params.gamma[1:], params.mu[1:]
    return -mu * x + (m - x) * (g * x + params.nu * (x0 * u))


def f_slow(params: ModelParams, x0: float, x, u: float) -> float:
    """Slow driving function of the mobile community."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.K,):
        raise ValueError(f"x must have shape ({params.K},), got {x.shape}")
    m0, g0, mu0 = params.m[0], params.gamma[0], params.mu[0]
    return -mu0 * x0 + (m0 - x0) * (g0 * x0 + float(params.nu @ x)) * u


def _xstar(m, g, b, xi):
    # 2 m xi / q with q = (b+xi) + sqrt((b+xi)^2 + 4 g m xi): no cancellation as xi -> 0
    s = b + xi
    q = s + np.hypot(s, 2.0 * np.sqrt(g * m * xi))
    return 2.0 * m * xi / q


def _dxstar(m, g, mu, b, xi):
    # d/dxi of the root, written as 2 m mu / (B (A + B)) to avoid A/B - 1
    s = b + xi
    B = np.hypot(s, 2.0 * np.sqrt(g * m * xi))
    A = s + 2.0 * g * m
    return 2.0 * m * mu / (B * (A + B))


def equilibrium_xstar(params: ModelParams, k: int, xi):
    """Unique root in ``[0, m_k]`` of the fast driving function for input ``xi = nu_k x0 u``."""
    _check_k(params, k)
    xi_arr = np.asarray(xi, dtype=float)
    if np.any(xi_arr < 0):
        raise ValueError("xi must be >= 0")
    out = _xstar(params.m[k], params.gamma[k], params.b[k], xi_arr)
    return float(out) if out.ndim == 0 else out


def equilibrium_xstar_derivative(params: ModelParams, k: int, xi):
    _check_k(params, k)
    xi_arr = np.asarray(xi, dtype=float)
    if np.any(xi_arr < 0):
        raise ValueError("xi must be >= 0")
    out = _dxstar(params.m[k], params.gamma[k], params.mu[k], params.b[k], xi_arr)
    return float(out) if out.ndim == 0 else out


def xstar_all(params: ModelParams, y: float) -> np.ndarray:
    """Quasi-static fast equilibria ``x*_k(nu_k y)`` for k = 1..K."""
    return _xstar(params.m[1:], params.gamma[1:], params.b[1:], params.nu * y)


def network_effect_R(params: ModelParams, y):
    """Aggregate pressure ``sum_k nu_k x*_k(nu_k y)`` felt by the mobile community."""
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr < 0):
        raise ValueError("y must be >= 0")
    xi = np.multiply.outer(y_arr, params.nu)
    vals = _xstar(params.m[1:], params.gamma[1:], params.b[1:], xi) @ params.nu
    return float(vals) if vals.ndim == 0 else vals


def network_effect_dR(params: ModelParams, y):
    """Derivative of the network effect with respect to its argument."""
    y_arr = np.asarray(y, dtype=float)
    xi = np.multiply.outer(y_arr, params.nu)
    d = _dxstar(params.m[1:], params.gamma[1:], params.mu[1:], params.b[1:], xi)
    vals = d @ (params.nu**2)
    return float(vals) if vals.ndim == 0 else vals


def reduced_rhs(params: ModelParams, x0, u: float, artificial: bool = False):
    """Right-hand side of the reduced slow ODE.

    With ``artificial=True`` the network effect is evaluated at ``x0`` rather
    than ``x0 * u``, i.e. it is felt regardless of the control.
    """
    m0, g0, mu0 = params.m[0], params.gamma[0], params.mu[0]
    arg = x0 if artificial else x0 * u
    return -mu0 * x0 + (m0 - x0) * (g0 * x0 + network_effect_R(params, np.maximum(arg, 0.0))) * u


def sustain_margin(params: ModelParams) -> float:
    """Slope at zero of the reduced field under full control.

    Positive means the infection-free state is unstable with ``u = 1``.
    """
    b = params.b
    return float(-b[0] + params.m[0] * np.sum(params.m[1:] * params.nu**2 / b[1:]))


def sustain_verdict(params: ModelParams) -> str:
    margin = sustain_margin(params)
    b0 = params.b[0]
    if abs(margin) <= 1e-12 * max(abs(b0), 1.0):
        return "inconclusive"
    return "sustains" if margin > 0 else "criterion-not-met"


def endemic_equilibrium(
    params: ModelParams, grid_points: int = 10_000, xtol: float = 1e-12
) -> Optional[float]:
    """Positive stable root of the reduced field with ``u = 1``, or None.

    The scan uses a geometric grid on ``(0, m0]`` so that roots close to zero
    (sustain margin barely positive) are still bracketed.
    """
    m0 = params.m[0]
    grid = np.geomspace(m0 * 1e-12, m0, grid_points)
    vals = reduced_rhs(params, grid, 1.0)
    idx = np.flatnonzero((vals[:-1] > 0) & (vals[1:] <= 0))
    if idx.size == 0:
        return None
    i = idx[-1]
    lo, hi = grid[i], grid[i + 1]
    if vals[i + 1] == 0.0:
        return float(hi)
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if reduced_rhs(params, mid, 1.0) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
