"""Adaptive Dormand-Prince 5(4) integrator with continuous extension.

Only what the engine needs: a single smooth interval per call, optional box
enforcement, and a dense interpolant over the accepted steps.
"""
from __future__ import annotations

import math

import numpy as np

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between the 5th- and 4th-order weights, over all 7 stages (FSAL)
E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# continuous extension (4th order) in powers theta, theta^2, theta^3, theta^4
P = np.array(
    [
        [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0


class IntegrationError(RuntimeError):
    """Numerical failure of the integrator; ``t`` is where it happened."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} at t={t:.17g}")
        self.t = t


class StepSizeUnderflow(IntegrationError):
    pass


class BoxViolation(IntegrationError):
    pass


class StepBudgetExceeded(IntegrationError):
    pass


class DenseSolution:
    """Piecewise quartic interpolant over accepted steps on ``[t0, t1]``."""

    def __init__(self, t_nodes, y_nodes, Q):
        self.t = np.asarray(t_nodes)
        self.y = np.asarray(y_nodes)
        self.Q = np.asarray(Q)  # (n_steps, dim, 4)

    @property
    def t0(self) -> float:
        return float(self.t[0])

    @property
    def t1(self) -> float:
        return float(self.t[-1])

    @property
    def n_steps(self) -> int:
        return len(self.t) - 1

    def __call__(self, times) -> np.ndarray:
        """States at ``times`` (shape ``(len(times), dim)`` or ``(dim,)`` for a scalar)."""
        ts = np.atleast_1d(np.asarray(times, dtype=float))
        if self.n_steps == 0:
            out = np.repeat(self.y[:1], ts.size, axis=0)
        else:
            idx = np.clip(np.searchsorted(self.t, ts, side="right") - 1, 0, self.n_steps - 1)
            h = self.t[idx + 1] - self.t[idx]
            theta = (ts - self.t[idx]) / h
            powers = np.stack([theta, theta**2, theta**3, theta**4], axis=-1)
            out = self.y[idx] + h[:, None] * np.einsum("sdk,sk->sd", self.Q[idx], powers)
            # nodes are returned exactly
            exact = ts == self.t[idx + 1]
            out[exact] = self.y[idx[exact] + 1]
            exact0 = ts == self.t[idx]
            out[exact0] = self.y[idx[exact0]]
        return out[0] if np.ndim(times) == 0 else out


def _initial_step(fun, t0, y0, f0, direction_span, rtol, atol):
    scale = atol + np.abs(y0) * rtol
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, direction_span)
    y1 = y0 + h0 * f0
    f1 = fun(t0 + h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, direction_span)


def dopri5(
    fun,
    t0: float,
    t1: float,
    y0,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    h_max: float = np.inf,
    lower=None,
    upper=None,
    box_tol=None,
    max_steps: int = 2_000_000,
) -> DenseSolution:
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t1 > t0``, landing exactly on ``t1``.

    If ``lower``/``upper`` are given, accepted states outside the box by more
    than ``box_tol`` raise :class:`BoxViolation`; smaller excursions are clipped.
    """
    y = np.array(y0, dtype=float).reshape(-1)
    if not t1 > t0:
        raise ValueError("need t1 > t0")
    span = t1 - t0
    dim = y.size
    if box_tol is None:
        box_tol = atol + (rtol * np.abs(upper) if upper is not None else 0.0)

    f = fun(t0, y)
    h = min(_initial_step(fun, t0, y, f, span, rtol, atol), h_max)
    t = t0
    ts, ys, Qs = [t0], [y.copy()], []
    K = np.empty((7, dim))
    steps = 0
    while t < t1:
        h_min = 16 * np.spacing(t)
        if h < h_min:
            raise StepSizeUnderflow("step size underflow", t)
        last = t + h >= t1 - h_min
        if last:
            h = t1 - t
        K[0] = f
        for s in range(1, 6):
            dy = A[s] @ K[:s]
            K[s] = fun(t + C[s] * h, y + h * dy)
        y_new = y + h * (B @ K[:6])
        t_new = t1 if last else t + h
        K[6] = fun(t_new, y_new)
        err_vec = h * (E @ K)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        r = err_vec / scale
        err = math.sqrt(float(r @ r) / dim)
        if err <= 1.0:
            f_new = K[6].copy()
            if lower is not None or upper is not None:
                lo = -np.inf if lower is None else lower
                hi = np.inf if upper is None else upper
                below, above = y_new < lo, y_new > hi
                if below.any() or above.any():
                    if (y_new < lo - box_tol).any() or (y_new > hi + box_tol).any():
                        raise BoxViolation("state left the box beyond tolerance", t_new)
                    y_new = np.clip(y_new, lo, hi)
                    f_new = fun(t_new, y_new)
            Qs.append(K.T @ P)
            t, y, f = t_new, y_new, f_new
            ts.append(t)
            ys.append(y.copy())
            factor = MAX_FACTOR if err == 0 else min(MAX_FACTOR, SAFETY * err ** -0.2)
            h = min(h * factor, h_max)
        else:
            h *= max(MIN_FACTOR, SAFETY * err ** -0.2)
        steps += 1
        if steps > max_steps:
            raise StepBudgetExceeded(f"more than {max_steps} steps", t)
    Q = np.array(Qs) if Qs else np.zeros((0, dim, 4))
    return DenseSolution(np.array(ts), np.array(ys), Q)
