"""Right-continuous piecewise-constant control paths with values in [0, 1]."""
from __future__ import annotations

import math
from typing import Iterator, Sequence

import numpy as np


class ControlSignal:
    """Piecewise-constant control ``u(t) = values[j]`` on ``[breakpoints[j], breakpoints[j+1])``.

    The last value holds until the horizon ``T``.  ``breakpoints[0]`` must be 0.
    """

    def __init__(self, breakpoints: Sequence[float], values: Sequence[float], T: float):
        bp = np.asarray(breakpoints, dtype=float).reshape(-1)
        vals = np.asarray(values, dtype=float).reshape(-1)
        if bp.size == 0 or bp.size != vals.size:
            raise ValueError("breakpoints and values must be non-empty and of equal length")
        if bp[0] != 0.0:
            raise ValueError("first breakpoint must be 0")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if bp[-1] > T:
            raise ValueError(f"breakpoint {bp[-1]} beyond horizon T={T}")
        if np.any((vals < 0) | (vals > 1)) or not np.all(np.isfinite(vals)):
            raise ValueError("control values must lie in [0, 1]")
        self.breakpoints = bp
        self.values = vals
        self.T = float(T)

    def __repr__(self):
        return f"ControlSignal(J={self.breakpoints.size - 1}, T={self.T})"

    # constructors

    @classmethod
    def constant(cls, u: float, T: float) -> "ControlSignal":
        return cls([0.0], [u], T)

    @classmethod
    def threshold(cls, tau: float, T: float) -> "ControlSignal":
        """``u = 1{t >= tau}``; ``tau >= T`` gives the never-on control."""
        if tau < 0:
            raise ValueError("tau must be >= 0")
        if tau <= 0.0:
            return cls.constant(1.0, T)
        if tau >= T:
            return cls.constant(0.0, T)
        return cls([0.0, tau], [0.0, 1.0], T)

    @classmethod
    def square_wave(cls, period: float, duty: float, T: float) -> "ControlSignal":
        """Alternate 1 then 0 every period, on for ``duty * period`` of each.

        The final period is clipped at ``T``; its on-time is clipped too, so the
        total on-time is ``duty * T`` only when ``T / period`` is an integer.
        """
        if period <= 0:
            raise ValueError("period must be > 0")
        if not 0.0 <= duty <= 1.0:
            raise ValueError("duty must lie in [0, 1]")
        if duty == 0.0 or duty == 1.0:
            return cls.constant(duty, T)
        n = int(math.ceil(T / period - 1e-12))
        bps, vals = [], []
        on = duty * period
        for i in range(n):
            start = i * period
            bps.append(start)
            vals.append(1.0)
            if start + on < T:
                bps.append(start + on)
                vals.append(0.0)
        return cls(bps, vals, T)

    # queries

    def __call__(self, t):
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        out = self.values[np.clip(idx, 0, None)]
        return float(out) if np.ndim(out) == 0 else out

    @property
    def n_discontinuities(self) -> int:
        return int(np.count_nonzero(np.diff(self.values) != 0))

    def in_budget(self, B: int) -> bool:
        return self.n_discontinuities <= B

    def is_bang_bang(self) -> bool:
        return bool(np.all((self.values == 0.0) | (self.values == 1.0)))

    def segments(self, T: float | None = None) -> Iterator[tuple[float, float, float]]:
        """Yield ``(start, end, value)`` for every non-empty constant piece up to T."""
        T = self.T if T is None else T
        ends = np.append(self.breakpoints[1:], T)
        for a, b, v in zip(self.breakpoints, ends, self.values):
            b = min(b, T)
            if b > a:
                yield float(a), float(b), float(v)

    def integral(self, t: float | None = None) -> float:
        """Closed-form ``int_0^t u(s) ds``."""
        t = self.T if t is None else t
        return math.fsum(v * (min(b, t) - a) for a, b, v in self.segments() if a < t)

    def cumulative(self, times) -> np.ndarray:
        """``integral(t)`` for every entry of ``times`` at once."""
        times = np.asarray(times, dtype=float)
        segs = np.array(list(self.segments()))
        if segs.size == 0:
            return np.zeros_like(times)
        a, b, v = segs.T
        before = np.concatenate(([0.0], np.cumsum(v * (b - a))[:-1]))
        idx = np.clip(np.searchsorted(a, times, side="right") - 1, 0, len(a) - 1)
        return before[idx] + v[idx] * np.clip(np.minimum(times, b[idx]) - a[idx], 0.0, None)

    def to_dict(self) -> dict:
        return {
            "type": "breakpoints",
            "breakpoints": self.breakpoints.tolist(),
            "values": self.values.tolist(),
        }


def random_control(rng: np.random.Generator, T: float, B: int, bang_bang: bool = False) -> ControlSignal:
    """Random control with at most B discontinuities (uniform breakpoints and levels)."""
    cuts = np.sort(rng.uniform(0.0, T, size=B))
    cuts = cuts[cuts > 0]
    bps = np.concatenate(([0.0], np.unique(cuts)))
    if bang_bang:
        vals = rng.integers(0, 2, size=bps.size).astype(float)
    else:
        vals = rng.uniform(0.0, 1.0, size=bps.size)
    return ControlSignal(bps, vals, T)
