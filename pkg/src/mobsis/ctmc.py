"""Exact event-driven simulation of the finite-population system.

Rates follow the finite-``n`` transition rates exactly, with interaction
rates scaled as ``gamma_k / n`` and ``nu_k / n``.  Randomness comes from a
``numpy.random.Generator`` over the counter-based Philox bit generator,
seeded with the 64-bit run seed; the jitted kernel consumes it directly so
runs are bit-reproducible.  Transition order in every rate/tally vector is
``[infect_0, ..., infect_K, recover_0, ..., recover_K]``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from .control import ControlSignal
from .model import ModelParams
from .ode import Trajectory, record_grid

SEED_MASK = (1 << 64) - 1
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & SEED_MASK))


@dataclass
class EmpiricalState:
    """Integer infected counts ``X`` and community sizes ``M``."""

    X: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.int64).reshape(-1)
        self.M = np.asarray(self.M, dtype=np.int64).reshape(-1)
        if self.X.shape != self.M.shape:
            raise ValueError("X and M must have the same length")
        if np.any(self.M <= 0):
            raise ValueError("community sizes must be positive")
        if np.any(self.X < 0) or np.any(self.X > self.M):
            raise ValueError("infected counts must lie in [0, M_k]")

    @property
    def n(self) -> int:
        return int(self.M.sum())

    def fractions(self) -> np.ndarray:
        """Infected fractions ``X_k / n``."""
        return self.X / self.n

    def susceptible_fractions(self) -> np.ndarray:
        return (self.M - self.X) / self.n

    @classmethod
    def from_fractions(cls, m, x, n: int) -> "EmpiricalState":
        """Sizes ``M_k ~ n m_k`` (largest remainder, summing to n) and counts ``X_k ~ n x_k``."""
        m = np.asarray(m, dtype=float)
        raw = m * n
        M = np.floor(raw).astype(np.int64)
        short = n - int(M.sum())
        if short > 0:
            M[np.argsort(-(raw - M), kind="stable")[:short]] += 1
        X = np.clip(np.rint(np.asarray(x, dtype=float) * n).astype(np.int64), 0, M)
        return cls(X, M)


@dataclass
class SimConfig:
    """Seed, sampling grid (count or explicit times) and optional horizon override."""

    seed: int = 0
    record: object = None
    T: Optional[float] = None


def event_rates(params: ModelParams, state: EmpiricalState, u: float) -> np.ndarray:
    """The 2(K+1) transition rates out of ``state`` under control level ``u``."""
    X = state.X.astype(float)
    M = state.M.astype(float)
    n = float(state.n)
    eps = params.epsilon
    g, mu, nu = params.gamma, params.mu, params.nu
    infect = np.empty(params.K + 1)
    infect[0] = (M[0] - X[0]) * (g[0] * X[0] + nu @ X[1:]) * u / n
    infect[1:] = (M[1:] - X[1:]) * (g[1:] * X[1:] + nu * X[0] * u) / (eps * n)
    recover = X * mu
    recover[1:] /= eps
    return np.concatenate([infect, recover])


@numba.njit(cache=True, nogil=True)
def _fill_rates(rates, X, M, gamma, nu, mu, inv_eps, inv_n, u):
    K1 = X.shape[0]
    cross = 0.0
    for k in range(1, K1):
        cross += nu[k - 1] * X[k]
    rates[0] = (M[0] - X[0]) * (gamma[0] * X[0] + cross) * u * inv_n
    rates[K1] = X[0] * mu[0]
    total = rates[0] + rates[K1]
    for k in range(1, K1):
        r = (M[k] - X[k]) * (gamma[k] * X[k] + nu[k - 1] * X[0] * u) * inv_eps * inv_n
        d = X[k] * mu[k] * inv_eps
        rates[k] = r
        rates[K1 + k] = d
        total += r + d
    return total


@numba.njit(cache=True, nogil=True)
def _simulate_kernel(X, M, gamma, nu, mu, eps, bps, vals, T, rec, rng, out_X, out_events, counters):
    K1 = X.shape[0]
    nseg = bps.shape[0]
    nrec = rec.shape[0]
    rates = np.empty(2 * K1)
    inv_eps = 1.0 / eps
    inv_n = 1.0 / M.sum()
    t = 0.0
    j = 0
    ri = 0
    events = 0
    while True:
        seg_end = bps[j + 1] if j + 1 < nseg else T
        u = vals[j]
        total = _fill_rates(rates, X, M, gamma, nu, mu, inv_eps, inv_n, u)
        if total > 0.0:
            t_next = t + rng.standard_exponential() / total
        else:
            t_next = np.inf
        if t_next >= seg_end:
            last = j + 1 >= nseg
            while ri < nrec and (rec[ri] < seg_end or (last and rec[ri] <= seg_end)):
                out_X[ri, :] = X
                out_events[ri] = events
                ri += 1
            if last:
                break
            # memorylessness: restart the clock at the breakpoint with refreshed rates
            t = seg_end
            j += 1
            continue
        while ri < nrec and rec[ri] < t_next:
            out_X[ri, :] = X
            out_events[ri] = events
            ri += 1
        target = rng.random() * total
        acc = 0.0
        chosen = -1
        for e in range(2 * K1):
            if rates[e] > 0.0:
                chosen = e
                acc += rates[e]
                if target < acc:
                    break
        if chosen < K1:
            X[chosen] += 1
        else:
            X[chosen - K1] -= 1
        counters[chosen] += 1
        events += 1
        t = t_next
    return events


def simulate(
    params: ModelParams,
    init: EmpiricalState,
    control: ControlSignal,
    cfg: SimConfig,
) -> Trajectory:
    """One exact stochastic path sampled on the record grid (fractions ``X_k / n``)."""
    T = params.T if cfg.T is None else float(cfg.T)
    if control.T < T * (1 - 1e-15):
        raise ValueError(f"control defined up to {control.T}, horizon is {T}")
    if init.X.size != params.K + 1:
        raise ValueError("state dimension does not match K+1")
    times = record_grid(T, cfg.record)
    bps = control.breakpoints[control.breakpoints < T]
    vals = control.values[: bps.size]
    X = init.X.copy()
    out_X = np.zeros((times.size, X.size), dtype=np.int64)
    out_events = np.zeros(times.size, dtype=np.int64)
    counters = np.zeros(2 * X.size, dtype=np.int64)
    _simulate_kernel(
        X, init.M, params.gamma, params.nu, params.mu, params.epsilon,
        bps, vals, T, times, make_rng(cfg.seed), out_X, out_events, counters,
    )
    return Trajectory(
        times=times,
        states=out_X / init.n,
        controls=control(times),
        running_cost=control.cumulative(times),
        system="ctmc",
        events=out_events,
        counters=counters,
        extinct=bool(np.all(X == 0)),
    )


@dataclass
class EnsembleSummary:
    times: np.ndarray
    mean: np.ndarray
    quantiles: dict
    extinction_frequency: float
    costs: np.ndarray
    sup_errors: Optional[np.ndarray] = None
    seeds: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint64))
    trajectories: Optional[list] = None

    @property
    def replications(self) -> int:
        return len(self.costs)

    @property
    def cost_mean(self) -> float:
        return math.fsum(self.costs) / len(self.costs)

    @property
    def cost_stderr(self) -> float:
        if len(self.costs) < 2:
            return 0.0
        return float(np.std(self.costs, ddof=1) / np.sqrt(len(self.costs)))

    def sup_error_quantiles(self, qs: Sequence[float] = (0.25, 0.5, 0.75)) -> np.ndarray:
        if self.sup_errors is None:
            raise ValueError("no reference trajectory was supplied")
        return np.quantile(self.sup_errors, qs)


def monte_carlo(
    params: ModelParams,
    init: EmpiricalState,
    control: ControlSignal,
    cfg: SimConfig,
    replications: int,
    reference: Optional[Trajectory] = None,
    jobs: int = 1,
    keep: bool = False,
) -> EnsembleSummary:
    """Independent replications with seeds ``cfg.seed + r``; order-independent reduction."""
    if replications < 1:
        raise ValueError("replications must be >= 1")
    seeds = [(int(cfg.seed) + r) & SEED_MASK for r in range(replications)]

    def run(seed):
        return simulate(params, init, control, SimConfig(seed=seed, record=cfg.record, T=cfg.T))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(run, seeds))
    else:
        runs = [run(s) for s in seeds]

    stack = np.stack([tr.states for tr in runs])
    times = runs[0].times
    T = params.T if cfg.T is None else cfg.T
    if times[-1] != T:
        raise ValueError("record grid must end at the horizon to score terminal cost")
    costs = np.array([tr.running_cost[-1] - tr.states[-1, 0] for tr in runs])
    sup = None
    if reference is not None:
        sup = np.array([tr.sup_distance(reference) for tr in runs])
    return EnsembleSummary(
        times=times,
        mean=stack.mean(axis=0),
        quantiles={q: np.quantile(stack, q, axis=0) for q in QUANTILES},
        extinction_frequency=sum(tr.extinct for tr in runs) / replications,
        costs=costs,
        sup_errors=sup,
        seeds=np.array(seeds, dtype=np.uint64),
        trajectories=runs if keep else None,
    )
