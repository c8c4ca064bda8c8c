"""Exact event-level simulation of the linear Hawkes system.

Two independent algorithms produce the same law:

* ``simulate_thinning`` -- Ogata thinning driven by a Markov state of
  the intensity (exact recursion for exponential kernels).
* ``simulate_cluster`` -- immigrant/offspring branching construction.

The Erlang kernel phi(u) = beta^k u^{k-1} e^{-beta u} / (k-1)! is carried by
the k sums S_j(t) = sum_i (t - t_i)^j e^{-beta (t - t_i)}, which shift
exactly in time, so intensities and compensators are O(k) per query.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .kernels import Kernel

DEFAULT_MAX_EVENTS = 10_000_000

THINNING = "thinning"
CLUSTER = "cluster"


class ExplosionError(RuntimeError):
    """Event count exceeded the configured cap before the horizon was reached."""

    def __init__(self, count: int, reached: float, horizon: float, algorithm: str):
        self.count = count
        self.reached = reached
        self.horizon = horizon
        self.algorithm = algorithm
        super().__init__(
            f"{algorithm}: more than {count - 1} events before t={reached:.6g} "
            f"(horizon {horizon:.6g}); raise max_events or shorten the horizon"
        )


@dataclass(frozen=True)
class SimulationParams:
    mu: float
    kernel: Kernel
    a: float
    horizon: float
    max_events: int = DEFAULT_MAX_EVENTS

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("baseline rate mu must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not (self.a == 0 or self.a > 1):
            raise ValueError("a must be 0 (Poisson mode) or exceed 1")
        if self.max_events < 1:
            raise ValueError("max_events must be positive")


@dataclass(frozen=True, eq=False)
class EventPath:
    times: np.ndarray
    horizon: float
    algorithm: str
    seed: object = None

    def count(self, t):
        """Z_t = #{t_i <= t} (right-continuous)."""
        out = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        return out[()] if np.ndim(out) == 0 else out

    @property
    def n_events(self) -> int:
        return int(self.times.size)


@dataclass(frozen=True, eq=False)
class PathDiagnostics:
    grid: np.ndarray
    intensity: np.ndarray
    compensator: np.ndarray
    count: np.ndarray
    martingale: np.ndarray
    quadratic_variation: np.ndarray
    extra: dict = field(default_factory=dict)


def _kernel_constants(kernel: Kernel, a: float):
    k = kernel.shape
    coef = a * kernel.rate**k / math.factorial(k - 1)
    binom = np.zeros((k, k))
    for j in range(k):
        for l in range(j + 1):
            binom[j, l] = math.comb(j, l)
    cum_coef = np.array([kernel.rate**j / math.factorial(j) for j in range(k)])
    return coef, binom, cum_coef


@numba.njit(nogil=True, cache=True)
def _shift(S, d, beta, binom):
    k = S.size
    decay = math.exp(-beta * d)
    for j in range(k - 1, -1, -1):
        acc = 0.0
        p = 1.0
        # sum_{l<=j} C(j,l) d^{j-l} S_l, accumulated from l = j downwards
        for l in range(j, -1, -1):
            acc += binom[j, l] * p * S[l]
            p *= d
        S[j] = acc * decay


@numba.njit(nogil=True, cache=True)
def _thin(rng, mu, coef, beta, binom, mode, peak, horizon, cap):
    k = binom.shape[0]
    S = np.zeros(k)
    times = np.empty(1024)
    n = 0
    young = 0
    t = 0.0
    while True:
        while young < n and t - times[young] >= mode:
            young += 1
        bound = mu + coef * S[k - 1] + (n - young) * peak
        w = rng.standard_exponential() / bound
        t_new = t + w
        if t_new > horizon:
            return times[:n], horizon, False
        if t_new <= t:
            t_new = np.nextafter(t, np.inf)
        _shift(S, t_new - t, beta, binom)
        t = t_new
        lam = mu + coef * S[k - 1]
        if rng.random() * bound <= lam:
            if n == cap:
                return times[:n], t, True
            if n == times.size:
                grown = np.empty(2 * n)
                grown[:n] = times
                times = grown
            times[n] = t
            n += 1
            S[0] += 1.0


def _simple(times: np.ndarray) -> np.ndarray:
    """Enforce strictly increasing times after a sort (float ties only)."""
    if times.size > 1:
        d = np.diff(times)
        if np.any(d <= 0):
            times = times.copy()
            for i in np.flatnonzero(d <= 0):
                if times[i + 1] <= times[i]:
                    times[i + 1] = np.nextafter(times[i], np.inf)
    return times


def simulate_thinning(params: SimulationParams, rng: np.random.Generator, seed=None) -> EventPath:
    """Ogata thinning.

    The dominating rate is the current intensity plus one kernel peak per
    event still on the rising part of its Erlang bump; every other
    contribution is non-increasing, so the bound holds until the next
    acceptance.  For exponential kernels no event is ever "rising" and the
    bound is the current intensity itself.
    """
    kernel = params.kernel
    a = float(params.a)
    coef, binom, _ = _kernel_constants(kernel, a)
    peak = a * kernel.peak if kernel.shape > 1 else 0.0
    times, reached, exploded = _thin(rng, float(params.mu), coef, float(kernel.rate), binom,
                                     float(kernel.mode), peak, float(params.horizon),
                                     int(params.max_events))
    if exploded:
        raise ExplosionError(int(params.max_events) + 1, reached, params.horizon, THINNING)
    times = np.ascontiguousarray(times)
    if times.size > 1 and not np.all(np.diff(times) > 0):
        raise AssertionError("thinning produced a non-simple path")
    return EventPath(times=times, horizon=float(params.horizon), algorithm=THINNING, seed=seed)


def simulate_cluster(params: SimulationParams, rng: np.random.Generator, seed=None) -> EventPath:
    """Branching construction: Poisson(mu) immigrants, Poisson(a) children per event.

    Generations are expanded breadth-first; children past the horizon are
    dropped and so never reproduce.
    """
    horizon = float(params.horizon)
    cap = int(params.max_events)
    n0 = rng.poisson(params.mu * horizon)
    generation = rng.uniform(0.0, horizon, size=n0)
    pieces = [generation]
    total = n0
    if total > cap:
        raise ExplosionError(total, horizon, horizon, CLUSTER)
    while generation.size and params.a > 0:
        children = rng.poisson(params.a, size=generation.size)
        parents = np.repeat(generation, children)
        born = parents + params.kernel.sample(rng, parents.size)
        generation = born[born <= horizon]
        total += generation.size
        if total > cap:
            reached = float(np.min(generation)) if generation.size else horizon
            raise ExplosionError(total, reached, horizon, CLUSTER)
        pieces.append(generation)
    times = _simple(np.sort(np.concatenate(pieces)))
    return EventPath(times=times, horizon=horizon, algorithm=CLUSTER, seed=seed)


def simulate(params: SimulationParams, rng: np.random.Generator, algorithm: str = THINNING,
             seed=None) -> EventPath:
    if algorithm == THINNING:
        return simulate_thinning(params, rng, seed)
    if algorithm == CLUSTER:
        return simulate_cluster(params, rng, seed)
    raise ValueError(f"unknown algorithm {algorithm!r}")


@numba.njit(nogil=True, cache=True)
def _scan(times, queries, mu, coef, beta, binom, cum_coef, a):
    """Left-limit intensity, compensator and right-continuous count at sorted queries."""
    k = binom.shape[0]
    S = np.zeros(k)
    nq = queries.size
    lam = np.empty(nq)
    comp = np.empty(nq)
    cnt = np.empty(nq, dtype=np.int64)
    t = 0.0
    i = 0
    n_ev = times.size
    for q in range(nq):
        tq = queries[q]
        while i < n_ev and times[i] < tq:
            _shift(S, times[i] - t, beta, binom)
            t = times[i]
            S[0] += 1.0
            i += 1
        _shift(S, tq - t, beta, binom)
        t = tq
        lam[q] = mu + coef * S[k - 1]
        acc = 0.0
        for j in range(k):
            acc += cum_coef[j] * S[j]
        comp[q] = mu * tq + a * (i - acc)
        c = i
        while c < n_ev and times[c] == tq:
            c += 1
        cnt[q] = c
    return lam, comp, cnt


def _scan_path(path: EventPath, params: SimulationParams, queries: np.ndarray):
    coef, binom, cum_coef = _kernel_constants(params.kernel, float(params.a))
    return _scan(np.ascontiguousarray(path.times, dtype=float),
                 np.ascontiguousarray(queries, dtype=float), float(params.mu), coef,
                 float(params.kernel.rate), binom, cum_coef, float(params.a))


def intensity_at(path: EventPath, params: SimulationParams, t):
    """lambda_t = mu + sum_{t_i < t} a phi(t - t_i) at sorted query times."""
    lam, _, _ = _scan_path(path, params, np.atleast_1d(np.asarray(t, dtype=float)))
    return lam


def event_intensities(path: EventPath, params: SimulationParams) -> np.ndarray:
    """Left limits lambda_{t_i-} at every jump."""
    lam, _, _ = _scan_path(path, params, path.times)
    return lam


def intensity_path(path: EventPath, params: SimulationParams, step: float) -> PathDiagnostics:
    """Intensity, exact compensator and martingale on a uniform grid over [0, horizon].

    The compensator sums a * Phi(t - t_i) in closed form, so there is no
    quadrature error.  The martingale jumps exactly where the count jumps
    (the compensator is continuous), hence its quadratic variation is the
    running sum of the squared unit jumps of Z.
    """
    if not step > 0:
        raise ValueError("grid step must be positive")
    n = int(np.floor(path.horizon / step + 1e-9))
    grid = step * np.arange(n + 1)
    lam, comp, cnt = _scan_path(path, params, grid)
    jumps = np.ones(path.times.size)
    qv_at_events = np.concatenate(([0.0], np.cumsum(jumps**2)))
    qv = qv_at_events[cnt]
    return PathDiagnostics(
        grid=grid,
        intensity=lam,
        compensator=comp,
        count=cnt,
        martingale=cnt - comp,
        quadratic_variation=qv,
    )


def martingale_at(path: EventPath, params: SimulationParams, t: float) -> float:
    _, comp, cnt = _scan_path(path, params, np.array([float(t)]))
    return float(cnt[0] - comp[0])


def time_changed_qv(path: EventPath, params: SimulationParams, T: float, t: float,
                    event_lambdas: np.ndarray | None = None) -> float:
    """[B^T, B^T]_t = (1/T) sum_{t_i <= tT} 1 / lambda_{t_i-}."""
    if t * T > path.horizon * (1 + 1e-12):
        raise ValueError("tT exceeds the path horizon")
    if event_lambdas is None:
        event_lambdas = event_intensities(path, params)
    n = int(path.count(t * T))
    return float(np.sum(1.0 / event_lambdas[:n]) / T)


def max_time_changed_jump(path: EventPath, params: SimulationParams, T: float, t: float = 1.0,
                          event_lambdas: np.ndarray | None = None) -> float:
    """sup of |B^T_s - B^T_{s-}| over s <= t: max of 1 / sqrt(T lambda_{t_i-})."""
    if event_lambdas is None:
        event_lambdas = event_intensities(path, params)
    n = int(path.count(t * T))
    if n == 0:
        return 0.0
    return float(np.max(1.0 / np.sqrt(T * event_lambdas[:n])))
