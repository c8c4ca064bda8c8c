"""Renewal function Psi = sum_n (a phi)^{*n} on a uniform grid.

Storage is always the tilted function exp(-b t) Psi(t); the untilted values
grow exponentially and are only materialised on request.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.signal import fftconvolve

from .kernels import Kernel, solve_malthusian

_GRID_SLACK = 1e-9
_GAUSS_POINTS = 8


def default_step(kernel: Kernel, a: float) -> float:
    return min(kernel.mean, 1.0 / (a * kernel.rate)) / 50.0


@dataclass(frozen=True, eq=False)
class RenewalTable:
    kernel: Kernel
    a: float
    b: float
    step: float
    tilted: np.ndarray

    @property
    def horizon(self) -> float:
        return self.step * (self.tilted.size - 1)

    @property
    def times(self) -> np.ndarray:
        return self.step * np.arange(self.tilted.size)

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.horizon * (1 + _GRID_SLACK)):
            raise ValueError(f"query outside [0, {self.horizon}]")
        return np.clip(t, 0.0, self.horizon)

    def psi_tilde(self, t):
        t = self._check(t)
        out = np.interp(t, self.times, self.tilted)
        return out[()] if out.ndim == 0 else out

    def psi(self, t):
        """Psi(t) = exp(b t) * tilde Psi(t), linearly interpolated."""
        t = self._check(t)
        out = np.exp(self.b * t) * np.interp(t, self.times, self.tilted)
        return out[()] if out.ndim == 0 else out

    def tilted_mass(self) -> float:
        return float(trapezoid(self.tilted, dx=self.step))


def solve_renewal(kernel: Kernel, a: float, step: float | None = None,
                  horizon: float | None = None) -> RenewalTable:
    """Product-trapezoid Volterra stepping for tilde Psi = tilde phi + tilde phi * tilde Psi.

    tilde Psi is treated as piecewise linear between grid nodes while the
    kernel is integrated exactly on each cell, so the discrete kernel mass
    matches 1/a and the slow growth rate near criticality is not biased.

    The tilt rate is the Malthusian parameter when ``a > 1`` and zero
    otherwise (the sub-unit case is the plain geometric renewal series).
    """
    a = float(a)
    if not a > 0:
        raise ValueError(f"branching multiplier must be positive, got a={a!r}")
    if step is None:
        step = default_step(kernel, a)
    if not step > 0:
        raise ValueError(f"grid step must be positive, got {step!r}")
    if horizon is None:
        if a <= 1:
            raise ValueError("horizon is required when a <= 1")
        horizon = 60.0 * kernel.mean / (a - 1.0)
    if horizon < step:
        raise ValueError("horizon must be at least one grid step")

    b = solve_malthusian(kernel, a).rate if a > 1 else 0.0
    n = int(np.ceil(horizon / step - _GRID_SLACK)) + 1
    t = step * np.arange(n)

    def tilted_kernel(s):
        return a * np.exp(-b * s) * kernel.density(s)

    phi = tilted_kernel(t)
    # Per-cell moments of the tilted kernel against the two hat functions:
    # cell_mass[j] = int over [t_j, t_j+1], cell_first[j] = same with weight (s - t_j)/step.
    nodes, gw = np.polynomial.legendre.leggauss(_GAUSS_POINTS)
    theta = 0.5 * (nodes + 1.0)
    gw = 0.5 * gw
    vals = tilted_kernel(t[:-1, None] + step * theta[None, :])
    cell_mass = step * vals @ gw
    cell_first = step * vals @ (gw * theta)
    # weight on tilde Psi(t_n - t_l) inside the convolution at t_n
    w = np.empty(n)
    w[0] = cell_mass[0] - cell_first[0]
    w[1:-1] = cell_mass[1:] - cell_first[1:] + cell_first[:-1]
    w[-1] = np.nan  # the far end is handled by cell_first directly

    psi = np.empty(n)
    psi[0] = phi[0]
    denom = 1.0 - w[0]
    w_rev = w[::-1].copy()
    for i in range(1, n):
        # sum_{l=1}^{i-1} w[l] psi[i-l] == dot(w[i-1:0:-1], psi[1:i])
        inner = np.dot(w_rev[n - i: n - 1], psi[1:i]) if i > 1 else 0.0
        psi[i] = (phi[i] + inner + cell_first[i - 1] * psi[0]) / denom
    return RenewalTable(kernel=kernel, a=a, b=b, step=float(step), tilted=psi)


@dataclass(frozen=True, eq=False)
class ExpectationCurve:
    """E[Z_t] on the renewal grid, stored as exp(-b t) E[Z_t]."""

    times: np.ndarray
    tilted_values: np.ndarray
    b: float
    mu: float
    a: float
    kernel: Kernel

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.b * self.times) * self.tilted_values

    def tilted_at(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.times[-1] * (1 + _GRID_SLACK)):
            raise ValueError(f"query outside [0, {self.times[-1]}]")
        out = np.interp(t, self.times, self.tilted_values)
        return out[()] if out.ndim == 0 else out

    def at(self, t):
        return np.exp(self.b * np.asarray(t, dtype=float)) * self.tilted_at(t)


def expectation_curve(table: RenewalTable, mu: float) -> ExpectationCurve:
    """E[Z_t] = mu t + mu int_0^t s Psi(t - s) ds at every grid node.

    In tilted form the integrand factorises as (s e^{-bs}) (e^{-b(t-s)} Psi(t-s)),
    so all nodes come from a single convolution plus trapezoid end corrections.
    """
    t = table.times
    h = table.step
    weight = t * np.exp(-table.b * t)
    conv = fftconvolve(weight, table.tilted)[: t.size]
    # trapezoid: full sum minus half of both endpoints (the s = 0 end is zero)
    integral = h * (conv - 0.5 * weight * table.tilted[0])
    integral[0] = 0.0
    tilted = mu * (weight + integral)
    return ExpectationCurve(times=t, tilted_values=tilted, b=table.b, mu=mu,
                            a=table.a, kernel=table.kernel)


def _tilted_expectation_node(table: RenewalTable, mu: float, i: int) -> float:
    if i == 0:
        return 0.0
    h, b = table.step, table.b
    s = h * np.arange(i + 1)
    w = s * np.exp(-b * s)
    f = w * table.tilted[i::-1]
    integral = h * (f.sum() - 0.5 * (f[0] + f[-1]))
    return mu * (w[-1] + integral)


def expected_count(table: RenewalTable, mu: float, t: float, tilted: bool = False) -> float:
    """Trapezoidal E[Z_t] against the table; linear between grid nodes.

    With ``tilted=True`` returns exp(-b t) E[Z_t], which stays finite where
    E[Z_t] itself would overflow.
    """
    t = float(t)
    if t < 0 or t > table.horizon * (1 + _GRID_SLACK):
        raise ValueError(f"t={t} outside the table horizon {table.horizon}")
    if t == 0:
        return 0.0
    pos = min(t / table.step, table.tilted.size - 1)
    i = int(np.floor(pos))
    frac = pos - i
    lo = _tilted_expectation_node(table, mu, i)
    if frac > 0:
        hi = _tilted_expectation_node(table, mu, i + 1)
        val = (1 - frac) * lo + frac * hi
    else:
        val = lo
    return val if tilted else float(np.exp(table.b * t) * val)


def limit_profile_psi(lam: float, m: float, x):
    """Large-T limit of Psi^T(Tx): exp(lam x / m) / m."""
    return np.exp(lam * np.asarray(x, dtype=float) / m) / m


def limit_profile_mean(mu: float, lam: float, m: float, x):
    """Large-T limit of E[Z_{Tx}] / T^2.

    Closed form of (mu e^{lam x/m}/m) int_0^x v e^{-lam v/m} dv.
    """
    x = np.asarray(x, dtype=float)
    r = lam / m
    return -mu * x / lam + m * mu / lam**2 * np.expm1(r * x)


def mean_bound_check(table: RenewalTable, mu: float, T: float, x: float):
    """Return ``(lhs, rhs)`` for (a-1)/(T e^{b T x}) E[Z_{Tx}] <= mu a."""
    if not 0 <= x <= 1:
        raise ValueError("x must lie in [0, 1]")
    lhs = (table.a - 1.0) / T * expected_count(table, mu, T * x, tilted=True)
    # the tilted count is exp(-b t) E[Z_t], exactly the normalisation needed
    return lhs, mu * table.a


def compound_geometric_sample(kernel: Kernel, c: float, T: float,
                              rng: np.random.Generator, size=None):
    """Draw (1/T) * sum_{i=1}^I X_i with X_i ~ phi and I ~ Geometric(1 - c) on {1, 2, ...}."""
    if not 0 < c < 1:
        raise ValueError(f"c must lie in (0, 1), got {c!r}")
    if not T > 0:
        raise ValueError("T must be positive")
    n = 1 if size is None else int(np.prod(size))
    counts = rng.geometric(1.0 - c, size=n)
    offsets = kernel.sample(rng, int(counts.sum()))
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    sums = np.add.reduceat(offsets, starts) / T
    if size is None:
        return float(sums[0])
    return sums.reshape(size)


def compound_geometric_density(table: RenewalTable, c: float, T: float, x):
    """rho(x) = T * hatPsi(Tx) * (1 - c) / c from a table solved with a = c."""
    if abs(table.a - c) > 1e-15 or table.b != 0.0:
        raise ValueError("table must be solved with a = c")
    return T * table.psi_tilde(T * np.asarray(x, dtype=float)) * (1.0 - c) / c
