"""Square-root diffusion dX = (mu + lam X)/m dt + (1/m) sqrt(X) dB, X_0 = 0.

The drift is repelling (lam > 0), the mirror image of the usual
mean-reverting CIR model.  Paths are simulated in batches: arrays carry any
leading batch shape and the time axis last.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EULER = "euler"
EXACT = "exact"


@dataclass(frozen=True)
class CIRParams:
    mu: float
    lam: float
    m: float

    def __post_init__(self):
        if not (self.mu > 0 and self.lam > 0 and self.m > 0):
            raise ValueError("mu, lam and m must all be positive")

    @property
    def drift_const(self) -> float:
        return self.mu / self.m

    @property
    def drift_slope(self) -> float:
        return self.lam / self.m

    @property
    def vol(self) -> float:
        return 1.0 / self.m

    @property
    def feller(self) -> bool:
        return 2 * self.drift_const >= self.vol**2

    @property
    def degrees_of_freedom(self) -> float:
        return 4 * self.drift_const / self.vol**2

    def mean(self, t):
        """E[X_t] = (mu/lam)(e^{lam t/m} - 1)."""
        return self.mu / self.lam * np.expm1(self.drift_slope * np.asarray(t, dtype=float))

    def integrated_mean(self, t):
        """E[int_0^t X ds]."""
        t = np.asarray(t, dtype=float)
        r = self.drift_slope
        return self.mu / self.lam * (np.expm1(r * t) / r - t)

    def transition(self, h: float):
        """(scale, dof, noncentrality factor) of the exact step X_{t+h} | X_t.

        X_{t+h} = scale * chi2'(dof, factor * X_t).
        """
        b, s2 = self.drift_slope, self.vol**2
        growth = np.exp(b * h)
        scale = s2 * np.expm1(b * h) / (4 * b)
        return scale, self.degrees_of_freedom, growth / scale


@dataclass(frozen=True, eq=False)
class CIRPath:
    step: float
    values: np.ndarray
    integral: np.ndarray
    scheme: str
    seed: object = None

    @property
    def times(self) -> np.ndarray:
        return self.step * np.arange(self.values.shape[-1])

    @property
    def t_end(self) -> float:
        return self.step * (self.values.shape[-1] - 1)


def _grid_size(h: float, t_end: float) -> int:
    if not h > 0:
        raise ValueError(f"time step must be positive, got {h!r}")
    if t_end < h:
        raise ValueError("t_end must be at least one step")
    return int(round(t_end / h))


def _running_integral(x: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(x)
    out[..., 1:] = np.cumsum(0.5 * h * (x[..., 1:] + x[..., :-1]), axis=-1)
    return out


def simulate_cir_euler(params: CIRParams, h: float, t_end: float, rng: np.random.Generator,
                       n_paths: int | None = None, diffusion: bool = True, seed=None) -> CIRPath:
    """Full-truncation Euler scheme; stored values are clipped at zero."""
    n = _grid_size(h, t_end)
    shape = () if n_paths is None else (int(n_paths),)
    x = np.zeros(shape + (n + 1,))
    a0, b0, s0 = params.drift_const, params.drift_slope, params.vol
    sqh = np.sqrt(h)
    cur = np.zeros(shape)
    for i in range(n):
        noise = s0 * np.sqrt(cur) * sqh * rng.standard_normal(shape) if diffusion else 0.0
        cur = np.maximum(cur + (a0 + b0 * cur) * h + noise, 0.0)
        x[..., i + 1] = cur
    return CIRPath(step=h, values=x, integral=_running_integral(x, h), scheme=EULER, seed=seed)


def simulate_cir_exact(params: CIRParams, h: float, t_end: float, rng: np.random.Generator,
                       n_paths: int | None = None, seed=None) -> CIRPath:
    """Exact transitions via the scaled noncentral chi-square law."""
    n = _grid_size(h, t_end)
    shape = () if n_paths is None else (int(n_paths),)
    x = np.zeros(shape + (n + 1,))
    scale, dof, factor = params.transition(h)
    cur = np.zeros(shape)
    for i in range(n):
        cur = scale * rng.noncentral_chisquare(dof, factor * cur, size=shape)
        x[..., i + 1] = cur
    return CIRPath(step=h, values=x, integral=_running_integral(x, h), scheme=EXACT, seed=seed)


def integrate_path(path: CIRPath, t: float):
    """Trapezoidal int_0^t X ds, linear between grid nodes."""
    if t < 0 or t > path.t_end * (1 + 1e-12):
        raise ValueError(f"t={t} outside [0, {path.t_end}]")
    pos = min(t / path.step, path.values.shape[-1] - 1)
    i = int(np.floor(pos))
    frac = pos - i
    lo = path.integral[..., i]
    if frac == 0:
        return lo
    return (1 - frac) * lo + frac * path.integral[..., i + 1]


def value_at(path: CIRPath, t: float):
    pos = min(t / path.step, path.values.shape[-1] - 1)
    i = int(np.floor(pos))
    frac = pos - i
    if frac == 0:
        return path.values[..., i]
    return (1 - frac) * path.values[..., i] + frac * path.values[..., i + 1]
