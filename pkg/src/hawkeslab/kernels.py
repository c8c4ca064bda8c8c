"""Excitation kernels, scaling regimes and the Malthusian-parameter solver.

Every kernel has unit mass, so the branching ratio lives entirely in the
multiplier ``a`` that callers apply (``phi_T = a * phi``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EXPONENTIAL = "exponential"
ERLANG = "erlang"

H_LAMBDA = "h_lambda"
H_INFINITY = "h_infinity"


@dataclass(frozen=True)
class Kernel:
    """Unit-mass excitation density of Erlang type.

    ``shape == 1`` is the exponential density ``rate * exp(-rate * t)``.
    """

    family: str
    rate: float
    shape: int = 1

    def __post_init__(self):
        if self.family not in (EXPONENTIAL, ERLANG):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not self.rate > 0:
            raise ValueError("kernel rate must be positive")
        if self.family == EXPONENTIAL and self.shape != 1:
            raise ValueError("exponential kernel has shape 1")
        if int(self.shape) != self.shape or self.shape < 1:
            raise ValueError("Erlang shape must be an integer >= 1")

    @classmethod
    def exponential(cls, rate: float) -> "Kernel":
        return cls(EXPONENTIAL, float(rate), 1)

    @classmethod
    def erlang(cls, shape: int, rate: float) -> "Kernel":
        return cls(ERLANG, float(rate), int(shape))

    @property
    def label(self) -> str:
        if self.family == EXPONENTIAL:
            return f"exponential(rate={self.rate!r})"
        return f"erlang(shape={self.shape}, rate={self.rate!r})"

    def density(self, t):
        """phi(t); zero for negative arguments."""
        t = np.asarray(t, dtype=float)
        k, beta = self.shape, self.rate
        tc = np.maximum(t, 0.0)
        if k == 1:
            val = beta * np.exp(-beta * tc)
        else:
            val = beta**k * tc ** (k - 1) * np.exp(-beta * tc) / math.factorial(k - 1)
        out = np.where(t < 0, 0.0, val)
        return out[()] if out.ndim == 0 else out

    def cumulative(self, t):
        """Phi(t) = int_0^t phi(s) ds."""
        t = np.asarray(t, dtype=float)
        k, beta = self.shape, self.rate
        x = beta * np.maximum(t, 0.0)
        with np.errstate(invalid="ignore"):
            partial = np.zeros_like(x)
            term = np.ones_like(x)
            for j in range(k):
                if j > 0:
                    term = term * x / j
                partial = partial + term
            tail = np.where(np.isinf(x), 0.0, np.exp(-x) * partial)
        out = np.where(t < 0, 0.0, 1.0 - tail)
        return out[()] if out.ndim == 0 else out

    def laplace(self, b):
        """int_0^inf exp(-b s) phi(s) ds for b >= 0."""
        b = np.asarray(b, dtype=float)
        out = (self.rate / (self.rate + b)) ** self.shape
        return out[()] if out.ndim == 0 else out

    def laplace_derivative(self, b):
        b = np.asarray(b, dtype=float)
        out = -self.shape * self.rate**self.shape / (self.rate + b) ** (self.shape + 1)
        return out[()] if out.ndim == 0 else out

    def tilted_mean(self, b: float) -> float:
        """int_0^inf exp(-b s) s phi(s) ds."""
        return float(-self.laplace_derivative(b))

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def mode(self) -> float:
        return (self.shape - 1) / self.rate

    @property
    def peak(self) -> float:
        """Maximum of the density over [0, inf)."""
        return float(self.density(self.mode))

    def sample(self, rng: np.random.Generator, size=None):
        return rng.gamma(self.shape, 1.0 / self.rate, size=size)


@dataclass(frozen=True)
class ScalingRegime:
    """Family of branching ratios a_T > 1 indexed by the horizon T.

    ``h_lambda``: a_T = 1 + lam / T.  ``h_infinity``: a_T = 1 + T**(-alpha).
    """

    tag: str
    value: float

    def __post_init__(self):
        if self.tag == H_LAMBDA:
            if not self.value > 0:
                raise ValueError("H(lambda) needs lambda > 0")
        elif self.tag == H_INFINITY:
            if not 0 < self.value < 1:
                raise ValueError("H(infinity) needs alpha in (0, 1)")
        else:
            raise ValueError(f"unknown regime tag {self.tag!r}")

    @classmethod
    def h_lambda(cls, lam: float) -> "ScalingRegime":
        return cls(H_LAMBDA, float(lam))

    @classmethod
    def h_infinity(cls, alpha: float) -> "ScalingRegime":
        return cls(H_INFINITY, float(alpha))

    def excess(self, T: float) -> float:
        """a_T - 1."""
        if not T > 0:
            raise ValueError("horizon must be positive")
        if self.tag == H_LAMBDA:
            return self.value / T
        return T ** (-self.value)

    def a(self, T: float) -> float:
        return 1.0 + self.excess(T)

    def scaled_excess(self, T: float) -> float:
        """T (a_T - 1): lambda under H(lambda), T**(1 - alpha) under H(infinity)."""
        if self.tag == H_LAMBDA:
            return self.value
        return T ** (1.0 - self.value)


@dataclass(frozen=True)
class MalthusianSolution:
    rate: float
    tilted_mass: float
    tilted_mean: float
    a: float

    @property
    def residual(self) -> float:
        return abs(self.tilted_mass - 1.0 / self.a)


def solve_malthusian(kernel: Kernel, a: float, tol: float = 1e-12) -> MalthusianSolution:
    """Find b > 0 with ``a * laplace(b) = 1/a``.

    Bracket by doubling, bisect to width 1e-6 (relative), polish by Newton.
    """
    a = float(a)
    if not a > 1:
        raise ValueError(f"Malthusian parameter needs a > 1, got a={a!r}")
    target = 1.0 / a

    def resid(b):
        return a * float(kernel.laplace(b)) - target

    lo, hi = 0.0, kernel.rate
    while resid(hi) > 0:
        lo, hi = hi, 2.0 * hi
    while hi - lo > 1e-6 * hi:
        mid = 0.5 * (lo + hi)
        if resid(mid) > 0:
            lo = mid
        else:
            hi = mid
    b = 0.5 * (lo + hi)
    for _ in range(100):
        r = resid(b)
        if abs(r) <= tol * 1e-2:
            break
        step = r / (a * float(kernel.laplace_derivative(b)))
        b_new = b - step
        if not lo <= b_new <= hi:
            b_new = 0.5 * (lo + hi)
        if r > 0:
            lo = b
        else:
            hi = b
        if b_new == b:
            break
        b = b_new
    if abs(resid(b)) > tol:
        raise ArithmeticError(f"Malthusian solve did not converge (residual {resid(b):.3g})")
    return MalthusianSolution(
        rate=b,
        tilted_mass=a * float(kernel.laplace(b)),
        tilted_mean=a * kernel.tilted_mean(b),
        a=a,
    )
