import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from hawkeslab.kernels import Kernel, ScalingRegime, solve_malthusian

KERNELS = [Kernel.exponential(1.0), Kernel.exponential(2.5), Kernel.erlang(2, 1.0), Kernel.erlang(3, 0.7)]


def test_density_examples():
    assert Kernel.exponential(1.0).density(0.0) == 1.0
    assert Kernel.exponential(2.0).density(0.5) == pytest.approx(2 * math.exp(-1), abs=1e-9)
    assert Kernel.erlang(2, 1.0).density(0.0) == 0.0
    assert Kernel.exponential(1.0).density(-0.1) == 0.0


def test_cumulative_examples():
    assert Kernel.exponential(1.0).cumulative(1e3) == pytest.approx(1.0, abs=1e-15)
    assert Kernel.exponential(1.0).cumulative(1.0) == pytest.approx(0.632120559, abs=1e-9)
    assert Kernel.erlang(2, 1.0).cumulative(1.0) == pytest.approx(0.264241118, abs=1e-9)


def test_laplace_examples():
    assert Kernel.exponential(1.0).laplace(0.0) == 1.0
    assert Kernel.exponential(1.0).laplace(1.0) == pytest.approx(0.5, abs=1e-15)
    assert Kernel.erlang(2, 1.0).laplace(1.0) == pytest.approx(0.25, abs=1e-15)


def test_first_moment_examples():
    assert Kernel.exponential(1.0).mean == 1.0
    assert Kernel.exponential(4.0).mean == 0.25
    assert Kernel.erlang(2, 1.0).mean == 2.0


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.label)
def test_unit_mass_and_mean_by_quadrature(kernel):
    upper = 50 * kernel.mean
    mass = integrate.quad(kernel.density, 0, upper, limit=200)[0]
    first = integrate.quad(lambda s: s * kernel.density(s), 0, upper, limit=200)[0]
    assert abs(mass - 1) <= 1e-6
    assert first == pytest.approx(kernel.mean, rel=1e-6)


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.label)
def test_laplace_and_derivative_against_quadrature(kernel):
    for b in (0.0, 0.3, 2.0):
        lt = integrate.quad(lambda s: math.exp(-b * s) * kernel.density(s), 0, np.inf)[0]
        assert kernel.laplace(b) == pytest.approx(lt, rel=1e-9)
        h = 1e-6
        fd = (kernel.laplace(b + h) - kernel.laplace(max(b - h, 0.0))) / (b + h - max(b - h, 0.0))
        assert kernel.laplace_derivative(b) == pytest.approx(fd, rel=1e-5)


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.label)
def test_cumulative_matches_density_integral(kernel):
    for t in (0.1, 1.0, 3.0):
        assert kernel.cumulative(t) == pytest.approx(integrate.quad(kernel.density, 0, t)[0], rel=1e-10)


def test_exponential_density_non_increasing():
    t = np.linspace(0, 20, 2001)
    assert np.all(np.diff(Kernel.exponential(1.3).density(t)) <= 0)


def test_erlang_mode_and_peak():
    k = Kernel.erlang(2, 1.0)
    assert k.mode == 1.0
    assert k.peak == pytest.approx(math.exp(-1))
    t = np.linspace(0, 10, 10001)
    assert k.density(t).max() <= k.peak + 1e-15


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.label)
def test_sampler_mean(kernel):
    draws = kernel.sample(np.random.default_rng(7), 200_000)
    se = draws.std() / np.sqrt(draws.size)
    assert abs(draws.mean() - kernel.mean) <= 4 * se


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("a", [1.001, 1.01, 1.1])
def test_malthusian_closed_forms(beta, a):
    assert abs(solve_malthusian(Kernel.exponential(beta), a).rate - beta * (a * a - 1)) <= 1e-10
    assert abs(solve_malthusian(Kernel.erlang(2, beta), a).rate - beta * (a - 1)) <= 1e-10


def test_malthusian_examples():
    assert solve_malthusian(Kernel.exponential(1.0), 1.1).rate == pytest.approx(0.21, abs=1e-12)
    assert solve_malthusian(Kernel.erlang(2, 1.0), 1.1).rate == pytest.approx(0.1, abs=1e-12)
    assert solve_malthusian(Kernel.exponential(1.0), 1 + 1e-8).rate == pytest.approx(2e-8, rel=1e-6)


@pytest.mark.parametrize("a", [1.0, 0.9, 0.0, -1.0])
def test_malthusian_rejects_subcritical(a):
    with pytest.raises(ValueError):
        solve_malthusian(Kernel.exponential(1.0), a)


@pytest.mark.parametrize("kernel", [Kernel.exponential(1.0), Kernel.erlang(2, 1.0)], ids=lambda k: k.label)
@pytest.mark.parametrize("a", [1.001, 1.01, 1.1, 1.5])
def test_malthusian_residual(kernel, a):
    sol = solve_malthusian(kernel, a)
    assert sol.rate > 0
    assert abs(a * kernel.laplace(sol.rate) - 1 / a) <= 1e-12
    assert sol.tilted_mean <= kernel.mean


@settings(max_examples=60, deadline=None)
@given(beta=st.floats(0.05, 20), a=st.floats(1.0005, 4.0), shape=st.integers(1, 4))
def test_malthusian_residual_property(beta, a, shape):
    kernel = Kernel.erlang(shape, beta) if shape > 1 else Kernel.exponential(beta)
    sol = solve_malthusian(kernel, a)
    assert sol.rate > 0
    assert abs(a * kernel.laplace(sol.rate) - 1 / a) <= 1e-12
    # tilted mean from the closed form against quadrature
    tm = integrate.quad(lambda s: a * math.exp(-sol.rate * s) * s * kernel.density(s), 0, np.inf)[0]
    assert sol.tilted_mean == pytest.approx(tm, rel=1e-7)


@settings(max_examples=40, deadline=None)
@given(beta=st.floats(0.1, 5), b1=st.floats(0, 10), db=st.floats(1e-3, 10))
def test_laplace_strictly_decreasing(beta, b1, db):
    for k in (Kernel.exponential(beta), Kernel.erlang(2, beta)):
        assert k.laplace(b1 + db) < k.laplace(b1)


def test_tilted_mean_tends_to_m():
    for kernel in (Kernel.exponential(1.0), Kernel.erlang(2, 1.0)):
        tm = [solve_malthusian(kernel, 1 + e).tilted_mean for e in (1e-1, 1e-3, 1e-6)]
        assert tm[0] < tm[1] < tm[2] <= kernel.mean
        assert tm[2] == pytest.approx(kernel.mean, rel=1e-4)


def test_regime_identities():
    for T in (10.0, 100.0, 1000.0):
        assert T * (ScalingRegime.h_lambda(2.0).a(T) - 1) == pytest.approx(2.0, rel=1e-12)
        assert T * (ScalingRegime.h_infinity(0.5).a(T) - 1) == pytest.approx(math.sqrt(T), rel=1e-12)
        assert ScalingRegime.h_lambda(2.0).a(T) > 1
        assert ScalingRegime.h_infinity(0.5).a(T) > 1


@pytest.mark.parametrize("kernel", [Kernel.exponential(1.0), Kernel.erlang(2, 1.0), Kernel.exponential(3.0)],
                         ids=lambda k: k.label)
@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_scaled_malthusian_limit(kernel, lam):
    T = 1e4
    target = 2 * lam / kernel.mean
    tb = T * solve_malthusian(kernel, ScalingRegime.h_lambda(lam).a(T)).rate
    assert abs(tb - target) <= 0.05 * target


def test_regime_validation():
    with pytest.raises(ValueError):
        ScalingRegime.h_infinity(1.0)
    with pytest.raises(ValueError):
        ScalingRegime.h_lambda(0.0)
    with pytest.raises(ValueError):
        Kernel.erlang(0, 1.0)
    with pytest.raises(ValueError):
        Kernel.exponential(-1.0)
