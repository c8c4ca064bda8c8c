import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hawkeslab.harness import ks_threshold, ks_two_sample, seeded_stream
from hawkeslab.kernels import Kernel, ScalingRegime
from hawkeslab.renewal import expectation_curve, expected_count, solve_renewal
from hawkeslab.simulate import (
    CLUSTER,
    THINNING,
    EventPath,
    ExplosionError,
    SimulationParams,
    event_intensities,
    intensity_at,
    intensity_path,
    martingale_at,
    max_time_changed_jump,
    simulate,
    simulate_cluster,
    simulate_thinning,
    time_changed_qv,
)

EXP1 = Kernel.exponential(1.0)
ERL2 = Kernel.erlang(2, 1.0)
KERNELS = [EXP1, ERL2, Kernel.erlang(3, 2.0)]


def counts(params, algorithm, n, stream, seed=5):
    return np.array([simulate(params, seeded_stream(seed, stream, i), algorithm).n_events for i in range(n)],
                    dtype=float)


def direct_intensity(times, mu, a, kernel, t):
    past = times[times < t]
    return mu + a * np.sum(kernel.density(t - past))


def direct_compensator(times, mu, a, kernel, t):
    past = times[times <= t]
    return mu * t + a * np.sum(kernel.cumulative(t - past))


def test_params_validation():
    for bad in (0.5, 1.0, -1.0):
        with pytest.raises(ValueError):
            SimulationParams(1.0, EXP1, bad, 5.0)
    with pytest.raises(ValueError):
        SimulationParams(0.0, EXP1, 1.2, 5.0)
    with pytest.raises(ValueError):
        SimulationParams(1.0, EXP1, 1.2, 0.0)
    with pytest.raises(ValueError):
        simulate(SimulationParams(1.0, EXP1, 1.2, 1.0), np.random.default_rng(0), "ogata")


@pytest.mark.parametrize("algorithm", [THINNING, CLUSTER])
def test_poisson_mode(algorithm):
    params = SimulationParams(3.0, EXP1, 0.0, 10.0)
    z = counts(params, algorithm, 4000, f"poisson/{algorithm}")
    se = z.std(ddof=1) / np.sqrt(z.size)
    assert abs(z.mean() - 30.0) <= 4 * se
    assert z.var(ddof=1) == pytest.approx(30.0, rel=0.1)


@pytest.mark.parametrize("algorithm", [THINNING, CLUSTER])
@pytest.mark.parametrize("kernel", [EXP1, ERL2], ids=lambda k: k.label)
def test_mean_count_matches_renewal_at_checkpoints(kernel, algorithm):
    params = SimulationParams(1.0, kernel, 1.2, 5.0)
    table = solve_renewal(kernel, 1.2, None, 5.0)
    curve = expectation_curve(table, 1.0)
    checkpoints = np.arange(1, 11) * 0.5
    n = 4000
    z = np.array([np.searchsorted(simulate(params, seeded_stream(9, f"mean/{kernel.label}/{algorithm}", i),
                                           algorithm).times, checkpoints, side="right")
                  for i in range(n)], dtype=float)
    se = z.std(axis=0, ddof=1) / np.sqrt(n)
    assert np.all(np.abs(z.mean(axis=0) - curve.at(checkpoints)) <= 4 * se)


def test_mean_count_example_ten_thousand_paths():
    params = SimulationParams(1.0, EXP1, 1.2, 5.0)
    z = counts(params, THINNING, 10_000, "mean-10k")
    target = expected_count(solve_renewal(EXP1, 1.2, None, 5.0), 1.0, 5.0)
    assert abs(z.mean() - target) <= 4 * z.std(ddof=1) / np.sqrt(z.size)


def test_scaled_mean_under_h_lambda():
    T = 200.0
    params = SimulationParams(1.0, EXP1, ScalingRegime.h_lambda(1.0).a(T), T)
    z = counts(params, THINNING, 1000, "scaled-mean") / T**2
    assert abs(z.mean() - (math.e - 2)) <= 0.1 * (math.e - 2)


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.label)
def test_thinning_and_cluster_agree(kernel):
    params = SimulationParams(1.0, kernel, 1.2, 5.0)
    n = 3000
    a = counts(params, THINNING, n, f"agree/{kernel.label}/t")
    b = counts(params, CLUSTER, n, f"agree/{kernel.label}/c")
    assert ks_two_sample(a, b) < ks_threshold(n, n, 0.01)


def test_interarrival_law_of_first_event():
    # first event time is Exp(mu) whatever the kernel
    params = SimulationParams(2.0, ERL2, 1.5, 3.0)
    first = []
    for i in range(3000):
        path = simulate_thinning(params, seeded_stream(1, "first", i))
        first.append(path.times[0] if path.n_events else np.inf)
    first = np.array(first)
    ref = seeded_stream(1, "first-ref", 0).exponential(0.5, size=3000)
    assert ks_two_sample(first, ref) < ks_threshold(3000, 3000, 0.01)


@pytest.mark.parametrize("algorithm", [THINNING, CLUSTER])
@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.label)
def test_path_is_simple_and_within_horizon(kernel, algorithm):
    params = SimulationParams(1.0, kernel, 1.5, 8.0)
    for i in range(50):
        path = simulate(params, seeded_stream(3, "simple", i), algorithm)
        assert np.all(np.diff(path.times) > 0)
        assert path.n_events == 0 or (path.times[0] >= 0 and path.times[-1] <= 8.0)
        assert path.count(0.0) == 0


def test_determinism():
    params = SimulationParams(1.0, ERL2, 1.3, 10.0)
    for algorithm in (THINNING, CLUSTER):
        p1 = simulate(params, seeded_stream(42, "det", 0), algorithm)
        p2 = simulate(params, seeded_stream(42, "det", 0), algorithm)
        assert p1.times.tobytes() == p2.times.tobytes()


@pytest.mark.parametrize("algorithm", [THINNING, CLUSTER])
def test_explosion_guard(algorithm):
    params = SimulationParams(1.0, EXP1, 2.0, 50.0, max_events=500)
    with pytest.raises(ExplosionError) as info:
        simulate(params, seeded_stream(0, "boom", 0), algorithm)
    err = info.value
    assert err.count > 500
    assert err.reached <= 50.0
    assert algorithm in str(err)


def test_direct_children_of_single_immigrant():
    # Poisson(a) children at kernel offsets; those born before h
    a, s, h = 1.05, 0.5, 3.0
    rng = np.random.default_rng(4)
    n = 200_000
    kids = rng.poisson(a, size=n)
    offsets = ERL2.sample(rng, int(kids.sum()))
    owner = np.repeat(np.arange(n), kids)
    before = np.bincount(owner[offsets <= h - s], minlength=n)
    target = a * (1 - (1 + (h - s)) * math.exp(-(h - s)))
    assert target == pytest.approx(a * ERL2.cumulative(h - s), rel=1e-12)
    assert abs(before.mean() - target) <= 4 * before.std() / np.sqrt(n)


def test_intensity_examples():
    params = SimulationParams(1.0, EXP1, 1.2, 3.0)
    empty = EventPath(times=np.empty(0), horizon=3.0, algorithm=THINNING)
    diag = intensity_path(empty, params, 0.5)
    np.testing.assert_array_equal(diag.intensity, 1.0)
    np.testing.assert_allclose(diag.martingale, -diag.grid)
    one = EventPath(times=np.array([1.0]), horizon=3.0, algorithm=THINNING)
    assert intensity_at(one, params, 2.0)[0] == pytest.approx(1.441455329, abs=1e-9)
    # left limit at the jump excludes the jump itself
    assert intensity_at(one, params, 1.0)[0] == 1.0


@pytest.mark.parametrize("kernel", KERNELS, ids=lambda k: k.label)
def test_markov_state_matches_direct_sums(kernel):
    params = SimulationParams(0.7, kernel, 1.4, 12.0)
    path = simulate(params, seeded_stream(8, "direct", 0), CLUSTER)
    grid = np.linspace(0, 12.0, 97)
    diag = intensity_path(path, params, 12.0 / 96)
    for j, t in enumerate(grid):
        assert diag.intensity[j] == pytest.approx(direct_intensity(path.times, 0.7, 1.4, kernel, t), rel=1e-10)
        assert diag.compensator[j] == pytest.approx(direct_compensator(path.times, 0.7, 1.4, kernel, t),
                                                    rel=1e-10)
    lam = event_intensities(path, params)
    for i in range(0, path.n_events, max(1, path.n_events // 20)):
        t = path.times[i]
        assert lam[i] == pytest.approx(direct_intensity(path.times, 0.7, 1.4, kernel, t), rel=1e-10)


@pytest.mark.parametrize("kernel", [EXP1, ERL2], ids=lambda k: k.label)
def test_diagnostic_invariants(kernel):
    params = SimulationParams(1.0, kernel, 1.2, 5.0)
    for i in range(30):
        path = simulate(params, seeded_stream(2, "diag", i), THINNING)
        diag = intensity_path(path, params, 0.05)
        assert np.array_equal(diag.quadratic_variation, diag.count.astype(float))
        assert np.all(diag.intensity >= 1.0)
        np.testing.assert_array_equal(diag.count, [path.count(t) for t in diag.grid])
        np.testing.assert_allclose(diag.martingale, diag.count - diag.compensator)
        assert np.all(np.diff(diag.compensator) > 0)


@pytest.mark.parametrize("kernel", [EXP1, ERL2], ids=lambda k: k.label)
def test_martingale_mean_zero(kernel):
    params = SimulationParams(1.0, kernel, 1.2, 5.0)
    m = np.array([martingale_at(simulate(params, seeded_stream(6, f"mart/{kernel.label}", i), THINNING),
                                params, 5.0) for i in range(1000)])
    assert abs(m.mean()) <= 4 * m.std(ddof=1) / np.sqrt(m.size)


def test_time_changed_qv_examples():
    params = SimulationParams(1.0, EXP1, 1.2, 10.0)
    empty = EventPath(times=np.empty(0), horizon=10.0, algorithm=THINNING)
    assert time_changed_qv(empty, params, 10.0, 0.7) == 0.0
    assert max_time_changed_jump(empty, params, 10.0) == 0.0
    with pytest.raises(ValueError):
        time_changed_qv(empty, params, 20.0, 1.0)


def test_time_changed_qv_poisson_lln():
    mu, T = 2.0, 500.0
    params = SimulationParams(mu, EXP1, 0.0, T)
    vals = np.array([time_changed_qv(simulate(params, seeded_stream(12, "qv-poisson", i)), params, T, 1.0)
                     for i in range(200)])
    assert np.mean(np.abs(vals - 1.0) <= 0.1) >= 0.95


def test_time_changed_qv_h_lambda():
    T, mu = 400.0, 1.0
    params = SimulationParams(mu, EXP1, ScalingRegime.h_lambda(1.0).a(T), T)
    vals, jumps = [], []
    for i in range(200):
        path = simulate(params, seeded_stream(13, "qv-hl", i))
        lam = event_intensities(path, params)
        vals.append(time_changed_qv(path, params, T, 0.5, lam))
        jumps.append(max_time_changed_jump(path, params, T, 1.0, lam))
    assert abs(np.mean(vals) - 0.5) <= 0.05
    assert max(jumps) <= 1 / math.sqrt(mu * T)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32), a=st.floats(1.01, 2.0), shape=st.integers(1, 3), mu=st.floats(0.2, 3.0))
def test_intensity_floor_and_monotone_qv(seed, a, shape, mu):
    kernel = Kernel.erlang(shape, 1.0) if shape > 1 else EXP1
    params = SimulationParams(mu, kernel, a, 4.0)
    path = simulate(params, np.random.default_rng(seed), THINNING)
    lam = event_intensities(path, params)
    assert np.all(lam >= mu)
    qv = [time_changed_qv(path, params, 4.0, t, lam) for t in np.linspace(0, 1, 11)]
    assert np.all(np.diff(qv) >= 0)
    assert max_time_changed_jump(path, params, 4.0, 1.0, lam) <= 1 / math.sqrt(mu * 4.0) * (1 + 1e-12)
