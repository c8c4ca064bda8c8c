"""The acceptance matrix: one function per criterion.

Each function returns a :class:`CriterionResult` whose ``metrics`` are plain
numbers, so that a report built from them is byte-reproducible.  Wall-clock
limits are enforced by the test-suite, not here.
"""
from __future__ import annotations

import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .cir import CIRParams, simulate_cir_euler, simulate_cir_exact, value_at
from .harness import (
    ExperimentConfig,
    ks_threshold,
    ks_two_sample,
    parallel_map,
    run_clt_experiment,
    run_lln_experiment,
    seeded_stream,
)
from .kernels import Kernel, ScalingRegime, solve_malthusian
from .renewal import (
    compound_geometric_density,
    compound_geometric_sample,
    expectation_curve,
    limit_profile_mean,
    mean_bound_check,
    solve_renewal,
)
from .simulate import (
    CLUSTER,
    THINNING,
    ExplosionError,
    SimulationParams,
    event_intensities,
    intensity_path,
    martingale_at,
    max_time_changed_jump,
    simulate,
    time_changed_qv,
)

DEFAULT_SEED = 20241015


@dataclass(frozen=True)
class Thresholds:
    ks_alpha: float = 0.01
    mean_se: float = 4.0
    cir_mean_se: float = 3.0
    clt_mean_tol: float = 0.1
    clt_var_tol: float = 0.25
    chi2_alpha: float = 0.01


@dataclass
class CriterionResult:
    id: int
    title: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    note: str = ""

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        extra = f" -- {self.note}" if self.note else ""
        return f"criterion {self.id:2d} [{verdict}] {self.title}{extra}"


def criterion_01(seed=DEFAULT_SEED, th=Thresholds(), threads=1) -> CriterionResult:
    worst = 0.0
    worst_residual = 0.0
    for beta in (0.5, 1.0, 2.0):
        for a in (1.001, 1.01, 1.1):
            e = solve_malthusian(Kernel.exponential(beta), a)
            g = solve_malthusian(Kernel.erlang(2, beta), a)
            worst = max(worst, abs(e.rate - beta * (a * a - 1)), abs(g.rate - beta * (a - 1)))
            worst_residual = max(worst_residual, e.residual, g.residual)
    ok = worst <= 1e-10 and worst_residual <= 1e-12
    return CriterionResult(1, "Malthusian parameter vs closed forms", ok,
                           {"max_abs_error": worst, "max_residual": worst_residual})


def _renewal_error(step):
    kernel = Kernel.exponential(1.0)
    table = solve_renewal(kernel, 1.2, step, 20.0)
    t = table.times
    exact = 1.2 * np.exp(0.2 * t)
    return float(np.max(np.abs(table.psi(t) - exact) / exact))


def criterion_02(seed=DEFAULT_SEED, th=Thresholds(), threads=1) -> CriterionResult:
    coarse = _renewal_error(1 / 400)
    fine = _renewal_error(1 / 800)
    ratio = coarse / fine
    ok = coarse <= 1e-4 and ratio >= 3.5
    return CriterionResult(2, "renewal solver vs a*beta*exp((a-1)beta t)", ok,
                           {"max_rel_error": coarse, "max_rel_error_half_step": fine,
                            "reduction": ratio})


def criterion_03(seed=DEFAULT_SEED, th=Thresholds(), threads=1) -> CriterionResult:
    kernel = Kernel.exponential(1.0)
    metrics = {}
    ok = True
    for a in (1.05, 1.2):
        table = solve_renewal(kernel, a, None, 60 * kernel.mean / (a - 1))
        rel = abs(table.tilted_mass() * (a - 1) - 1.0)
        metrics[f"a={a}"] = {"mass": table.tilted_mass(), "target": 1 / (a - 1), "rel_error": rel}
        ok &= rel <= 0.005
    return CriterionResult(3, "mass of tilted renewal function equals 1/(a-1)", bool(ok), metrics)


def criterion_04(seed=DEFAULT_SEED, th=Thresholds(), threads=1) -> CriterionResult:
    kernel = Kernel.exponential(1.0)
    regime = ScalingRegime.h_lambda(1.0)
    x = np.round(np.arange(1, 11) / 10, 12)
    dists = []
    pointwise_ok = True
    for T in (50.0, 200.0, 800.0):
        table = solve_renewal(kernel, regime.a(T), None, T)
        gap = np.abs(table.psi(T * x) - np.exp(x))
        dists.append(float(gap.max()))
        if T == 800.0:
            pointwise_ok = bool(np.all(gap <= 0.15 * np.exp(x)))
    monotone = all(b < a for a, b in zip(dists, dists[1:]))
    return CriterionResult(4, "Psi^T(Tx) approaches exp(x)", monotone and pointwise_ok,
                           {"max_abs_distance": dists, "pointwise_T800": pointwise_ok})


def criterion_05(seed=DEFAULT_SEED, th=Thresholds(), threads=1, kernel=None) -> CriterionResult:
    kernel = kernel or Kernel.exponential(1.0)
    c, T, n, bins = 0.9, 100.0, 100_000, 20
    rng = seeded_stream(seed, "criterion-05", 0)
    draws = compound_geometric_sample(kernel, c, T, rng, size=n)
    x_max = 4 * kernel.mean / (T * (1 - c))
    table = solve_renewal(kernel, c, None, T * x_max)
    edges = np.linspace(0.0, x_max, bins)
    # bin masses of rho from the cumulative trapezoid of the solver density
    grid = table.times / T
    dens = compound_geometric_density(table, c, T, grid)
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))))
    cdf_edges = np.interp(edges, grid, cum)
    probs = np.diff(cdf_edges)
    probs = np.append(probs, 1.0 - cdf_edges[-1])
    observed = np.histogram(draws, bins=np.append(edges, np.inf))[0]
    chi2, p = stats.chisquare(observed, probs * n)
    return CriterionResult(5, "compound-geometric histogram vs solver density", bool(p >= th.chi2_alpha),
                           {"chi2": float(chi2), "p_value": float(p), "bins": bins,
                            "tail_probability": float(probs[-1])})


def criterion_06(seed=DEFAULT_SEED, th=Thresholds(), threads=1) -> CriterionResult:
    kernel = Kernel.exponential(1.0)
    mu, lam, m = 1.0, 1.0, 1.0
    T = 2000.0
    regime = ScalingRegime.h_lambda(lam)
    table = solve_renewal(kernel, regime.a(T), None, T)
    curve = expectation_curve(table, mu)
    part_i = {}
    ok_i = True
    for x in (0.5, 1.0):
        target = float(limit_profile_mean(mu, lam, m, x))
        value = float(curve.at(T * x)) / T**2
        rel = abs(value - target) / target
        part_i[f"x={x}"] = {"scaled_mean": value, "target": target, "rel_error": rel}
        ok_i &= rel <= 0.02

    checkpoints = np.round(np.arange(0, 11) / 10, 12)
    cases = [("h_lambda", 1.0, 1.0, 100.0), ("h_lambda", 1.0, 1.0, 2000.0),
             ("h_infinity", 0.5, 1.0, 100.0), ("h_infinity", 0.5, 2.0, 400.0)]
    part_ii = {}
    ok_ii = True
    for tag, value, mu_c, T_c in cases:
        reg = ScalingRegime(tag, value)
        tab = table if (tag == "h_lambda" and T_c == T) else solve_renewal(kernel, reg.a(T_c), None, T_c)
        lhs = [mean_bound_check(tab, mu_c, T_c, float(x))[0] for x in checkpoints]
        rhs = mu_c * reg.a(T_c)
        part_ii[f"{tag}({value}) mu={mu_c} T={T_c}"] = {"max_lhs": max(lhs), "rhs": rhs}
        ok_ii &= max(lhs) <= rhs
    return CriterionResult(6, "expected count: limit profile and uniform bound", bool(ok_i and ok_ii),
                           {"limit": part_i, "bound": part_ii})


def _terminal_counts(params, algorithm, seed, stream, n, threads):
    def one(i):
        path = simulate(params, seeded_stream(seed, stream, i), algorithm)
        return path.n_events
    return np.array(parallel_map(one, n, threads), dtype=float)


def criterion_07(seed=DEFAULT_SEED, th=Thresholds(), threads=1) -> CriterionResult:
    params = SimulationParams(1.0, Kernel.exponential(1.0), 1.2, 5.0)
    n = 10_000
    thin = _terminal_counts(params, THINNING, seed, "criterion-07/thinning", n, threads)
    clus = _terminal_counts(params, CLUSTER, seed, "criterion-07/cluster", n, threads)
    ks = ks_two_sample(thin, clus)
    crit = ks_threshold(n, n, th.ks_alpha)
    return CriterionResult(7, "thinning and cluster simulators agree in law", ks < crit,
                           {"ks": ks, "threshold": crit, "mean_thinning": thin.mean(),
                            "mean_cluster": clus.mean()})


def criterion_08(seed=DEFAULT_SEED, th=Thresholds(), threads=1) -> CriterionResult:
    n = 1000
    metrics = {}
    ok = True
    for kernel in (Kernel.exponential(1.0), Kernel.erlang(2, 1.0)):
        params = SimulationParams(1.0, kernel, 1.2, 5.0)
        stream = f"criterion-08/{kernel.label}"

        def one(i):
            path = simulate(params, seeded_stream(seed, stream, i), THINNING)
            diag = intensity_path(path, params, 0.05)
            exact = bool(np.array_equal(diag.quadratic_variation, diag.count.astype(float)))
            return exact, martingale_at(path, params, params.horizon)

        out = parallel_map(one, n, threads)
        qv_exact = all(o[0] for o in out)
        mt = np.array([o[1] for o in out])
        se = mt.std(ddof=1) / np.sqrt(n)
        mean_ok = abs(mt.mean()) <= th.mean_se * se
        metrics[kernel.label] = {"qv_equals_count": qv_exact, "mean_M": mt.mean(), "se": se}
        ok &= qv_exact and mean_ok
    return CriterionResult(8, "martingale identities", bool(ok), metrics)


def _lln_config(seed, threads, horizons=(64.0, 256.0, 1024.0), replications=200,
                checkpoints=None):
    return ExperimentConfig(
        kernel=Kernel.exponential(1.0),
        regime=ScalingRegime.h_infinity(0.5),
        mu=1.0,
        horizons=horizons,
        replications=replications,
        checkpoints=checkpoints or tuple(np.round(np.arange(1, 11) / 10, 12)),
        seed=seed,
        experiment_id="criterion-09",
        threads=threads,
    )


def criterion_09(seed=DEFAULT_SEED, th=Thresholds(), threads=1, horizons=(64.0, 256.0, 1024.0)) -> CriterionResult:
    cfg = _lln_config(seed, threads, horizons)
    try:
        report = run_lln_experiment(cfg)
    except ExplosionError as exc:
        return CriterionResult(9, "LLN norms decrease and obey the fitted bound", False,
                               {"explosion_count": exc.count, "reached": exc.reached,
                                "horizon": exc.horizon},
                               note=f"explosion guard tripped: {exc}")
    rows = [{"T": r.T, "norm": r.norm, "squared_norm": r.squared_norm, "bound": r.bound,
             "within_bound": r.within_bound} for r in report.rows]
    ok = report.decreasing and report.within_bound
    return CriterionResult(9, "LLN norms decrease and obey the fitted bound", ok,
                           {"rows": rows, "constant": report.constant,
                            "flagged_pairs": report.flagged_pairs})


def clt_config(seed, threads, horizons=(100.0, 400.0, 800.0)):
    return ExperimentConfig(
        kernel=Kernel.exponential(1.0),
        regime=ScalingRegime.h_lambda(1.0),
        mu=1.0,
        horizons=horizons,
        replications=500,
        checkpoints=(0.25, 0.5, 0.75, 1.0),
        seed=seed,
        experiment_id="criterion-10",
        reference_size=5000,
        threads=threads,
    )


def criterion_10(seed=DEFAULT_SEED, th=Thresholds(), threads=1) -> CriterionResult:
    report = run_clt_experiment(clt_config(seed, threads))
    ks = report.ks_at(1.0)
    last = report.rows[-1]
    mean_h = last.hawkes_mean[-1]
    var_h, var_ref = last.hawkes_var[-1], report.reference_var[-1]
    target = float(np.e - 2)
    ok_a = report.ks_decreasing
    ok_b = abs(mean_h - target) <= th.clt_mean_tol
    ok_c = abs(var_h / var_ref - 1.0) <= th.clt_var_tol
    notes = [name for name, ok in (("(a) KS not strictly decreasing", ok_a),
                                   ("(b) mean", ok_b), ("(c) variance", ok_c)) if not ok]
    return CriterionResult(
        10, "CLT: Z_{Tt}/T^2 vs integrated CIR", bool(ok_a and ok_b and ok_c),
        {"ks_x1": ks, "ks_threshold": report.ks_threshold, "a_ks_decreasing": ok_a,
         "b_mean": mean_h, "b_target": target, "b_ok": ok_b,
         "c_var_hawkes": var_h, "c_var_reference": var_ref, "c_ok": ok_c},
        note="; ".join(notes))


def criterion_11(seed=DEFAULT_SEED, th=Thresholds(), threads=1) -> CriterionResult:
    params = CIRParams(1.0, 1.0, 1.0)
    n = 10_000
    euler = simulate_cir_euler(params, 1 / 512, 1.0, seeded_stream(seed, "criterion-11/euler", 0), n_paths=n)
    means = {}
    ok = True
    for t in (0.25, 0.5, 1.0):
        v = value_at(euler, t)
        z = (v.mean() - params.mean(t)) / (v.std(ddof=1) / np.sqrt(n))
        means[f"t={t}"] = {"mean": v.mean(), "target": float(params.mean(t)), "z": z}
        ok &= abs(z) <= th.cir_mean_se
    exact = simulate_cir_exact(params, 1 / 8, 1.0, seeded_stream(seed, "criterion-11/exact", 0), n_paths=n)
    ks = ks_two_sample(euler.values[:, -1], exact.values[:, -1])
    crit = ks_threshold(n, n, th.ks_alpha)
    return CriterionResult(11, "CIR sample means and Euler/exact agreement", bool(ok and ks < crit),
                           {"means": means, "ks": ks, "threshold": crit})


def criterion_12(seed=DEFAULT_SEED, th=Thresholds(), threads=1) -> CriterionResult:
    T, mu, n = 400.0, 1.0, 200
    regime = ScalingRegime.h_lambda(1.0)
    params = SimulationParams(mu, Kernel.exponential(1.0), regime.a(T), T)

    def one(i):
        path = simulate(params, seeded_stream(seed, "criterion-12", i), THINNING)
        lam = event_intensities(path, params)
        return (time_changed_qv(path, params, T, 0.5, lam),
                max_time_changed_jump(path, params, T, 1.0, lam))

    out = np.array(parallel_map(one, n, threads))
    qv_mean = float(out[:, 0].mean())
    bound = 1 / np.sqrt(mu * T)
    jumps_ok = bool(np.all(out[:, 1] <= bound))
    return CriterionResult(12, "time-changed quadratic variation and jump bound",
                           abs(qv_mean - 0.5) <= 0.05 and jumps_ok,
                           {"qv_mean": qv_mean, "max_jump": float(out[:, 1].max()), "jump_bound": bound})


def criterion_13(seed=DEFAULT_SEED, th=Thresholds(), threads=1, subset=(1, 2, 3, 4, 5, 6, 7, 8, 11, 12)) -> CriterionResult:
    from .cli import main

    with tempfile.TemporaryDirectory() as tmp:
        cfg = Path(tmp) / "verify.toml"
        cfg.write_text(f"[run]\nseed = {seed}\n\n[verify]\ncriteria = {list(subset)}\n")
        reports = []
        for k in range(2):
            out = Path(tmp) / f"run{k}"
            main(["verify", "--config", str(cfg), "--out", str(out), "--threads", str(threads)])
            reports.append((out / "verify_report.yaml").read_bytes())
    same = reports[0] == reports[1]
    return CriterionResult(13, "verify reports are byte-identical across runs", same,
                           {"subset": list(subset), "report_bytes": len(reports[0])})


CRITERIA = {
    1: criterion_01, 2: criterion_02, 3: criterion_03, 4: criterion_04, 5: criterion_05,
    6: criterion_06, 7: criterion_07, 8: criterion_08, 9: criterion_09, 10: criterion_10,
    11: criterion_11, 12: criterion_12, 13: criterion_13,
}
