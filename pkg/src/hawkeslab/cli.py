"""Command-line entry point: ``hawkeslab {renewal,simulate,cir,lln,clt,verify}``.

Exit codes: 0 success, 2 configuration error, 3 explosion guard, 4 verdict
failure.  Reports are YAML with a ``#`` header; wall-clock timings go to a
separate ``*_timings.yaml`` so the reports themselves are byte-reproducible.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .acceptance import CRITERIA, Thresholds
from .cir import EULER, EXACT, CIRParams, simulate_cir_euler, simulate_cir_exact, value_at
from .config import Config, ConfigError, load_config
from .harness import (
    ExperimentConfig,
    ks_threshold,
    ks_two_sample,
    run_clt_experiment,
    run_lln_experiment,
    seeded_stream,
)
from .io import write_csv, write_report
from .kernels import H_INFINITY, H_LAMBDA
from .renewal import (
    expectation_curve,
    expected_count,
    limit_profile_mean,
    limit_profile_psi,
    solve_renewal,
)
from .simulate import CLUSTER, THINNING, ExplosionError, SimulationParams, intensity_path, simulate

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_VERDICT = 0, 2, 3, 4

logger = logging.getLogger("hawkeslab")


class _Run:
    """Resolved config plus output helpers shared by the subcommands."""

    def __init__(self, cfg: Config, out: Path, threads: int):
        self.cfg = cfg
        self.out = out
        self.threads = threads
        self.seed = cfg.run.seed
        self.digest = cfg.digest()
        out.mkdir(parents=True, exist_ok=True)

    def csv(self, name, columns, kind):
        return write_csv(self.out / name, columns, self.digest, self.seed, kind)

    def report(self, name, data, kind):
        body = {"version": __version__, "seed": self.seed, "config_sha256": self.digest,
                "config": self.cfg.canonical(), **data}
        return write_report(self.out / f"{name}_report.yaml", body, self.digest, self.seed, kind)

    def timings(self, name, seconds):
        return write_report(self.out / f"{name}_timings.yaml", {"wall_clock_seconds": seconds},
                            self.digest, self.seed, f"{name} timings")


def _verdict(name: str, ok: bool, detail: str = "") -> str:
    line = f"{name}: {'PASS' if ok else 'FAIL'}"
    return f"{line} ({detail})" if detail else line


def cmd_renewal(run: _Run) -> int:
    cfg = run.cfg
    sec = cfg.renewal
    kernel = cfg.kernel.build()
    regime = cfg.regime.build()
    if sec.a is None and sec.T is None:
        raise ConfigError("renewal.a: set either renewal.a or renewal.T (a is then taken from the regime)")
    a = sec.a if sec.a is not None else regime.a(sec.T)
    if a <= 1 and sec.horizon is None:
        raise ConfigError("renewal.horizon: required when a <= 1")
    horizon = sec.horizon
    if horizon is None:
        horizon = sec.T if sec.T is not None else 60 * kernel.mean / (a - 1)
    table = solve_renewal(kernel, a, sec.step, horizon)
    curve = expectation_curve(table, sec.mu)
    t = table.times[:: sec.every]
    n = t.size
    if sec.T is not None and a > 1:
        lam = sec.T * (a - 1)
        x = t / sec.T
        lim_psi = limit_profile_psi(lam, kernel.mean, x)
        lim_mean = sec.T**2 * limit_profile_mean(sec.mu, lam, kernel.mean, x)
    else:
        lim_psi = lim_mean = np.full(n, np.nan)
    run.csv("renewal.csv", {
        "t": t,
        "psi_tilde": table.tilted[:: sec.every],
        "psi": table.psi(t),
        "expected_count": curve.values[:: sec.every],
        "limit_psi": lim_psi,
        "limit_expected_count": lim_mean,
    }, "renewal")
    mass = table.tilted_mass()
    summary = {"a": a, "b": table.b, "step": table.step, "horizon": table.horizon,
               "kernel": kernel.label}
    if a > 1:
        target = 1.0 / (a - 1)
        summary["mass_check"] = {"tilted_mass": mass, "target": target,
                                 "rel_error": abs(mass - target) / target}
    run.report("renewal", {"renewal": summary}, "renewal report")
    print(f"renewal: a={a!r} b={table.b!r} mass={mass!r}"
          + (f" target={1 / (a - 1)!r}" if a > 1 else ""))
    return EXIT_OK


def _simulate_batch(run: _Run, params: SimulationParams, algorithm: str, paths: int):
    """Terminal counts for ``paths`` replicates; exported paths get CSV files."""
    sec = run.cfg.simulate
    stream = f"simulate/{algorithm}"
    counts = np.zeros(paths)
    for i in range(paths):
        path = simulate(params, seeded_stream(run.seed, stream, i), algorithm, seed=(run.seed, stream, i))
        counts[i] = path.n_events
        if i < sec.export_paths and run.cfg.run.export_csv:
            diag = intensity_path(path, params, sec.diagnostics_step)
            run.csv(f"events_{algorithm}_{i}.csv", {"t": path.times}, f"{algorithm} events path {i}")
            run.csv(f"diagnostics_{algorithm}_{i}.csv", {
                "t": diag.grid,
                "intensity": diag.intensity,
                "compensator": diag.compensator,
                "count": diag.count,
                "martingale": diag.martingale,
                "quadratic_variation": diag.quadratic_variation,
            }, f"{algorithm} diagnostics path {i}")
    return counts


def cmd_simulate(run: _Run) -> int:
    cfg = run.cfg
    sec = cfg.simulate
    kernel = cfg.kernel.build()
    params = SimulationParams(sec.mu, kernel, sec.a, sec.horizon, cfg.run.max_events)
    if sec.a == 0:
        expected = sec.mu * sec.horizon
    else:
        table = solve_renewal(kernel, sec.a, sec.renewal_step, sec.horizon)
        expected = expected_count(table, sec.mu, sec.horizon)
    algorithms = [THINNING, CLUSTER] if sec.algorithm == "both" else [sec.algorithm]
    blocks, samples = {}, {}
    for alg in algorithms:
        try:
            counts = _simulate_batch(run, params, alg, sec.paths)
        except ExplosionError as exc:
            blocks[alg] = {"error": str(exc), "events_at_abort": exc.count, "time_reached": exc.reached}
            run.report("simulate", {"simulate": blocks, "aborted": True}, "simulate report")
            print(f"simulate[{alg}]: explosion guard tripped: {exc}", file=sys.stderr)
            return EXIT_GUARD
        se = counts.std(ddof=1) / np.sqrt(counts.size) if counts.size > 1 else float("nan")
        blocks[alg] = {"paths": sec.paths, "count_mean": counts.mean(), "count_var":
                       counts.var(ddof=1) if counts.size > 1 else float("nan"),
                       "count_se": se, "expected_count": expected,
                       "z": (counts.mean() - expected) / se if se > 0 else float("nan")}
        samples[alg] = counts
        b = blocks[alg]
        print(f"simulate[{alg}]: N={sec.paths} mean={b['count_mean']:.6g} var={b['count_var']:.6g} "
              f"expected={expected:.6g} z={b['z']:.3f}")
    data = {"simulate": blocks}
    if len(algorithms) == 2:
        ks = ks_two_sample(samples[THINNING], samples[CLUSTER])
        crit = ks_threshold(sec.paths, sec.paths, cfg.thresholds.ks_alpha)
        data["ks"] = {"statistic": ks, "threshold": crit, "below_threshold": ks < crit}
        print(f"simulate: KS thinning vs cluster = {ks:.6g} (threshold {crit:.6g})")
    run.report("simulate", data, "simulate report")
    return EXIT_OK


def cmd_cir(run: _Run) -> int:
    cfg = run.cfg
    sec = cfg.cir
    lam = sec.lam if sec.lam is not None else (cfg.regime.value if cfg.regime.tag == H_LAMBDA else 1.0)
    m = sec.m if sec.m is not None else cfg.kernel.build().mean
    params = CIRParams(sec.mu, lam, m)
    schemes = [EULER, EXACT] if sec.scheme == "both" else [sec.scheme]
    checkpoints = [x for x in sec.checkpoints if x <= sec.t_end]
    data, terminal = {"params": {"mu": sec.mu, "lam": lam, "m": m, "feller": params.feller}}, {}
    for scheme in schemes:
        rng = seeded_stream(run.seed, f"cir/{scheme}", 0)
        if scheme == EULER:
            path = simulate_cir_euler(params, sec.step, sec.t_end, rng, n_paths=sec.paths,
                                      diffusion=sec.diffusion)
        else:
            path = simulate_cir_exact(params, sec.step, sec.t_end, rng, n_paths=sec.paths)
        if run.cfg.run.export_csv:
            for i in range(min(sec.export_paths, sec.paths)):
                run.csv(f"cir_{scheme}_{i}.csv", {"t": path.times, "X": path.values[i],
                                                  "I": path.integral[i]}, f"cir {scheme} path {i}")
        rows = []
        for x in checkpoints:
            v = value_at(path, x)
            se = v.std(ddof=1) / np.sqrt(v.size) if v.size > 1 else float("nan")
            target = float(params.mean(x))
            rows.append({"t": x, "mean": v.mean(), "se": se, "target": target,
                         "z": (v.mean() - target) / se if se > 0 else float("nan")})
            print(f"cir[{scheme}]: t={x} mean={v.mean():.6g} target={target:.6g}")
        data[scheme] = {"checkpoints": rows, "integral_mean": path.integral[:, -1].mean(),
                        "integral_target": float(params.integrated_mean(sec.t_end))}
        terminal[scheme] = path.values[:, -1]
    if len(schemes) == 2:
        ks = ks_two_sample(terminal[EULER], terminal[EXACT])
        crit = ks_threshold(sec.paths, sec.paths, cfg.thresholds.ks_alpha)
        data["ks"] = {"statistic": ks, "threshold": crit, "below_threshold": ks < crit}
        print(f"cir: KS euler vs exact at t={sec.t_end} = {ks:.6g} (threshold {crit:.6g})")
    run.report("cir", data, "cir report")
    return EXIT_OK


def _experiment(run: _Run) -> ExperimentConfig:
    cfg = run.cfg
    ex = cfg.experiment
    return ExperimentConfig(
        kernel=cfg.kernel.build(),
        regime=cfg.regime.build(),
        mu=ex.mu,
        horizons=tuple(ex.horizons),
        replications=ex.replications,
        checkpoints=tuple(ex.checkpoints),
        seed=run.seed,
        experiment_id="experiment",
        renewal_step=ex.renewal_step,
        cir_step=ex.cir_step,
        reference_size=ex.reference_size,
        algorithm=ex.algorithm,
        max_events=cfg.run.max_events,
        threads=run.threads,
        poisson_oracle=ex.poisson_oracle,
        ks_alpha=cfg.thresholds.ks_alpha,
        se_flag=cfg.thresholds.se_flag,
        min_checkpoints=cfg.thresholds.min_checkpoints,
    )


def cmd_lln(run: _Run) -> int:
    cfg = run.cfg
    if not cfg.experiment.poisson_oracle and cfg.regime.tag != H_INFINITY:
        raise ConfigError("regime.tag: the LLN experiment needs h_infinity "
                          f"(got {cfg.regime.tag}); use `clt` for h_lambda")
    if len(cfg.experiment.checkpoints) < cfg.thresholds.min_checkpoints:
        raise ConfigError(f"experiment.checkpoints: need at least {cfg.thresholds.min_checkpoints}")
    try:
        report = run_lln_experiment(_experiment(run))
    except ExplosionError as exc:
        run.report("lln", {"aborted": True, "error": str(exc)}, "lln report")
        print(f"lln: explosion guard tripped: {exc}", file=sys.stderr)
        return EXIT_GUARD
    run.csv("lln_table.csv", {
        "T": [r.T for r in report.rows],
        "a": [r.a for r in report.rows],
        "b": [r.b for r in report.rows],
        "norm": [r.norm for r in report.rows],
        "norm_se": [r.norm_se for r in report.rows],
        "squared_norm": [r.squared_norm for r in report.rows],
        "bound": [r.bound for r in report.rows],
        "within_bound": [r.within_bound for r in report.rows],
    }, "lln table")
    verdicts = {"norms_decreasing": report.decreasing, "no_violations": not report.violations,
                "within_bound": report.within_bound}
    run.report("lln", {"lln": report, "verdicts": verdicts, "passed": report.passed}, "lln report")
    for r in report.rows:
        print(f"lln: T={r.T:g} norm={r.norm:.6g} se={r.norm_se:.3g} bound={r.bound:.6g}")
    detail = f"flagged within noise: {report.flagged_pairs}" if report.flagged_pairs else ""
    print(_verdict("lln norms decreasing", not report.violations, detail))
    print(_verdict("lln squared norms within fitted bound", verdicts["within_bound"]))
    return EXIT_OK if report.passed else EXIT_VERDICT


def cmd_clt(run: _Run) -> int:
    cfg = run.cfg
    if cfg.regime.tag != H_LAMBDA:
        raise ConfigError(f"regime.tag: the CLT experiment needs h_lambda (got {cfg.regime.tag}); "
                          "use `lln` for h_infinity")
    ex = _experiment(run)
    if ex.reference_size is not None and ex.reference_size < 5 * ex.replications:
        raise ConfigError("experiment.reference_size: must be at least 5 x replications")
    if 1.0 not in ex.checkpoints:
        raise ConfigError("experiment.checkpoints: must include 1.0")
    try:
        report = run_clt_experiment(ex)
    except ExplosionError as exc:
        run.report("clt", {"aborted": True, "error": str(exc)}, "clt report")
        print(f"clt: explosion guard tripped: {exc}", file=sys.stderr)
        return EXIT_GUARD
    xs = report.checkpoints
    rows = [(r, j) for r in report.rows for j in range(len(xs))]
    run.csv("clt_table.csv", {
        "T": [r.T for r, _ in rows],
        "x": [xs[j] for _, j in rows],
        "ks": [r.ks[j] for r, j in rows],
        "hawkes_mean": [r.hawkes_mean[j] for r, j in rows],
        "hawkes_var": [r.hawkes_var[j] for r, j in rows],
        "reference_mean": [report.reference_mean[j] for _, j in rows],
        "reference_var": [report.reference_var[j] for _, j in rows],
    }, "clt table")
    j1 = xs.index(1.0)
    last = report.rows[-1]
    target = float(limit_profile_mean(ex.mu, ex.regime.value, ex.kernel.mean, 1.0))
    mean_ok = abs(last.hawkes_mean[j1] - target) <= cfg.thresholds.clt_mean_tol
    var_ratio = last.hawkes_var[j1] / report.reference_var[j1]
    var_ok = abs(var_ratio - 1.0) <= cfg.thresholds.clt_var_tol
    verdicts = {"ks_decreasing": report.ks_decreasing, "mean": mean_ok, "variance": var_ok}
    passed = all(verdicts.values())
    run.report("clt", {"clt": report, "mean_target": target, "variance_ratio": var_ratio,
                       "verdicts": verdicts, "passed": passed}, "clt report")
    for r in report.rows:
        print(f"clt: T={r.T:g} KS(x=1)={r.ks[j1]:.6g} mean={r.hawkes_mean[j1]:.6g} var={r.hawkes_var[j1]:.6g}")
    print(f"clt: KS threshold at 1% = {report.ks_threshold:.6g}")
    print(_verdict("clt KS at x=1 strictly decreasing", report.ks_decreasing))
    print(_verdict("clt mean at largest T", mean_ok, f"{last.hawkes_mean[j1]:.6g} vs {target:.6g}"))
    print(_verdict("clt variance at largest T", var_ok, f"ratio {var_ratio:.4g}"))
    return EXIT_OK if passed else EXIT_VERDICT


def cmd_verify(run: _Run) -> int:
    cfg = run.cfg
    t = cfg.thresholds
    th = Thresholds(ks_alpha=t.ks_alpha, mean_se=t.mean_se, cir_mean_se=t.cir_mean_se,
                    clt_mean_tol=t.clt_mean_tol, clt_var_tol=t.clt_var_tol, chi2_alpha=t.chi2_alpha)
    results, timings = [], {}
    for cid in cfg.verify.criteria:
        fn = CRITERIA[cid]
        start = time.perf_counter()
        if cid == 13:
            res = fn(seed=run.seed, th=th, threads=run.threads, subset=tuple(cfg.verify.repro_criteria))
        else:
            res = fn(seed=run.seed, th=th, threads=run.threads)
        timings[f"criterion_{cid:02d}"] = time.perf_counter() - start
        results.append(res)
        print(res.line(), flush=True)
    passed = all(r.passed for r in results)
    run.report("verify", {"criteria": results, "passed": passed}, "verify report")
    run.timings("verify", timings)
    print(_verdict("verify", passed, f"{sum(r.passed for r in results)}/{len(results)} criteria"))
    return EXIT_OK if passed else EXIT_VERDICT


COMMANDS = {
    "renewal": cmd_renewal,
    "simulate": cmd_simulate,
    "cir": cmd_cir,
    "lln": cmd_lln,
    "clt": cmd_clt,
    "verify": cmd_verify,
}


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hawkeslab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hawkeslab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="TOML configuration file")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--seed", type=_seed, default=None, help="override run.seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for replications")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("config error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config).with_seed(args.seed)
        run = _Run(cfg, args.out, args.threads)
        return COMMANDS[args.command](run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
