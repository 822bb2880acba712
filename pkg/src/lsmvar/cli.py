"""Command-line frontend: config-driven experiments emitting CSV tables.

Commands: var, compare, trend, calibrate, converge.  Exit codes: 0 success,
2 configuration error (message carries the field path), 3 numeric failure
(message names the pipeline stage).  Outputs are byte-identical across runs
and worker counts for a fixed config and seed.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

from .calibration import calibrate, load_quotes_csv, save_quotes_csv
from .config import apply_full_scale, build_plan, load_config
from .errors import ConfigError, LsmVarError
from .harness import (
    convergence_study,
    format_float,
    run_experiment,
    run_method_once,
    var_trend_study,
    write_manifest,
    write_rows_csv,
    write_summary_csv,
)

WORKERS_ENV = "LSMVAR_WORKERS"


def _workers(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _load(args):
    cfg = load_config(args.config)
    if args.full:
        cfg = apply_full_scale(cfg)
    if args.seed is not None:
        data = dict(cfg.data)
        data["seeds"] = {"base": int(args.seed)}
        cfg.data = data
    if args.out is not None:
        cfg.data["output"] = {"dir": args.out}
    return cfg


def _outdir(cfg) -> Path:
    out = Path(cfg.section("output")["dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_losses_csv(report, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path_index", "loss"])
        for i, loss in enumerate(report.losses):
            writer.writerow([i, format_float(loss)])


def _write_fits_csv(report, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "time_days", "feature", "coefficient", "active"])
        for diag in report.diagnostics:
            fit = diag.fit
            if fit is None:
                continue
            active = set(fit.active_set.tolist())
            writer.writerow([diag.stop_index, format_float(diag.time_days),
                             "intercept", format_float(fit.intercept), 1])
            names = fit.feature_names or [f"f{i}" for i in range(len(fit.coefficients))]
            for i, coef in enumerate(fit.coefficients):
                writer.writerow([
                    diag.stop_index, format_float(diag.time_days), names[i],
                    format_float(coef), int(i in active),
                ])


def cmd_var(args) -> int:
    cfg = _load(args)
    plan = build_plan(cfg)
    out = _outdir(cfg)
    method = plan.methods[0]
    report = run_method_once(plan, method, plan.base_seed, keep_fits=args.verbose_fits)
    rows = [{
        "method": method,
        "var_estimate": report.var_estimate,
        "alpha": report.alpha,
        "u0": report.u0,
        "n_paths": report.n_paths,
        "seed": report.seed,
        "time_seconds": report.timing_seconds,
    }]
    write_rows_csv(rows, out / "var.csv")
    if report.losses.size > 1:
        _write_losses_csv(report, out / "losses.csv")
    if args.verbose_fits and report.diagnostics:
        _write_fits_csv(report, out / "fits.csv")
    write_manifest(out / "manifest.json", cfg.normalized_text(), plan.base_seed,
                   {"command": "var", "defaults_applied": cfg.defaults_applied})
    print(f"var[{method}] = {report.var_estimate:.6f} "
          f"(alpha={report.alpha}, N={report.n_paths}) -> {out / 'var.csv'}")
    return 0


def cmd_compare(args) -> int:
    cfg = _load(args)
    plan = build_plan(cfg)
    out = _outdir(cfg)
    summaries = run_experiment(plan, workers=_workers(args))
    write_summary_csv(summaries, out / "compare.csv")
    write_manifest(out / "manifest.json", cfg.normalized_text(), plan.base_seed,
                   {"command": "compare", "defaults_applied": cfg.defaults_applied})
    for s in summaries:
        line = (f"{s.method:>14}: mean={format_float(s.mean)} median={format_float(s.median)} "
                f"std={format_float(s.std)} backtest={format_float(s.backtest_rate)} "
                f"time={format_float(s.seconds)}s")
        print(line if not s.error else f"{s.method:>14}: ERROR {s.error}")
    return 0


def cmd_trend(args) -> int:
    cfg = _load(args)
    plan = build_plan(cfg)
    out = _outdir(cfg)
    counts = [int(c) for c in cfg.section("estimation")["trend_counts"]]
    rows = var_trend_study(plan, counts)
    write_rows_csv(rows, out / "trend.csv")
    write_manifest(out / "manifest.json", cfg.normalized_text(), plan.base_seed,
                   {"command": "trend", "defaults_applied": cfg.defaults_applied})
    print(f"trend table ({len(rows)} rows) -> {out / 'trend.csv'}")
    return 0


def cmd_calibrate(args) -> int:
    quotes = load_quotes_csv(args.quotes)
    outdir = Path(args.out or "out")
    outdir.mkdir(parents=True, exist_ok=True)
    result = calibrate(quotes, max_iter=args.max_iter)
    params_yaml = {
        "model": {
            "kind": "lfm",
            "n_tenors": int(quotes.n_forwards),
            "tenor_spacing_years": float(quotes.tenors[1] - quotes.tenors[0]),
            "forwards": [float(x) for x in quotes.forwards],
            "gamma": [float(g) for g in result.gamma],
            "beta": float(result.beta),
            "psi": [float(x) for x in result.psi],
        }
    }
    import yaml

    (outdir / "calibrated_model.yaml").write_text(yaml.safe_dump(params_yaml, sort_keys=True))
    save_quotes_csv(quotes, outdir / "quotes_echo.csv")
    write_manifest(outdir / "manifest.json", Path(args.quotes).read_text(), 0, {
        "command": "calibrate",
        "converged": bool(result.converged),
        "iterations": int(result.iterations),
        "objective": float(result.objective),
        "psi_clipped": int(result.psi_clipped.sum()),
    })
    print(f"calibrate: converged={result.converged} iterations={result.iterations} "
          f"objective={result.objective:.3e} -> {outdir / 'calibrated_model.yaml'}")
    return 0


def cmd_converge(args) -> int:
    cfg = _load(args)
    plan = build_plan(cfg)
    out = _outdir(cfg)
    est = cfg.section("estimation")
    rows = convergence_study(
        plan, [int(n) for n in est["n_ladder"]], n_seeds=int(est["n_seeds"])
    )
    write_rows_csv(rows, out / "converge.csv")
    write_manifest(out / "manifest.json", cfg.normalized_text(), plan.base_seed,
                   {"command": "converge", "defaults_applied": cfg.defaults_applied})
    print(f"convergence table -> {out / 'converge.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lsmvar",
        description="Simulation-based VaR for nonlinear portfolios with early exercise",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", type=int, default=None, help="override seeds.base")
        p.add_argument("--out", default=None, help="override output.dir")
        p.add_argument("--full", action="store_true",
                       help="apply the paper-scale overrides from estimation.full")
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker processes (default: ${WORKERS_ENV} or all cores)")
        p.add_argument("--verbose-fits", action="store_true",
                       help="write per-step regression diagnostics CSV")

    for name, fn in (("var", cmd_var), ("compare", cmd_compare),
                     ("trend", cmd_trend), ("converge", cmd_converge)):
        p = sub.add_parser(name)
        common(p)
        p.set_defaults(fn=fn)
    p = sub.add_parser("calibrate")
    p.add_argument("quotes", help="CSV: tenor_years,forward,caplet_vol,swaption_vol")
    p.add_argument("--out", default=None)
    p.add_argument("--max-iter", type=int, default=20)
    p.set_defaults(fn=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LsmVarError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
