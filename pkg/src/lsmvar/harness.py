"""Experiment orchestration: repeated-seed VaR tables, back tests, trend and
convergence studies.

Repetition r of a plan always runs on seed base_seed + r; back-test
populations draw from a tag-derived seed guaranteed disjoint from every
repetition seed, so estimation and evaluation paths never share a stream.
Results are merged by repetition index, which keeps multi-process runs
byte-identical to serial ones.
"""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .basis import BasisMode
from .benchmarks import (
    OracleConfig,
    closed_form_valuer,
    delta_gamma_var,
    delta_normal_var,
    gbm_increment_moments,
    lfm_increment_moments,
    nested_oracle_var,
)
from .engine import (
    METHOD_LASSO_CV,
    METHOD_OLS,
    EstimatorSettings,
    VaRReport,
    backward_induction,
    estimate_var,
    lsm_price,
)
from .errors import ValuerFailure
from .instruments import Instrument, PayerSwaption, RainbowMinCall
from .models import GbmParams, LfmParams, TimeGrid, simulate
from .models.grid import DAYS_PER_YEAR
from .numerics.quantiles import empirical_quantile_loss
from .numerics.rng import derive_seed

# Named strategies: engine regression method + basis family.
METHOD_PRESETS: dict[str, tuple[str, BasisMode]] = {
    "llsm": (METHOD_LASSO_CV, BasisMode.FULL_DEG3),
    "lsm": (METHOD_OLS, BasisMode.FULL_DEG3),
    "glsm": (METHOD_OLS, BasisMode.GLSM),
    "slsm": (METHOD_OLS, BasisMode.SLSM),
}
GREEK_METHODS = ("delta_normal", "delta_gamma")
ORACLE_METHODS = ("nested_oracle", "true_oracle")


@dataclass
class ExperimentPlan:
    """One experiment: a model/instrument setup, methods to compare, seeds."""

    model_params: object
    instrument: Instrument
    grid: TimeGrid
    methods: list[str]
    repetitions: int
    base_seed: int
    n_paths: int
    alpha: float = 0.05
    u0: float | None = None
    u0_source: str = "auto"
    u0_n_paths: int = 50_000
    cv_folds: int = 20
    lam: float | None = None
    itm_only: bool = False
    cv_mode: str = "per_step"
    backtest_trials: int = 10_000
    oracle: OracleConfig | None = None
    bump_rel: float = 0.01

    def rep_seed(self, r: int) -> int:
        return self.base_seed + r

    def backtest_seed(self) -> int:
        seed = derive_seed(self.base_seed, "backtest")
        rep_seeds = {self.rep_seed(r) for r in range(self.repetitions)}
        assert seed not in rep_seeds, "back-test seed collides with a repetition seed"
        return seed


@dataclass
class BacktestResult:
    """Fraction of fresh realized losses exceeding the VaR estimate."""

    rate: float
    trials: int
    flags: np.ndarray


def backtest(var_estimate: float, realized_losses) -> BacktestResult:
    losses = np.asarray(realized_losses, dtype=float)
    flags = losses > var_estimate
    return BacktestResult(rate=float(flags.mean()), trials=losses.size, flags=flags)


@dataclass
class MethodSummary:
    method: str
    mean: float
    median: float
    std: float
    backtest_rate: float
    seconds: float
    repetitions: int
    var_estimates: np.ndarray = field(repr=False, default=None)
    error: str = ""


def _engine_settings(
    plan: ExperimentPlan, method: str, seed: int, keep_fits: bool = False
) -> EstimatorSettings:
    engine_method, mode = METHOD_PRESETS[method]
    u0_valuer = None
    if plan.u0 is None and plan.u0_source in ("auto", "closed_form"):
        valuer = closed_form_valuer(plan.instrument, plan.model_params, plan.grid)
        if valuer is not None:
            base = _base_state(plan)
            u0_valuer = lambda: float(np.atleast_1d(valuer(base[None, :], 0.0))[0])  # noqa: E731
    return EstimatorSettings(
        model_params=plan.model_params,
        instrument=plan.instrument,
        grid=plan.grid,
        n_paths=plan.n_paths,
        alpha=plan.alpha,
        method=engine_method,
        basis_mode=mode,
        seed=seed,
        u0=plan.u0,
        u0_valuer=u0_valuer,
        u0_source=plan.u0_source,
        u0_n_paths=plan.u0_n_paths,
        cv_folds=plan.cv_folds,
        lam=plan.lam,
        itm_only=plan.itm_only,
        cv_mode=plan.cv_mode,
        keep_fits=keep_fits,
    )


def _base_state(plan: ExperimentPlan) -> np.ndarray:
    """The T0 factor state the valuers see (ratios for the rainbow)."""
    if isinstance(plan.instrument, RainbowMinCall):
        return np.ones(plan.model_params.n_assets)
    if isinstance(plan.model_params, GbmParams):
        return plan.model_params.spots.copy()
    if isinstance(plan.model_params, LfmParams):
        lock = plan.instrument.lockout_index
        return plan.model_params.forwards[lock:].copy()
    raise ValuerFailure("no base state for this model")


def _lfm_bump_valuer(plan: ExperimentPlan, seed: int):
    """Bump-and-revalue pricing of a curve instrument at T0 by a fixed-seed
    regression run (common random numbers across bumps)."""
    params: LfmParams = plan.model_params
    lock = plan.instrument.lockout_index

    def value(state: np.ndarray) -> float:
        forwards = params.forwards.copy()
        forwards[lock:] = np.asarray(state, dtype=float)
        bumped = LfmParams(
            tenors=params.tenors, forwards=forwards, gamma=params.gamma,
            beta=params.beta, psi=params.psi,
        )
        paths = simulate(bumped, plan.grid, plan.u0_n_paths, seed)
        ex = backward_induction(
            paths, plan.instrument, plan.grid, BasisMode.SLSM, METHOD_OLS, seed,
        )
        return lsm_price(paths, ex, plan.grid)

    return value


def _greek_var(plan: ExperimentPlan, method: str, seed: int) -> VaRReport:
    base = _base_state(plan)
    if isinstance(plan.model_params, GbmParams):
        if isinstance(plan.instrument, RainbowMinCall):
            ratio_params = replace(plan.model_params, spots=np.ones(plan.model_params.n_assets))
            mean, cov = gbm_increment_moments(ratio_params, plan.grid.t1)
        else:
            mean, cov = gbm_increment_moments(plan.model_params, plan.grid.t1)
        valuer_t = closed_form_valuer(plan.instrument, plan.model_params, plan.grid)
        if valuer_t is None:
            raise ValuerFailure(f"no T0 valuer for {plan.instrument.name}")
        valuer = lambda s: float(np.atleast_1d(valuer_t(np.atleast_2d(s), 0.0))[0])  # noqa: E731
    elif isinstance(plan.model_params, LfmParams):
        lock = plan.instrument.lockout_index
        mean_full, cov_full = lfm_increment_moments(
            plan.model_params, plan.grid.t1 / DAYS_PER_YEAR
        )
        mean, cov = mean_full[lock:], cov_full[lock:, lock:]
        valuer = _lfm_bump_valuer(plan, derive_seed(seed, "bump"))
    else:
        raise ValuerFailure("no Greek machinery for this model")
    if method == "delta_normal":
        return delta_normal_var(valuer, base, mean, cov, plan.alpha, plan.bump_rel)
    return delta_gamma_var(
        valuer, base, mean, cov, plan.alpha, plan.bump_rel,
        seed=derive_seed(seed, "dg-draws"),
    )


def run_method_once(
    plan: ExperimentPlan, method: str, seed: int, keep_fits: bool = False
) -> VaRReport:
    """One VaR estimate of the named method, on the given seed."""
    if method in METHOD_PRESETS:
        return estimate_var(_engine_settings(plan, method, seed, keep_fits))
    if method in GREEK_METHODS:
        return _greek_var(plan, method, seed)
    if method in ORACLE_METHODS:
        oracle = plan.oracle or OracleConfig(n_outer=plan.n_paths, n_inner=10_000)
        mode = "closed_form" if method == "true_oracle" else "mc"
        return nested_oracle_var(
            replace(oracle, inner_mode=mode), plan.model_params,
            plan.instrument, plan.grid, plan.alpha, seed, u0=plan.u0,
        )
    raise ValueError(f"unknown method '{method}'")


def realized_loss_population(plan: ExperimentPlan) -> np.ndarray:
    """Fresh simulated horizon losses for back testing.

    Uses the closed-form revaluation when one exists; otherwise falls back to
    a regression revaluation (hand-picked features, least squares) of the same
    fresh population, i.e. back-testing against simulated prices.
    """
    seed = plan.backtest_seed()
    bt_plan = replace(plan, n_paths=plan.backtest_trials)
    valuer = closed_form_valuer(plan.instrument, plan.model_params, plan.grid)
    paths = simulate(plan.model_params, plan.grid, plan.backtest_trials, seed)
    u0 = _resolve_reference_u0(plan)
    if valuer is not None:
        cs = plan.grid.t1_cs_index
        states = (plan.instrument.regression_state(paths, cs)
                  if isinstance(plan.instrument, RainbowMinCall) else paths.state(cs))
        values = valuer(states, plan.grid.t1)
        return u0 - values
    settings = _engine_settings(bt_plan, "slsm" if _has_slsm(plan) else "lsm", seed)
    settings.u0 = u0
    report = estimate_var(settings)
    return report.losses


def _has_slsm(plan: ExperimentPlan) -> bool:
    return isinstance(plan.instrument, PayerSwaption)


def _resolve_reference_u0(plan: ExperimentPlan) -> float:
    if plan.u0 is not None:
        return plan.u0
    valuer = closed_form_valuer(plan.instrument, plan.model_params, plan.grid)
    if valuer is not None:
        return float(np.atleast_1d(valuer(_base_state(plan)[None, :], 0.0))[0])
    seed = derive_seed(plan.base_seed, "u0-reference")
    paths = simulate(plan.model_params, plan.grid, plan.u0_n_paths, seed)
    mode = BasisMode.SLSM if _has_slsm(plan) else BasisMode.FULL_DEG3
    ex = backward_induction(paths, plan.instrument, plan.grid, mode, METHOD_OLS, seed)
    return lsm_price(paths, ex, plan.grid)


def _run_task(args):
    plan, method, rep = args
    report = run_method_once(plan, method, plan.rep_seed(rep))
    return method, rep, report.var_estimate, report.timing_seconds


def run_experiment(plan: ExperimentPlan, workers: int = 1) -> list[MethodSummary]:
    """One summary row per method: mean/median/std of the VaR estimates over
    the repetitions, mean back-test exceedance, mean time per estimate.

    Oracle methods run once (single estimate, no dispersion), matching their
    role as benchmarks.  Method failures produce an error-tagged row and the
    run continues.
    """
    realized = realized_loss_population(plan) if plan.backtest_trials > 0 else None
    summaries = []
    for method in plan.methods:
        reps = 1 if method in ORACLE_METHODS else plan.repetitions
        tasks = [(plan, method, r) for r in range(reps)]
        estimates = np.full(reps, np.nan)
        seconds = np.zeros(reps)
        try:
            if workers > 1 and len(tasks) > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    for m, r, var, secs in pool.map(_run_task, tasks):
                        estimates[r] = var
                        seconds[r] = secs
            else:
                for task in tasks:
                    _, r, var, secs = _run_task(task)
                    estimates[r] = var
                    seconds[r] = secs
        except Exception as exc:  # noqa: BLE001 - partial failure keeps the table
            summaries.append(MethodSummary(
                method=method, mean=float("nan"), median=float("nan"),
                std=float("nan"), backtest_rate=float("nan"),
                seconds=float("nan"), repetitions=reps,
                var_estimates=estimates, error=f"{type(exc).__name__}: {exc}",
            ))
            continue
        if realized is not None:
            rates = [backtest(v, realized).rate for v in estimates]
            bt = float(np.mean(rates))
        else:
            bt = float("nan")
        summaries.append(MethodSummary(
            method=method,
            mean=float(np.mean(estimates)),
            median=float(np.median(estimates)),
            std=float(np.std(estimates, ddof=1)) if reps > 1 else 0.0,
            backtest_rate=bt,
            seconds=float(np.mean(seconds)),
            repetitions=reps,
            var_estimates=estimates,
        ))
    return summaries


def var_trend_study(
    plan: ExperimentPlan, stopping_time_counts: list[int]
) -> list[dict]:
    """VaR per (stopping-time count, method) for a curve instrument.

    Count c uses the first c exercisable tenor dates after the lock-out; the
    initial value is estimated by the same method as the horizon values
    (u0_source='self'), so each column is internally consistent.
    """
    params: LfmParams = plan.model_params
    lock = plan.instrument.lockout_index
    rows = []
    for count in stopping_time_counts:
        stops = tuple(
            params.tenors[lock + i] * DAYS_PER_YEAR for i in range(count)
        )
        grid = TimeGrid(t1=plan.grid.t1, stopping_times=stops, substep=plan.grid.substep)
        row = {"stopping_times": count}
        for method in plan.methods:
            sub = replace(plan, grid=grid, u0_source="self", backtest_trials=0)
            report = run_method_once(sub, method, plan.base_seed)
            row[method] = report.var_estimate
        rows.append(row)
    return rows


def convergence_study(
    plan: ExperimentPlan,
    n_ladder: list[int],
    n_seeds: int = 10,
    reference_var: float | None = None,
) -> list[dict]:
    """Inter-seed dispersion and error of each method across a path-count ladder.

    Emits per (N, method): mean estimate, inter-seed standard deviation,
    mean absolute error against the reference (when given), and the fitted
    log-log slope of the dispersion in N (appended per method as N='slope').
    """
    rows = []
    by_method: dict[str, list[float]] = {m: [] for m in plan.methods}
    for n in n_ladder:
        row = {"n_paths": n}
        for method in plan.methods:
            estimates = []
            for s in range(n_seeds):
                sub = replace(plan, n_paths=n, backtest_trials=0)
                report = run_method_once(sub, method, derive_seed(plan.base_seed, f"conv-{n}-{s}"))
                estimates.append(report.var_estimate)
            estimates = np.array(estimates)
            row[f"{method}_mean"] = float(estimates.mean())
            row[f"{method}_std"] = float(estimates.std(ddof=1))
            by_method[method].append(float(estimates.std(ddof=1)))
            if reference_var is not None:
                row[f"{method}_abs_err"] = float(np.abs(estimates - reference_var).mean())
        rows.append(row)
    slopes = {"n_paths": "slope"}
    logn = np.log(np.asarray(n_ladder, dtype=float))
    for method in plan.methods:
        stds = np.log(np.maximum(by_method[method], 1e-300))
        slope = float(np.polyfit(logn, stds, 1)[0])
        slopes[f"{method}_std"] = slope
    rows.append(slopes)
    return rows


# ---------------------------------------------------------------------------
# deterministic CSV / manifest output

def format_float(x) -> str:
    if isinstance(x, str):
        return x
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ""
    return f"{float(x):.12g}"


def write_summary_csv(summaries: list[MethodSummary], path: str | Path) -> None:
    """Table with the comparison schema: Mean, Median, Std, Back Testing, Time."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "mean", "median", "std", "back_testing", "time_seconds", "error"]
        )
        for s in summaries:
            writer.writerow([
                s.method, format_float(s.mean), format_float(s.median),
                format_float(s.std), format_float(s.backtest_rate),
                format_float(s.seconds), s.error,
            ])


def write_rows_csv(rows: list[dict], path: str | Path) -> None:
    keys: list[str] = []
    for row in rows:
        for k in row:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys)
        for row in rows:
            writer.writerow([format_float(row.get(k, "")) for k in keys])


def write_manifest(path: str | Path, config_text: str, base_seed: int, notes: dict) -> None:
    """Provenance file: config digest, seeds, versions, echoed defaults."""
    manifest = {
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "base_seed": base_seed,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "written_at": "deterministic",  # no wall clock: outputs must be reproducible
        "notes": notes,
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def high_dim_contrast(
    plan: ExperimentPlan,
    n_paths: int,
    n_reps: int,
    reference_var: float,
) -> dict:
    """Paired-seed contrast of the penalized and plain engines when the basis
    is large relative to the path count; also probes the singularity flag when
    the basis exceeds the path count."""
    llsm_err = []
    lsm_err = []
    for r in range(n_reps):
        seed = derive_seed(plan.base_seed, f"contrast-{r}")
        sub = replace(plan, n_paths=n_paths, backtest_trials=0)
        rep_llsm = run_method_once(sub, "llsm", seed)
        rep_lsm = run_method_once(sub, "lsm", seed)
        llsm_err.append(abs(rep_llsm.var_estimate - reference_var))
        lsm_err.append(abs(rep_lsm.var_estimate - reference_var))
    wins = sum(1 for a, b in zip(llsm_err, lsm_err) if a < b)
    return {
        "n_paths": n_paths,
        "reps": n_reps,
        "llsm_mean_abs_err": float(np.mean(llsm_err)),
        "lsm_mean_abs_err": float(np.mean(lsm_err)),
        "llsm_win_fraction": wins / n_reps,
    }


