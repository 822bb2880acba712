"""Backward induction with regression-estimated continuation values, horizon
valuation and quantile VaR extraction.

The pipeline follows the ranked-loss recipe: simulate to the horizon t1 under
the physical measure and beyond under a risk-neutral one; walk the stopping
times backwards regressing the discounted continuation value on basis
functions of the current cross-section (all paths enter the regression; an
in-the-money filter is available for comparison with the classical variant);
exercise where the immediate value meets or exceeds the fitted continuation;
finally regress the discounted first-stopping-time value onto the horizon
cross-section and read the VaR off the ranked losses U0 - U_t1.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .basis import BasisMode, BasisSpec, evaluate_design
from .errors import PipelineError, RegressionFailure
from .instruments import Instrument
from .models import PathSet, TimeGrid, simulate
from .numerics.quantiles import empirical_quantile_loss
from .numerics.rng import derive_seed
from .regression import RegressionFit, fit_lasso, fit_lasso_cv, fit_ols

# Regression engines, by wire name.
METHOD_OLS = "ols"
METHOD_LASSO = "lasso"
METHOD_LASSO_CV = "lasso-cv"


@dataclass
class StepDiagnostics:
    stop_index: int
    time_days: float
    n_features: int
    n_dropped: int
    lam: float
    n_active: int
    singular: bool
    kkt_gap: float
    exercised: int
    fit: RegressionFit | None = None


@dataclass
class ExerciseState:
    """Per-path optimal stopping index and realized cashflow after the sweep."""

    tau: np.ndarray       # stop indices, initialized to L-1 and only decreased
    cashflow: np.ndarray  # A(T_tau) per path
    diagnostics: list[StepDiagnostics] = field(default_factory=list)
    shared_lambda: float | None = None


@dataclass
class VaRReport:
    var_estimate: float
    alpha: float
    t1: float
    u0: float
    losses: np.ndarray
    method: str
    n_paths: int
    seed: int
    timing_seconds: float
    pipeline_hash: str = ""
    diagnostics: list[StepDiagnostics] = field(default_factory=list)
    extra: dict = field(default_factory=dict)


@dataclass
class EstimatorSettings:
    """Everything one ranked-loss VaR estimate needs."""

    model_params: object
    instrument: Instrument
    grid: TimeGrid
    n_paths: int
    alpha: float
    method: str = METHOD_LASSO_CV
    basis_mode: BasisMode = BasisMode.FULL_DEG3
    seed: int = 0
    u0: float | None = None
    u0_valuer: Callable[[], float] | None = None
    u0_source: str = "auto"   # config > closed_form (valuer) > high_n_lsm | self
    u0_n_paths: int = 50_000
    cv_folds: int = 20
    lam: float | None = None
    itm_only: bool = False
    cv_mode: str = "per_step"  # per_step | shared
    keep_fits: bool = False


def _basis_spec(mode: BasisMode, states: np.ndarray, slsm_names=None) -> BasisSpec:
    p = states.shape[1]
    return BasisSpec(mode=mode, p=p, feature_names=slsm_names)


def _regress(design, response, method, lam, cv_folds, cv_seed, shared_lambda):
    if method == METHOD_OLS:
        return fit_ols(design, response), shared_lambda
    if method == METHOD_LASSO:
        return fit_lasso(design, response, lam), shared_lambda
    if method == METHOD_LASSO_CV:
        if shared_lambda is not None:
            return fit_lasso(design, response, shared_lambda), shared_lambda
        fit, _ = fit_lasso_cv(design, response, folds=cv_folds, seed=cv_seed)
        return fit, fit.lam
    raise ValueError(f"unknown regression method '{method}'")


def _cross_section_design(instrument, paths, cs_index, mode):
    if mode is BasisMode.SLSM:
        feats = instrument.slsm_features(paths, cs_index)
        if feats is None:
            raise RegressionFailure(cs_index, ValueError(
                f"{instrument.name} provides no hand-picked feature set"))
        names = instrument.slsm_feature_names(paths, cs_index)
        spec = BasisSpec(mode=mode, p=feats.shape[1], feature_names=names)
        return evaluate_design(spec, None, standardize=True, slsm_features=feats)
    states = instrument.regression_state(paths, cs_index)
    spec = _basis_spec(mode, states)
    return evaluate_design(spec, states, standardize=True)


def backward_induction(
    paths: PathSet,
    instrument: Instrument,
    grid: TimeGrid,
    basis_mode: BasisMode,
    method: str,
    seed: int,
    cv_folds: int = 20,
    lam: float | None = None,
    itm_only: bool = False,
    cv_mode: str = "per_step",
    keep_fits: bool = False,
) -> ExerciseState:
    """Sweep stopping times backwards, updating per-path stopping decisions.

    Regressions run on all paths by default; with ``itm_only`` only paths with
    positive immediate exercise value enter the fit and face the exercise test
    (an empty in-the-money set simply skips the step).
    """
    n = paths.n_paths
    n_stops = grid.n_stops
    exercisable = set(instrument.exercisable_stop_indices(grid))
    state = ExerciseState(
        tau=np.full(n, n_stops - 1, dtype=np.int64),
        cashflow=instrument.exercise_value(paths, n_stops - 1, grid),
    )
    offset = grid.stop_cs_index(0)
    use_shared = cv_mode == "shared"
    for j in range(n_stops - 2, -1, -1):
        if j not in exercisable:
            continue
        cs_j = grid.stop_cs_index(j)
        a_j = instrument.exercise_value(paths, j, grid)
        cont = paths.discount_gather(cs_j, state.tau + offset) * state.cashflow
        rows = a_j > 0.0 if itm_only else np.ones(n, dtype=bool)
        if itm_only and rows.sum() < max(cv_folds, 10):
            continue
        try:
            design = _cross_section_design(instrument, paths, cs_j, basis_mode)
            if itm_only:
                sub = _subset_design(design, rows)
                fit, lam_used = _regress(
                    sub, cont[rows], method, lam, cv_folds,
                    derive_seed(seed, f"cv-step-{j}"),
                    state.shared_lambda if use_shared else None,
                )
                c_hat = np.full(n, np.inf)  # never exercise outside the fit
                c_hat[rows] = fit.fitted
            else:
                fit, lam_used = _regress(
                    design, cont, method, lam, cv_folds,
                    derive_seed(seed, f"cv-step-{j}"),
                    state.shared_lambda if use_shared else None,
                )
                c_hat = fit.fitted
        except Exception as exc:  # noqa: BLE001 - re-raised with step context
            if isinstance(exc, RegressionFailure):
                raise
            raise RegressionFailure(j, exc) from exc
        if use_shared and state.shared_lambda is None:
            state.shared_lambda = lam_used
        exercise = (a_j >= c_hat) & rows
        state.tau[exercise] = j
        state.cashflow[exercise] = a_j[exercise]
        state.diagnostics.append(StepDiagnostics(
            stop_index=j,
            time_days=float(grid.stopping_times[j]),
            n_features=design.n_raw,
            n_dropped=len(design.dropped_names),
            lam=fit.lam,
            n_active=fit.n_active,
            singular=fit.singular,
            kkt_gap=fit.kkt_gap,
            exercised=int(exercise.sum()),
            fit=fit if keep_fits else None,
        ))
    return state


def _subset_design(design, rows):
    from dataclasses import replace

    return replace(design, values=design.values[rows])


def value_at_horizon(
    paths: PathSet,
    exercise: ExerciseState,
    instrument: Instrument,
    grid: TimeGrid,
    basis_mode: BasisMode,
    method: str,
    seed: int,
    cv_folds: int = 20,
    lam: float | None = None,
    keep_fits: bool = False,
) -> tuple[np.ndarray, StepDiagnostics]:
    """Cross-sectional estimate of the portfolio value at the horizon t1.

    U_1 = D(T_1, T_tau) A(T_tau) per path; its t1-discount is regressed on the
    horizon cross-section and the fitted values returned.
    """
    offset = grid.stop_cs_index(0)
    u1 = paths.discount_gather(offset, exercise.tau + offset) * exercise.cashflow
    y = paths.discount(grid.t1_cs_index, offset) * u1
    try:
        design = _cross_section_design(instrument, paths, grid.t1_cs_index, basis_mode)
        fit, _ = _regress(
            design, y, method, lam, cv_folds,
            derive_seed(seed, "cv-horizon"),
            exercise.shared_lambda if method == METHOD_LASSO_CV else None,
        )
    except Exception as exc:  # noqa: BLE001
        if isinstance(exc, RegressionFailure):
            raise
        raise RegressionFailure("t1", exc) from exc
    diag = StepDiagnostics(
        stop_index=-1,
        time_days=float(grid.t1),
        n_features=design.n_raw,
        n_dropped=len(design.dropped_names),
        lam=fit.lam,
        n_active=fit.n_active,
        singular=fit.singular,
        kkt_gap=fit.kkt_gap,
        exercised=0,
        fit=fit if keep_fits else None,
    )
    return fit.fitted, diag


def lsm_price(
    paths: PathSet, exercise: ExerciseState, grid: TimeGrid
) -> float:
    """Plain simulation price at T0: mean pathwise-discounted exercise cashflow."""
    offset = grid.stop_cs_index(0)
    d0 = 1.0 / paths.growth[np.arange(paths.n_paths), exercise.tau + offset]
    return float((d0 * exercise.cashflow).mean())


def _resolve_u0(settings: EstimatorSettings) -> float:
    if settings.u0 is not None:
        return float(settings.u0)
    if settings.u0_valuer is not None:
        return float(settings.u0_valuer())
    # fall back to a fresh high-N run of the requested (or plainest) engine;
    # the initial value is a price, so the whole horizon simulates risk-neutral
    seed = derive_seed(settings.seed, "u0")
    pricing_params = settings.model_params
    if hasattr(pricing_params, "drifts"):
        from dataclasses import replace

        pricing_params = replace(
            pricing_params,
            drifts=np.full(pricing_params.n_assets, pricing_params.rate),
        )
    fresh = simulate(pricing_params, settings.grid, settings.u0_n_paths, seed)
    if settings.u0_source == "self":
        method, mode = settings.method, settings.basis_mode
    else:
        has_slsm = fresh.extra.get("model") == "lfm"
        mode = BasisMode.SLSM if has_slsm else BasisMode.FULL_DEG3
        method = METHOD_OLS
    ex = backward_induction(
        fresh, settings.instrument, settings.grid, mode, method, seed,
        cv_folds=settings.cv_folds, lam=settings.lam,
        itm_only=settings.itm_only, cv_mode=settings.cv_mode,
    )
    return lsm_price(fresh, ex, settings.grid)


def estimate_var(settings: EstimatorSettings) -> VaRReport:
    """Full pipeline: simulate, induct backwards, value at t1, rank the losses."""
    t_start = time.perf_counter()
    try:
        paths = simulate(
            settings.model_params, settings.grid, settings.n_paths, settings.seed
        )
    except Exception as exc:  # noqa: BLE001
        raise PipelineError("simulate", exc) from exc
    try:
        u0 = _resolve_u0(settings)
    except Exception as exc:  # noqa: BLE001
        raise PipelineError("u0", exc) from exc
    exercise = backward_induction(
        paths, settings.instrument, settings.grid, settings.basis_mode,
        settings.method, settings.seed, cv_folds=settings.cv_folds,
        lam=settings.lam, itm_only=settings.itm_only, cv_mode=settings.cv_mode,
        keep_fits=settings.keep_fits,
    )
    values_t1, horizon_diag = value_at_horizon(
        paths, exercise, settings.instrument, settings.grid,
        settings.basis_mode, settings.method, settings.seed,
        cv_folds=settings.cv_folds, lam=settings.lam, keep_fits=settings.keep_fits,
    )
    losses = u0 - values_t1
    try:
        var = empirical_quantile_loss(losses, settings.alpha)
    except Exception as exc:  # noqa: BLE001
        raise PipelineError("quantile", exc) from exc
    return VaRReport(
        var_estimate=var,
        alpha=settings.alpha,
        t1=settings.grid.t1,
        u0=u0,
        losses=losses,
        method=settings.method,
        n_paths=settings.n_paths,
        seed=settings.seed,
        timing_seconds=time.perf_counter() - t_start,
        pipeline_hash=paths.content_hash(),
        diagnostics=exercise.diagnostics + [horizon_diag],
        extra={"tau_counts": np.bincount(exercise.tau, minlength=settings.grid.n_stops)},
    )
