"""Config-file schema: validation, normalization and experiment assembly.

Configs are YAML with five sections (model, instrument, grid, method,
estimation) plus seeds and output.  Validation is strict: unknown keys are
rejected with their full path, and every default that fills in a value the
config left out is echoed so it can be written to the run manifest.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .basis import BasisMode
from .benchmarks import OracleConfig
from .errors import ConfigError
from .harness import GREEK_METHODS, METHOD_PRESETS, ORACLE_METHODS, ExperimentPlan
from .instruments import BermudanPut, EuropeanCall, PayerSwaption, RainbowMinCall
from .models import GbmParams, LfmParams, TimeGrid, atm_swap_rate
from .models.grid import DAYS_PER_YEAR
from .numerics.linalg import CorrelationMatrix

KNOWN_METHODS = tuple(METHOD_PRESETS) + GREEK_METHODS + ORACLE_METHODS

# section -> key -> (required, default)
_SCHEMA: dict[str, dict[str, tuple[bool, object]]] = {
    "model": {
        "kind": (True, None),
        "spots": (False, None),
        "drifts_per_day": (False, None),
        "vols_per_day": (False, None),
        "correlation": (False, None),
        "rate_per_year": (False, 0.02),
        "n_tenors": (False, 20),
        "tenor_spacing_years": (False, 1.0),
        "forwards": (False, 0.04),
        "gamma": (False, [0.1, 0.1, 1.0, 0.1]),
        "beta": (False, 0.05),
        "psi": (False, 1.0),
    },
    "instrument": {
        "kind": (True, None),
        "strike": (False, "atm"),
        "scale": (False, 100.0),
        "notional": (False, 1000.0),
        "lockout_years": (False, 2),
    },
    "grid": {
        "t1_days": (False, 10.0),
        "maturity_days": (False, 270.0),
        "n_exercise_dates": (False, None),
        "stopping_days": (False, None),
        "substep_days": (False, None),
    },
    "method": {
        "name": (False, "llsm"),
        "compare": (False, None),
        "itm_only": (False, False),
        "cv_mode": (False, "per_step"),
    },
    "estimation": {
        "n_paths": (False, 5000),
        "alpha": (False, 0.05),
        "cv_folds": (False, 20),
        "lambda": (False, None),
        "u0": (False, None),
        "u0_source": (False, "auto"),
        "u0_n_paths": (False, 50000),
        "repetitions": (False, 50),
        "backtest_trials": (False, 10000),
        "outer_paths": (False, None),
        "inner_paths": (False, 50000),
        "trend_counts": (False, [1, 4, 6, 8, 10, 12, 14, 16, 18]),
        "n_ladder": (False, [1000, 10000, 100000]),
        "n_seeds": (False, 10),
        "full": (False, None),
    },
    "seeds": {"base": (False, 20240613)},
    "output": {"dir": (False, "out")},
}


@dataclass
class RunConfig:
    """Validated, normalized configuration plus the defaults that filled it."""

    data: dict
    defaults_applied: list[str] = field(default_factory=list)
    source_text: str = ""

    def section(self, name: str) -> dict:
        return self.data[name]

    def normalized_text(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True)


def _validate_section(name: str, raw: dict, defaults_applied: list[str]) -> dict:
    schema = _SCHEMA[name]
    out = {}
    for key in raw:
        if key not in schema:
            raise ConfigError(f"{name}.{key}", "unknown key")
    for key, (required, default) in schema.items():
        if key in raw and raw[key] is not None:
            out[key] = raw[key]
        elif required:
            raise ConfigError(f"{name}.{key}", "required field missing")
        else:
            out[key] = default
            if default is not None:
                defaults_applied.append(f"{name}.{key}={default}")
    return out


def validate_config(raw: dict, source_text: str = "") -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    for key in raw:
        if key not in _SCHEMA:
            raise ConfigError(key, "unknown section")
    defaults: list[str] = []
    data = {}
    for name in _SCHEMA:
        section = raw.get(name, {})
        if section is None:
            section = {}
        if not isinstance(section, dict):
            raise ConfigError(name, "section must be a mapping")
        data[name] = _validate_section(name, section, defaults)
    cfg = RunConfig(data=data, defaults_applied=defaults, source_text=source_text)
    _check_semantics(cfg)
    return cfg


def _check_semantics(cfg: RunConfig) -> None:
    model = cfg.section("model")
    if model["kind"] not in ("gbm", "lfm"):
        raise ConfigError("model.kind", f"unknown model '{model['kind']}'")
    inst = cfg.section("instrument")
    known = ("european_call", "bermudan_put", "rainbow_min_call",
             "european_swaption", "bermudan_swaption")
    if inst["kind"] not in known:
        raise ConfigError("instrument.kind", f"unknown instrument '{inst['kind']}'")
    if inst["kind"].endswith("swaption") and model["kind"] != "lfm":
        raise ConfigError("instrument.kind", "swaptions require the lfm model")
    if inst["kind"] in ("european_call", "bermudan_put", "rainbow_min_call") \
            and model["kind"] != "gbm":
        raise ConfigError("instrument.kind", f"{inst['kind']} requires the gbm model")
    method = cfg.section("method")
    if method["name"] not in KNOWN_METHODS:
        raise ConfigError("method.name", f"unknown method '{method['name']}'")
    for m in method["compare"] or []:
        if m not in KNOWN_METHODS:
            raise ConfigError("method.compare", f"unknown method '{m}'")
    est = cfg.section("estimation")
    if not (isinstance(est["alpha"], (int, float)) and 0 < est["alpha"] < 1):
        raise ConfigError("estimation.alpha", "alpha must lie in (0, 1)")
    if model["kind"] == "gbm":
        for key in ("spots", "drifts_per_day", "vols_per_day"):
            if model[key] is None:
                raise ConfigError(f"model.{key}", "required for the gbm model")


def load_config(path: str | Path) -> RunConfig:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from exc
    return validate_config(raw, source_text=text)


def apply_full_scale(cfg: RunConfig) -> RunConfig:
    """Swap in the paper-scale overrides listed under estimation.full."""
    full = cfg.section("estimation").get("full")
    if not full:
        return cfg
    est = dict(cfg.section("estimation"))
    for key, value in full.items():
        if key not in _SCHEMA["estimation"]:
            raise ConfigError(f"estimation.full.{key}", "unknown key")
        est[key] = value
    data = dict(cfg.data)
    data["estimation"] = est
    return RunConfig(data=data, defaults_applied=cfg.defaults_applied,
                     source_text=cfg.source_text)


def build_model(cfg: RunConfig):
    model = cfg.section("model")
    if model["kind"] == "gbm":
        spots = np.asarray(model["spots"], dtype=float)
        corr_spec = model["correlation"]
        if corr_spec is None:
            corr = CorrelationMatrix.identity(spots.size)
        elif isinstance(corr_spec, (int, float)):
            corr = CorrelationMatrix.from_offdiagonal(spots.size, float(corr_spec))
        else:
            corr = CorrelationMatrix(np.asarray(corr_spec, dtype=float))
        return GbmParams(
            spots=spots,
            drifts=np.asarray(model["drifts_per_day"], dtype=float),
            vols=np.asarray(model["vols_per_day"], dtype=float),
            corr=corr,
            rate=float(model["rate_per_year"]) / DAYS_PER_YEAR,
        )
    k = int(model["n_tenors"])
    spacing = float(model["tenor_spacing_years"])
    tenors = spacing * np.arange(k + 1, dtype=float)
    fwd = model["forwards"]
    forwards = np.full(k, float(fwd)) if isinstance(fwd, (int, float)) \
        else np.asarray(fwd, dtype=float)
    psi = model["psi"]
    psi_arr = np.full(k, float(psi)) if isinstance(psi, (int, float)) \
        else np.asarray(psi, dtype=float)
    return LfmParams(
        tenors=tenors, forwards=forwards,
        gamma=tuple(float(g) for g in model["gamma"]),
        beta=float(model["beta"]), psi=psi_arr,
    )


def build_instrument(cfg: RunConfig, model_params):
    inst = cfg.section("instrument")
    kind = inst["kind"]
    strike = inst["strike"]
    if kind == "rainbow_min_call":
        if strike == "atm":
            from .benchmarks import atm_forward_min_strike

            maturity = cfg.section("grid")["maturity_days"]
            stops = cfg.section("grid")["stopping_days"]
            if stops:
                maturity = stops[-1]
            k = atm_forward_min_strike(model_params, float(maturity))
        else:
            k = float(strike)
        return RainbowMinCall(strike=k, scale=float(inst["scale"]))
    if kind == "european_call":
        k = float(model_params.spots[0]) if strike == "atm" else float(strike)
        return EuropeanCall(strike=k)
    if kind == "bermudan_put":
        k = float(model_params.spots[0]) if strike == "atm" else float(strike)
        return BermudanPut(strike=k)
    lock_years = float(inst["lockout_years"])
    spacing = float(cfg.section("model")["tenor_spacing_years"])
    lock_index = int(round(lock_years / spacing))
    if strike == "atm":
        k = atm_swap_rate(model_params, lock_index)
    else:
        k = float(strike)
    return PayerSwaption(strike=k, notional=float(inst["notional"]),
                         lockout_index=lock_index)


def build_grid(cfg: RunConfig, model_params, instrument) -> TimeGrid:
    grid = cfg.section("grid")
    t1 = float(grid["t1_days"])
    substep = grid["substep_days"]
    substep = None if substep is None else float(substep)
    if grid["stopping_days"] is not None:
        return TimeGrid(t1=t1, stopping_times=tuple(float(t) for t in grid["stopping_days"]),
                        substep=substep)
    kind = cfg.section("instrument")["kind"]
    if kind in ("european_call", "rainbow_min_call"):
        return TimeGrid(t1=t1, stopping_times=(float(grid["maturity_days"]),), substep=substep)
    if kind == "bermudan_put":
        n_ex = int(grid["n_exercise_dates"] or 3)
        maturity = float(grid["maturity_days"])
        stops = tuple(maturity * (j + 1) / n_ex for j in range(n_ex))
        return TimeGrid(t1=t1, stopping_times=stops, substep=substep)
    # swaptions exercise on tenor dates from the lock-out
    lock = instrument.lockout_index
    tenors_days = model_params.tenors * DAYS_PER_YEAR
    if kind == "european_swaption":
        stops = (float(tenors_days[lock]),)
    else:
        n_ex = grid["n_exercise_dates"]
        last = model_params.n_forwards - 1  # final exercisable tenor index
        count = (last - lock + 1) if n_ex is None else int(n_ex)
        stops = tuple(float(tenors_days[lock + i]) for i in range(count))
    return TimeGrid(t1=t1, stopping_times=stops, substep=substep)


def build_plan(cfg: RunConfig, methods: list[str] | None = None) -> ExperimentPlan:
    model_params = build_model(cfg)
    instrument = build_instrument(cfg, model_params)
    grid = build_grid(cfg, model_params, instrument)
    est = cfg.section("estimation")
    method = cfg.section("method")
    oracle = None
    outer = est["outer_paths"] or est["n_paths"]
    if est["inner_paths"]:
        oracle = OracleConfig(n_outer=int(outer), n_inner=int(est["inner_paths"]))
    return ExperimentPlan(
        model_params=model_params,
        instrument=instrument,
        grid=grid,
        methods=methods or method["compare"] or [method["name"]],
        repetitions=int(est["repetitions"]),
        base_seed=int(cfg.section("seeds")["base"]),
        n_paths=int(est["n_paths"]),
        alpha=float(est["alpha"]),
        u0=None if est["u0"] is None else float(est["u0"]),
        u0_source=est["u0_source"],
        u0_n_paths=int(est["u0_n_paths"]),
        cv_folds=int(est["cv_folds"]),
        lam=None if est["lambda"] is None else float(est["lambda"]),
        itm_only=bool(method["itm_only"]),
        cv_mode=method["cv_mode"],
        backtest_trials=int(est["backtest_trials"]),
        oracle=oracle,
    )


def basis_mode_for(method_name: str) -> BasisMode:
    return METHOD_PRESETS[method_name][1]
