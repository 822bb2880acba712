"""Market models simulated on the stopping-time grid with a measure switch."""

from .gbm import GbmParams, simulate_gbm
from .grid import DAYS_PER_YEAR, PathSet, TimeGrid
from .lfm import (
    LfmParams,
    atm_swap_rate,
    hump,
    initial_zcb,
    lfm_correlation,
    lfm_inst_vol,
    simulate_lfm,
    zcb_prices,
)


def simulate(params, grid: TimeGrid, n_paths: int, seed: int) -> PathSet:
    """Dispatch simulation on the parameter type."""
    if isinstance(params, GbmParams):
        return simulate_gbm(params, grid, n_paths, seed)
    if isinstance(params, LfmParams):
        return simulate_lfm(params, grid, n_paths, seed)
    raise TypeError(f"no simulator for {type(params).__name__}")

__all__ = [
    "GbmParams",
    "simulate",
    "simulate_gbm",
    "DAYS_PER_YEAR",
    "PathSet",
    "TimeGrid",
    "LfmParams",
    "atm_swap_rate",
    "hump",
    "initial_zcb",
    "lfm_correlation",
    "lfm_inst_vol",
    "simulate_lfm",
    "zcb_prices",
]
