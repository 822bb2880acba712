"""Payoff definitions: what can be exercised when, and the regression state.

An instrument maps simulated paths to immediate exercise values A(T_j) at its
exercisable stopping times, and exposes the risk-factor cross-section used in
continuation regressions.  Instruments with engineered (hand-picked) features
also provide ``slsm_features``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch
from .models.grid import DAYS_PER_YEAR, PathSet, TimeGrid
from .models.lfm import zcb_prices


class Instrument:
    name: str = "instrument"

    def exercisable_stop_indices(self, grid: TimeGrid) -> list[int]:
        raise NotImplementedError

    def exercise_value(self, paths: PathSet, stop_j: int, grid: TimeGrid) -> np.ndarray:
        raise NotImplementedError

    def regression_state(self, paths: PathSet, cs_index: int) -> np.ndarray:
        raise NotImplementedError

    def terminal_payoff(self, states: np.ndarray, extra: dict) -> np.ndarray:
        """Payoff from raw terminal states (used by inner revaluation)."""
        raise NotImplementedError

    def slsm_features(self, paths: PathSet, cs_index: int) -> np.ndarray | None:
        return None

    def slsm_feature_names(self, paths: PathSet, cs_index: int) -> tuple[str, ...] | None:
        return None


@dataclass
class EuropeanCall(Instrument):
    strike: float
    name: str = field(default="european_call", init=False)

    def exercisable_stop_indices(self, grid):
        return [grid.n_stops - 1]

    def exercise_value(self, paths, stop_j, grid):
        s = paths.state(grid.stop_cs_index(stop_j))[:, 0]
        return np.maximum(s - self.strike, 0.0)

    def regression_state(self, paths, cs_index):
        return paths.state(cs_index)

    def terminal_payoff(self, states, extra):
        return np.maximum(np.atleast_2d(states)[:, 0] - self.strike, 0.0)


@dataclass
class BermudanPut(Instrument):
    strike: float
    name: str = field(default="bermudan_put", init=False)

    def exercisable_stop_indices(self, grid):
        return list(range(grid.n_stops))

    def exercise_value(self, paths, stop_j, grid):
        s = paths.state(grid.stop_cs_index(stop_j))[:, 0]
        return np.maximum(self.strike - s, 0.0)

    def regression_state(self, paths, cs_index):
        return paths.state(cs_index)

    def terminal_payoff(self, states, extra):
        return np.maximum(self.strike - np.atleast_2d(states)[:, 0], 0.0)


@dataclass
class RainbowMinCall(Instrument):
    """Call on the minimum performance ratio of several assets, European."""

    strike: float
    scale: float = 100.0
    name: str = field(default="rainbow_min_call", init=False)

    def exercisable_stop_indices(self, grid):
        return [grid.n_stops - 1]

    def ratios(self, paths: PathSet, cs_index: int) -> np.ndarray:
        spots = paths.extra["spots"]
        return paths.state(cs_index) / spots

    def exercise_value(self, paths, stop_j, grid):
        ratios = self.ratios(paths, grid.stop_cs_index(stop_j))
        return self.scale * np.maximum(ratios.min(axis=1) - self.strike, 0.0)

    def regression_state(self, paths, cs_index):
        return self.ratios(paths, cs_index)

    def terminal_payoff(self, states, extra):
        ratios = np.atleast_2d(states) / extra["spots"]
        return self.scale * np.maximum(ratios.min(axis=1) - self.strike, 0.0)


@dataclass
class PayerSwaption(Instrument):
    """Payer swaption on a forward swap ending at the final tenor date.

    ``lockout_index`` is the first tenor index at which exercise is allowed;
    on exercise at T_i the holder enters the swap paying fixed over
    [T_i, T_K].  A European contract has a single exercisable date (the
    lock-out end); a Bermudan one exercises at any stopping time on the grid.
    """

    strike: float
    notional: float = 1000.0
    lockout_index: int = 2
    name: str = field(default="payer_swaption", init=False)

    def _tenor_index(self, paths: PathSet, cs_index: int) -> int:
        tenors = paths.extra["tenors_years"]
        t = paths.times[cs_index] / DAYS_PER_YEAR
        hit = np.nonzero(np.abs(tenors - t) <= 1e-9)[0]
        if hit.size == 0:
            raise ShapeMismatch(f"cross-section at {t}y is not a tenor date")
        return int(hit[0])

    def value_from_curve(self, curve: np.ndarray, deltas: np.ndarray, tenor_index: int) -> np.ndarray:
        """Exercise value at tenor date T_i from a raw forward-curve array."""
        curve = np.atleast_2d(curve)
        k_fwd = curve.shape[1]
        disc = np.ones(curve.shape[0])
        value = np.zeros(curve.shape[0])
        for j in range(tenor_index + 1, k_fwd + 1):
            disc = disc / (1.0 + deltas[j - 1] * curve[:, j - 1])
            value += deltas[j - 1] * disc * (curve[:, j - 1] - self.strike)
        return self.notional * np.maximum(value, 0.0)

    def exercisable_stop_indices(self, grid):
        return list(range(grid.n_stops))

    def swap_value(self, paths: PathSet, cs_index: int, start_tenor: int) -> np.ndarray:
        """Value of paying fixed over [T_start, T_K], per unit notional."""
        p = zcb_prices(paths, cs_index)
        deltas = paths.extra["deltas"]
        curve = paths.state(cs_index)
        k_fwd = curve.shape[1]
        value = np.zeros(paths.n_paths)
        for j in range(start_tenor + 1, k_fwd + 1):
            value += deltas[j - 1] * p[:, j] * (curve[:, j - 1] - self.strike)
        return value

    def exercise_value(self, paths, stop_j, grid):
        cs = grid.stop_cs_index(stop_j)
        i = self._tenor_index(paths, cs)
        return self.notional * np.maximum(self.swap_value(paths, cs, i), 0.0)

    def regression_state(self, paths, cs_index):
        """Forwards feeding the remaining swap: L_{i+1}..L_K at a tenor date,
        or the lock-out-relevant set L_{lock+1}..L_K at the horizon."""
        tenors = paths.extra["tenors_years"]
        t = paths.times[cs_index] / DAYS_PER_YEAR
        on = np.nonzero(np.abs(tenors - t) <= 1e-9)[0]
        start = int(on[0]) if on.size else self.lockout_index
        start = max(start, self.lockout_index)
        return paths.state(cs_index)[:, start:]

    def slsm_features(self, paths, cs_index):
        """Hand-picked features: swap value and its powers, plus live bond prices."""
        tenors = paths.extra["tenors_years"]
        t = paths.times[cs_index] / DAYS_PER_YEAR
        on = np.nonzero(np.abs(tenors - t) <= 1e-9)[0]
        start = max(int(on[0]) if on.size else self.lockout_index, self.lockout_index)
        v = self.notional * self.swap_value(paths, cs_index, start)
        p = zcb_prices(paths, cs_index)
        live = ~np.isnan(p[0])
        return np.column_stack([v, v**2, v**3, p[:, live]])

    def slsm_feature_names(self, paths, cs_index):
        tenors = paths.extra["tenors_years"]
        p = zcb_prices(paths, cs_index)
        live = np.nonzero(~np.isnan(p[0]))[0]
        return ("swap", "swap^2", "swap^3", *(f"zcb_T{int(round(tenors[j]))}" for j in live))
