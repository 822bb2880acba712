"""Payoff and feature definitions."""

import numpy as np
import pytest

from lsmvar.instruments import BermudanPut, EuropeanCall, PayerSwaption, RainbowMinCall
from lsmvar.models import (
    DAYS_PER_YEAR,
    GbmParams,
    LfmParams,
    TimeGrid,
    atm_swap_rate,
    simulate_gbm,
    simulate_lfm,
    zcb_prices,
)
from lsmvar.numerics import CorrelationMatrix


def lfm_params(k=20):
    return LfmParams(
        tenors=np.arange(k + 1, dtype=float),
        forwards=np.full(k, 0.04),
        gamma=(0.1, 0.1, 1.0, 0.1),
        beta=0.05,
        psi=np.ones(k),
    )


def swaption_paths(k=20, stops=(2, 3, 4), n=200, seed=0):
    params = lfm_params(k)
    grid = TimeGrid(t1=10.0, stopping_times=tuple(DAYS_PER_YEAR * s for s in stops))
    return params, grid, simulate_lfm(params, grid, n, seed)


class TestRainbow:
    def test_terminal_payoff_and_exercise_match(self):
        params = GbmParams(
            spots=[50.0, 80.0], drifts=[0.0, 0.0], vols=[0.01, 0.02],
            corr=CorrelationMatrix.identity(2), rate=0.0001,
        )
        grid = TimeGrid(t1=5.0, stopping_times=(60.0,))
        paths = simulate_gbm(params, grid, 500, seed=3)
        inst = RainbowMinCall(strike=0.98)
        a = inst.exercise_value(paths, 0, grid)
        b = inst.terminal_payoff(paths.state(1), {"spots": params.spots})
        assert np.array_equal(a, b)
        manual = 100.0 * np.maximum((paths.state(1) / params.spots).min(axis=1) - 0.98, 0.0)
        assert np.allclose(a, manual)

    def test_regression_state_is_ratio(self):
        params = GbmParams(
            spots=[50.0, 80.0], drifts=[0.0, 0.0], vols=[0.01, 0.02],
            corr=CorrelationMatrix.identity(2), rate=0.0001,
        )
        grid = TimeGrid(t1=5.0, stopping_times=(60.0,))
        paths = simulate_gbm(params, grid, 50, seed=4)
        inst = RainbowMinCall(strike=1.0)
        assert np.allclose(inst.regression_state(paths, 0), paths.state(0) / params.spots)


class TestVanilla:
    def test_put_call_payoffs(self):
        params = GbmParams(spots=[100.0], drifts=[0.0], vols=[0.01],
                           corr=CorrelationMatrix.identity(1), rate=0.0)
        grid = TimeGrid(t1=5.0, stopping_times=(30.0, 60.0))
        paths = simulate_gbm(params, grid, 100, seed=5)
        put = BermudanPut(strike=100.0)
        call = EuropeanCall(strike=100.0)
        s = paths.state(1)[:, 0]
        assert np.allclose(put.exercise_value(paths, 0, grid), np.maximum(100.0 - s, 0))
        assert call.exercisable_stop_indices(grid) == [1]
        assert put.exercisable_stop_indices(grid) == [0, 1]


class TestSwaption:
    def test_exercise_value_against_direct_formula(self):
        params, grid, paths = swaption_paths()
        inst = PayerSwaption(strike=0.04, notional=1000.0, lockout_index=2)
        a = inst.exercise_value(paths, 0, grid)  # at T_2
        curve = paths.state(1)
        deltas = params.deltas
        # direct: sum_j delta_j P(T_2, T_j)(L_j - K) clipped
        value = np.zeros(curve.shape[0])
        disc = np.ones(curve.shape[0])
        for j in range(3, 21):
            disc = disc / (1.0 + deltas[j - 1] * curve[:, j - 1])
            value += deltas[j - 1] * disc * (curve[:, j - 1] - 0.04)
        expected = 1000.0 * np.maximum(value, 0.0)
        assert np.abs(a - expected).max() < 1e-10
        assert np.allclose(a, inst.value_from_curve(curve, deltas, 2))

    def test_final_tenor_value_zero(self):
        params, grid, paths = swaption_paths(k=4, stops=(2, 3, 4))
        inst = PayerSwaption(strike=0.04, notional=1000.0, lockout_index=2)
        assert np.all(inst.exercise_value(paths, 2, grid) == 0.0)

    def test_regression_state_dimensions(self):
        params, grid, paths = swaption_paths()
        inst = PayerSwaption(strike=0.04, lockout_index=2)
        assert inst.regression_state(paths, 0).shape[1] == 18   # at t1: L_3..L_20
        assert inst.regression_state(paths, 1).shape[1] == 18   # at T_2
        assert inst.regression_state(paths, 2).shape[1] == 17   # at T_3

    def test_slsm_features(self):
        params, grid, paths = swaption_paths()
        inst = PayerSwaption(strike=0.04, lockout_index=2)
        feats = inst.slsm_features(paths, 0)
        names = inst.slsm_feature_names(paths, 0)
        assert feats.shape[1] == len(names)
        assert names[:3] == ("swap", "swap^2", "swap^3")
        assert np.allclose(feats[:, 1], feats[:, 0] ** 2)
        live_bonds = np.count_nonzero(~np.isnan(zcb_prices(paths, 0)[0]))
        assert feats.shape[1] == 3 + live_bonds

    def test_atm_strike_prices_swap_at_zero(self):
        params = lfm_params()
        k_atm = atm_swap_rate(params, 2)
        inst = PayerSwaption(strike=k_atm, lockout_index=2)
        # at T0 the forward swap value under the initial curve is zero
        from lsmvar.models import initial_zcb

        p0 = initial_zcb(params)
        value = sum(
            params.deltas[j - 1] * p0[j] * (params.forwards[j - 1] - k_atm)
            for j in range(3, 21)
        )
        assert abs(value) < 1e-12
