"""Backward induction, horizon valuation, VaR pipeline."""

import numpy as np
import pytest

from lsmvar.basis import BasisMode
from lsmvar.benchmarks import bs_call
from lsmvar.engine import (
    EstimatorSettings,
    backward_induction,
    estimate_var,
    lsm_price,
    value_at_horizon,
)
from lsmvar.instruments import BermudanPut, EuropeanCall
from lsmvar.models import GbmParams, TimeGrid, simulate_gbm
from lsmvar.numerics import CorrelationMatrix, empirical_quantile_loss

from oracles import binomial_bermudan_put

RATE = 0.0001
VOL = 0.012


def gbm(mu=0.0002, sigma=VOL, spot=100.0, rate=RATE):
    return GbmParams(spots=[spot], drifts=[mu], vols=[sigma],
                     corr=CorrelationMatrix.identity(1), rate=rate)


def put_setup(n_paths=30_000, seed=42, n_ex=3, maturity=180.0):
    params = gbm()
    stops = tuple(maturity * (j + 1) / n_ex for j in range(n_ex))
    grid = TimeGrid(t1=10.0, stopping_times=stops)
    instrument = BermudanPut(strike=102.0)
    paths = simulate_gbm(params, grid, n_paths, seed)
    return params, grid, instrument, paths


class TestBackwardInduction:
    def test_european_no_regressions(self):
        params = gbm()
        grid = TimeGrid(t1=10.0, stopping_times=(90.0,))
        paths = simulate_gbm(params, grid, 5_000, seed=1)
        inst = EuropeanCall(strike=100.0)
        state = backward_induction(paths, inst, grid, BasisMode.FULL_DEG3, "ols", 1)
        assert np.all(state.tau == 0)
        assert state.diagnostics == []
        assert np.array_equal(state.cashflow, inst.exercise_value(paths, 0, grid))

    def test_zero_payoff_before_maturity_never_exercises_early(self):
        class LastOnlyPayoff(BermudanPut):
            def exercise_value(self, paths, stop_j, grid):
                base = super().exercise_value(paths, stop_j, grid)
                return base if stop_j == grid.n_stops - 1 else np.zeros_like(base)

        params, grid, _, paths = put_setup(n_paths=4_000)
        inst = LastOnlyPayoff(strike=102.0)
        state = backward_induction(paths, inst, grid, BasisMode.FULL_DEG3, "ols", 3)
        assert np.all(state.tau == grid.n_stops - 1)

    def test_tau_monotone_and_cashflow_consistent(self):
        params, grid, inst, paths = put_setup(n_paths=8_000)
        state = backward_induction(paths, inst, grid, BasisMode.FULL_DEG3, "ols", 5)
        assert state.tau.min() >= 0 and state.tau.max() <= grid.n_stops - 1
        for j in range(grid.n_stops):
            sel = state.tau == j
            if sel.any():
                a_j = inst.exercise_value(paths, j, grid)
                assert np.array_equal(state.cashflow[sel], a_j[sel])

    def test_lattice_oracle_bermudan_put(self):
        # classical in-the-money regressions: the all-paths cubic biases the
        # exercise boundary on vanilla puts
        params, grid, inst, paths = put_setup(n_paths=100_000, seed=7)
        reference = binomial_bermudan_put(
            100.0, 102.0, VOL, RATE, 180.0, list(grid.stopping_times), n_steps=2000
        )
        for method in ("ols", "lasso-cv"):
            state = backward_induction(
                paths, inst, grid, BasisMode.FULL_DEG3, method, 7, cv_folds=10,
                itm_only=True,
            )
            price = lsm_price(paths, state, grid)
            assert abs(price - reference) / reference < 0.01, (method, price, reference)

    def test_itm_only_variant_runs(self):
        params, grid, inst, paths = put_setup(n_paths=6_000)
        state = backward_induction(
            paths, inst, grid, BasisMode.FULL_DEG3, "ols", 5, itm_only=True
        )
        assert state.tau.shape == (6_000,)


class TestValueAtHorizon:
    def test_deterministic_world(self):
        params = GbmParams(spots=[100.0], drifts=[0.0], vols=[0.0],
                           corr=CorrelationMatrix.identity(1), rate=0.0)
        grid = TimeGrid(t1=10.0, stopping_times=(90.0,))
        paths = simulate_gbm(params, grid, 64, seed=2)
        inst = EuropeanCall(strike=90.0)
        state = backward_induction(paths, inst, grid, BasisMode.FULL_DEG3, "ols", 2)
        values, _ = value_at_horizon(paths, state, inst, grid, BasisMode.FULL_DEG3, "ols", 2)
        assert np.abs(values - 10.0).max() < 1e-8  # flat discounting, payoff 10

    def test_european_call_mean_matches_closed_form(self):
        params = gbm(mu=RATE)  # physical = risk neutral keeps T0 discounting exact
        grid = TimeGrid(t1=10.0, stopping_times=(90.0,))
        paths = simulate_gbm(params, grid, 200_000, seed=3)
        inst = EuropeanCall(strike=100.0)
        state = backward_induction(paths, inst, grid, BasisMode.FULL_DEG3, "ols", 3)
        values, _ = value_at_horizon(paths, state, inst, grid, BasisMode.FULL_DEG3, "ols", 3)
        mean_t0 = float((paths.discount_from_t0(0) * values).mean())
        reference = bs_call(100.0, 100.0, VOL, RATE, 90.0)
        payoff = paths.discount_from_t0(1) * state.cashflow
        se = payoff.std() / np.sqrt(payoff.size)
        assert abs(mean_t0 - reference) < 3 * se

    def test_lasso_vs_ols_agree_on_easy_case(self):
        params, grid, inst, paths = put_setup(n_paths=20_000)
        state = backward_induction(paths, inst, grid, BasisMode.FULL_DEG3, "ols", 4)
        v_ols, _ = value_at_horizon(paths, state, inst, grid, BasisMode.FULL_DEG3, "ols", 4)
        v_lasso, _ = value_at_horizon(
            paths, state, inst, grid, BasisMode.FULL_DEG3, "lasso-cv", 4, cv_folds=10
        )
        se = v_ols.std() / np.sqrt(v_ols.size)
        assert abs(v_ols.mean() - v_lasso.mean()) < 2 * se


class TestEstimateVar:
    def settings(self, **kw):
        params = gbm()
        grid = TimeGrid(t1=10.0, stopping_times=(90.0,))
        base = dict(
            model_params=params,
            instrument=EuropeanCall(strike=100.0),
            grid=grid,
            n_paths=10_000,
            alpha=0.05,
            method="ols",
            basis_mode=BasisMode.FULL_DEG3,
            seed=11,
            u0=bs_call(100.0, 100.0, VOL, RATE, 90.0),
        )
        base.update(kw)
        return EstimatorSettings(**base)

    def test_quantile_index(self):
        report = estimate_var(self.settings())
        losses = np.sort(report.losses)[::-1]
        assert report.var_estimate == losses[int(np.ceil(0.05 * 10_000)) - 1]
        assert report.var_estimate == empirical_quantile_loss(report.losses, 0.05)

    def test_deterministic_model_constant_loss(self):
        params = GbmParams(spots=[100.0], drifts=[0.0], vols=[0.0],
                           corr=CorrelationMatrix.identity(1), rate=0.0)
        settings = self.settings(model_params=params, u0=10.0,
                                 instrument=EuropeanCall(strike=90.0))
        report = estimate_var(settings)
        assert np.allclose(report.losses, report.losses[0])
        assert report.var_estimate == pytest.approx(report.losses[0])

    def test_method_swap_isolation(self):
        a = estimate_var(self.settings(method="ols"))
        b = estimate_var(self.settings(method="lasso-cv", cv_folds=10))
        assert a.pipeline_hash == b.pipeline_hash
        assert not np.array_equal(a.losses, b.losses)  # regressions do differ

    def test_u0_precedence_config_over_valuer(self):
        marker = 123.456
        report = estimate_var(self.settings(u0=marker, u0_valuer=lambda: 999.0))
        assert report.u0 == marker
        report2 = estimate_var(self.settings(u0=None, u0_valuer=lambda: 7.5))
        assert report2.u0 == 7.5

    def test_u0_high_n_fallback(self):
        settings = self.settings(u0=None, u0_valuer=None, u0_n_paths=50_000)
        report = estimate_var(settings)
        reference = bs_call(100.0, 100.0, VOL, RATE, 90.0)
        assert abs(report.u0 - reference) / reference < 0.05

    def test_reproducible(self):
        a = estimate_var(self.settings())
        b = estimate_var(self.settings())
        assert a.var_estimate == b.var_estimate
        assert np.array_equal(a.losses, b.losses)


def test_european_reduction_price_identity():
    """With one exercisable date the engine price equals the plain Monte Carlo
    mean of the discounted terminal payoff on the identical paths."""
    params = gbm()
    grid = TimeGrid(t1=10.0, stopping_times=(90.0,))
    paths = simulate_gbm(params, grid, 30_000, seed=13)
    inst = EuropeanCall(strike=101.0)
    state = backward_induction(paths, inst, grid, BasisMode.FULL_DEG3, "ols", 13)
    engine_price = lsm_price(paths, state, grid)
    plain = float((paths.discount_from_t0(1) * inst.exercise_value(paths, 0, grid)).mean())
    assert engine_price == pytest.approx(plain, abs=1e-12)
