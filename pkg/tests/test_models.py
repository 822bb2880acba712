"""Market-model simulation: grids, GBM, forward-rate model, discounting."""

import numpy as np
import pytest
from scipy.stats import ks_2samp

from lsmvar.errors import GridTenorMismatch, IndexOutOfRange, InvalidGrid
from lsmvar.models import (
    DAYS_PER_YEAR,
    GbmParams,
    LfmParams,
    TimeGrid,
    atm_swap_rate,
    initial_zcb,
    lfm_correlation,
    lfm_inst_vol,
    simulate_gbm,
    simulate_lfm,
    zcb_prices,
)
from lsmvar.numerics import CorrelationMatrix


def one_asset(mu=0.0, sigma=0.01, rate=0.0001, spot=100.0):
    return GbmParams(spots=[spot], drifts=[mu], vols=[sigma],
                     corr=CorrelationMatrix.identity(1), rate=rate)


def flat_lfm(gamma=(0.1, 0.1, 1.0, 0.1), beta=0.05, k=20, forward=0.04, psi=None):
    return LfmParams(
        tenors=np.arange(k + 1, dtype=float),
        forwards=np.full(k, forward),
        gamma=gamma,
        beta=beta,
        psi=np.ones(k) if psi is None else psi,
    )


class TestTimeGrid:
    def test_validation(self):
        with pytest.raises(InvalidGrid):
            TimeGrid(t1=0.0, stopping_times=(10.0,))
        with pytest.raises(InvalidGrid):
            TimeGrid(t1=20.0, stopping_times=(10.0,))
        with pytest.raises(InvalidGrid):
            TimeGrid(t1=5.0, stopping_times=(10.0, 10.0))
        with pytest.raises(InvalidGrid):
            TimeGrid(t1=5.0, stopping_times=(10.0, 20.0), substep=-1.0)

    def test_simulation_times(self):
        grid = TimeGrid(t1=5.0, stopping_times=(10.0, 20.0), substep=5.0)
        assert np.allclose(grid.simulation_times(), [0, 5, 10, 15, 20])
        assert grid.cross_section_times() == [5.0, 10.0, 20.0]
        assert grid.stop_cs_index(0) == 1

    def test_t1_on_first_stop(self):
        grid = TimeGrid(t1=10.0, stopping_times=(10.0, 20.0))
        assert grid.cross_section_times() == [10.0, 20.0]
        assert grid.stop_cs_index(0) == 0


class TestGbm:
    def test_zero_vol_constant_paths(self):
        params = GbmParams(spots=[50.0], drifts=[0.0], vols=[0.0],
                           corr=CorrelationMatrix.identity(1), rate=0.0)
        paths = simulate_gbm(params, TimeGrid(t1=5.0, stopping_times=(20.0,)), 100, seed=1)
        assert np.allclose(paths.states, 50.0, rtol=1e-13)
        assert paths.states.std() == 0.0

    def test_martingale_under_q(self):
        # zero physical drift isolates the risk-neutral segment
        params = one_asset(mu=0.0001, sigma=0.012, rate=0.0002)
        grid = TimeGrid(t1=1.0, stopping_times=(90.0,))
        paths = simulate_gbm(params, grid, 400_000, seed=7)
        # E[e^{-r (T - t1)} S_T | t1] = S_t1 path by path; aggregate check
        s_t1 = paths.state(0)[:, 0]
        s_t = paths.state(1)[:, 0]
        disc = paths.discount(0, 1)
        diff = disc * s_t - s_t1
        se = diff.std() / np.sqrt(diff.size)
        assert abs(diff.mean()) < 3 * se

    def test_paper_scale_shapes(self):
        rng = np.random.default_rng(0)
        p = 10
        a = rng.standard_normal((p, p))
        c = 0.3 * (a @ a.T / np.sqrt(np.outer(np.diag(a @ a.T), np.diag(a @ a.T)))) + 0.7 * np.eye(p)
        np.fill_diagonal(c, 1.0)
        c = (c + c.T) / 2
        params = GbmParams(
            spots=rng.uniform(30, 90, p),
            drifts=rng.uniform(1e-6, 1e-4, p),
            vols=rng.uniform(0.001, 0.01, p),
            corr=CorrelationMatrix(c),
            rate=0.02 / DAYS_PER_YEAR,
        )
        grid = TimeGrid(t1=10.0, stopping_times=(270.0,))
        paths = simulate_gbm(params, grid, 10_000, seed=3)
        assert paths.states.shape == (10_000, 2, 10)
        assert (paths.states > 0).all()

    def test_measure_switch_drifts(self):
        params = one_asset(mu=0.002, sigma=0.01, rate=0.0001)
        grid = TimeGrid(t1=100.0, stopping_times=(200.0,), substep=100.0)
        paths = simulate_gbm(params, grid, 200_000, seed=11)
        s0 = params.spots[0]
        log_r1 = np.log(paths.state(0)[:, 0] / s0)
        log_r2 = np.log(paths.state(1)[:, 0] / paths.state(0)[:, 0])
        drift1 = log_r1.mean() / 100.0 + params.vols[0] ** 2 / 2
        drift2 = log_r2.mean() / 100.0 + params.vols[0] ** 2 / 2
        se = params.vols[0] / np.sqrt(100.0 * 200_000)
        assert abs(drift1 - 0.002) < 4 * se
        assert abs(drift2 - 0.0001) < 4 * se

    def test_refinement_invariant_in_law(self):
        params = one_asset(mu=0.0005, sigma=0.015)
        coarse = simulate_gbm(params, TimeGrid(t1=10.0, stopping_times=(20.0,)), 100_000, seed=5)
        fine = simulate_gbm(
            params, TimeGrid(t1=10.0, stopping_times=(20.0,), substep=2.5), 100_000, seed=6
        )
        stat = ks_2samp(coarse.state(0)[:, 0], fine.state(0)[:, 0])
        assert stat.pvalue > 0.01

    def test_discount_multiplicative(self):
        params = one_asset()
        grid = TimeGrid(t1=5.0, stopping_times=(10.0, 20.0, 30.0))
        paths = simulate_gbm(params, grid, 50, seed=2)
        lhs = paths.discount(1, 3)
        rhs = paths.discount(1, 2) * paths.discount(2, 3)
        assert np.abs(lhs - rhs).max() < 1e-12

    def test_determinism_across_path_counts(self):
        params = one_asset(sigma=0.02)
        grid = TimeGrid(t1=5.0, stopping_times=(20.0,))
        small = simulate_gbm(params, grid, 500, seed=9)
        big = simulate_gbm(params, grid, 2000, seed=9)
        assert np.array_equal(small.states, big.states[:500])


class TestLfm:
    def test_zero_vol_freezes_curve(self):
        params = flat_lfm(gamma=(0.0, 0.0, 1.0, 0.0), k=5)
        grid = TimeGrid(t1=10.0, stopping_times=(2 * DAYS_PER_YEAR, 3 * DAYS_PER_YEAR))
        paths = simulate_lfm(params, grid, 10, seed=1)
        assert np.allclose(paths.states, 0.04)
        # discounts equal the deterministic bond ratios
        p0 = initial_zcb(params)
        assert np.allclose(paths.discount_from_t0(1), p0[2], atol=1e-12)
        assert np.allclose(paths.discount_from_t0(2), p0[3], atol=1e-12)

    def test_bond_repricing_under_spot_measure(self):
        # martingale check of the drift: mean pathwise discount reprices bonds
        params = flat_lfm(k=6, beta=0.1)
        grid = TimeGrid(
            t1=10.0,
            stopping_times=tuple(DAYS_PER_YEAR * i for i in (2, 3, 4)),
            substep=DAYS_PER_YEAR / 8,
        )
        paths = simulate_lfm(params, grid, 120_000, seed=4)
        p0 = initial_zcb(params)
        for cs, tenor_idx in ((1, 2), (2, 3), (3, 4)):
            d = paths.discount_from_t0(cs)
            se = d.std() / np.sqrt(d.size)
            assert abs(d.mean() - p0[tenor_idx]) < 3.5 * se + 1e-9

    def test_beta_zero_perfect_correlation(self):
        # single step from a common state: increments differ only by the
        # deterministic vol scaling, so they are perfectly correlated
        params = flat_lfm(beta=0.0, k=6)
        grid = TimeGrid(t1=10.0, stopping_times=(2 * DAYS_PER_YEAR,))
        paths = simulate_lfm(params, grid, 100_000, seed=8)
        live = paths.state(0)[:, 2:]  # at t1, one step from T0
        increments = np.log(live / 0.04)
        corr = np.corrcoef(increments.T)
        assert corr.min() >= 0.999

    def test_dead_forwards_frozen(self):
        params = flat_lfm(k=4)
        grid = TimeGrid(t1=10.0, stopping_times=(DAYS_PER_YEAR, 2 * DAYS_PER_YEAR))
        paths = simulate_lfm(params, grid, 50, seed=3)
        # forward 1 resets at T_0: frozen at its initial value everywhere
        assert np.allclose(paths.states[:, :, 0], 0.04)
        # forward 2 resets at T_1: same value at T_1 and T_2 cross-sections
        assert np.array_equal(paths.states[:, 1, 1], paths.states[:, 2, 1])

    def test_grid_tenor_mismatch(self):
        params = flat_lfm(k=4)
        with pytest.raises(GridTenorMismatch):
            simulate_lfm(params, TimeGrid(t1=10.0, stopping_times=(500.0,)), 10, seed=0)

    def test_positive_forwards(self):
        params = flat_lfm(k=8, beta=0.2)
        grid = TimeGrid(t1=10.0, stopping_times=tuple(DAYS_PER_YEAR * i for i in (2, 4, 6)))
        paths = simulate_lfm(params, grid, 20_000, seed=12)
        assert (paths.states > 0).all()

    def test_discount_multiplicative(self):
        params = flat_lfm(k=5)
        grid = TimeGrid(t1=10.0, stopping_times=tuple(DAYS_PER_YEAR * i for i in (2, 3, 4)))
        paths = simulate_lfm(params, grid, 100, seed=5)
        lhs = paths.discount(1, 3)
        rhs = paths.discount(1, 2) * paths.discount(2, 3)
        assert np.abs(lhs - rhs).max() < 1e-12

    def test_zcb_adjacent_identity(self):
        params = flat_lfm(k=5)
        grid = TimeGrid(t1=10.0, stopping_times=(2 * DAYS_PER_YEAR, 3 * DAYS_PER_YEAR))
        paths = simulate_lfm(params, grid, 60, seed=6)
        p = zcb_prices(paths, 1)  # at T_2
        curve = paths.state(1)
        expected = 1.0 / (1.0 + params.deltas[2] * curve[:, 2])
        assert np.abs(p[:, 3] - expected).max() < 1e-14
        assert np.isnan(p[:, 1]).all()
        assert np.allclose(p[:, 2], 1.0)


class TestVolAndCorrelation:
    def test_flat_vol(self):
        params = flat_lfm(gamma=(0.0, 0.0, 1.0, 0.3), psi=np.full(20, 1.05))
        assert lfm_inst_vol(params, 5, 2.0) == pytest.approx(1.05 * 0.3)

    def test_exponential_point(self):
        params = flat_lfm(gamma=(1.0, 0.0, 1.0, 0.0))
        # T_{i-1} - t = 1 at i = 3, t = 1
        assert lfm_inst_vol(params, 3, 1.0) == pytest.approx(np.exp(-1.0))

    def test_hump_location(self):
        gamma = (0.5, 0.0, 0.8, 0.0)
        params = flat_lfm(gamma=gamma, k=20)
        taus = np.linspace(0.01, 10, 4001)
        values = [lfm_inst_vol(params, 20, 19.0 - u) for u in taus]
        assert abs(taus[int(np.argmax(values))] - 1.0 / 0.8) < 0.01

    def test_dead_vol_zero(self):
        params = flat_lfm()
        assert lfm_inst_vol(params, 1, 0.5) == 0.0

    def test_index_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            lfm_inst_vol(flat_lfm(), 21, 0.0)

    @pytest.mark.parametrize("beta,i,j,expected", [
        (0.0, 1, 9, 1.0),
        (0.7, 4, 4, 1.0),
        (np.log(2.0), 3, 4, 0.5),
    ])
    def test_correlation(self, beta, i, j, expected):
        assert lfm_correlation(beta, i, j) == pytest.approx(expected)


def test_atm_swap_rate_flat_curve():
    params = flat_lfm(k=20)
    rate = atm_swap_rate(params, 2)
    assert rate == pytest.approx(0.04, rel=1e-9)
