"""RNG streams, Cholesky with PSD repair, empirical quantiles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsmvar.errors import AlphaOutOfRange, NotPositiveSemiDefinite, TooFewSamples
from lsmvar.numerics import (
    CorrelationMatrix,
    SeededStream,
    cholesky,
    chunked_normals,
    empirical_quantile_loss,
    sample_correlated_normals,
)
from lsmvar.numerics.rng import derive_seed

from oracles import kth_largest_by_sort

TABLE_CORR = np.array([
    [1.00000, 0.55000, 0.29311, 0.28272, 0.23681, 0.33050, 0.34773, 0.39159, 0.29665, 0.23986],
    [0.55000, 1.00000, 0.28613, 0.27540, 0.37854, 0.38001, 0.25678, 0.32052, 0.26683, 0.28365],
    [0.29311, 0.28613, 1.00000, 0.31191, 0.39619, 0.32266, 0.27440, 0.26772, 0.39976, 0.28598],
    [0.28272, 0.27540, 0.31191, 1.00000, 0.25510, 0.23745, 0.22811, 0.25273, 0.22504, 0.35783],
    [0.23681, 0.37854, 0.39619, 0.25510, 1.00000, 0.24183, 0.25727, 0.29702, 0.30817, 0.33151],
    [0.33050, 0.38001, 0.32266, 0.23745, 0.24183, 1.00000, 0.25681, 0.21482, 0.32993, 0.20017],
    [0.34773, 0.25678, 0.27440, 0.22811, 0.25727, 0.25681, 1.00000, 0.28263, 0.29389, 0.24210],
    [0.39159, 0.32052, 0.26772, 0.25273, 0.29702, 0.21482, 0.28263, 1.00000, 0.21862, 0.23128],
    [0.29665, 0.26683, 0.39976, 0.22504, 0.30817, 0.32993, 0.29389, 0.21862, 1.00000, 0.37021],
    [0.23986, 0.28365, 0.28598, 0.35783, 0.33151, 0.20017, 0.24210, 0.23128, 0.37021, 1.00000],
])


class TestCholesky:
    def test_identity(self):
        f = cholesky(CorrelationMatrix.identity(3))
        assert np.allclose(f.entries, np.eye(3))
        assert not f.repaired

    def test_two_by_two_closed_form(self):
        f = cholesky(CorrelationMatrix.from_offdiagonal(2, 0.5))
        expected = np.array([[1.0, 0.0], [0.5, np.sqrt(0.75)]])
        assert np.allclose(f.entries, expected, atol=1e-15)

    def test_ten_asset_matrix_round_trips(self):
        f = cholesky(CorrelationMatrix(TABLE_CORR))
        recovered = f.entries @ f.entries.T
        assert np.abs(recovered - TABLE_CORR).max() <= 1e-10 * np.abs(TABLE_CORR).max()

    def test_not_psd_raises_with_most_negative(self):
        bad = np.array([[1.0, 0.99, -0.99], [0.99, 1.0, 0.99], [-0.99, 0.99, 1.0]])
        with pytest.raises(NotPositiveSemiDefinite) as exc:
            cholesky(CorrelationMatrix(bad))
        assert exc.value.most_negative < -1e-8

    def test_rounding_level_repair(self):
        # perfectly correlated block is PSD but numerically on the edge
        m = np.ones((3, 3))
        f = cholesky(CorrelationMatrix(m))
        assert np.abs(f.entries @ f.entries.T - m).max() < 1e-8


class TestStreams:
    def test_same_stream_identical(self):
        a = SeededStream(7, 3).normals((5, 4))
        b = SeededStream(7, 3).normals((5, 4))
        assert np.array_equal(a, b)

    def test_distinct_streams_differ(self):
        a = SeededStream(7, 3).normals(16)
        b = SeededStream(7, 4).normals(16)
        assert not np.array_equal(a, b)

    def test_chunked_rows_invariant_to_total(self):
        small = chunked_normals(11, 100, 6)
        big = chunked_normals(11, 9000, 6)
        assert np.array_equal(small, big[:100])

    def test_identity_moments(self):
        draws = sample_correlated_normals(SeededStream(1, 0), np.eye(1), 1_000_000)
        assert abs(draws.mean()) < 4 / np.sqrt(1_000_000)
        assert abs(draws.var() - 1.0) < 0.01

    def test_correlated_sampling(self):
        factor = cholesky(CorrelationMatrix.from_offdiagonal(2, 0.5))
        draws = sample_correlated_normals(SeededStream(2, 0), factor, 1_000_000)
        corr = np.corrcoef(draws.T)[0, 1]
        assert abs(corr - 0.5) < 0.005

    def test_derived_seed_stable_and_disjoint(self):
        child = derive_seed(1234, "backtest")
        assert child == derive_seed(1234, "backtest")
        assert not (1234 <= child <= 1234 + (1 << 20))
        assert derive_seed(1234, "u0") != child


class TestQuantiles:
    def test_order_statistic(self):
        losses = np.arange(1.0, 101.0)
        assert empirical_quantile_loss(losses, 0.05) == 96.0

    def test_constant_vector(self):
        assert empirical_quantile_loss(np.full(50, 3.25), 0.1) == 3.25

    def test_alpha_out_of_range(self):
        with pytest.raises(AlphaOutOfRange):
            empirical_quantile_loss(np.arange(100.0), 1.5)

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            empirical_quantile_loss(np.arange(5.0), 0.05)

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=200),
        st.floats(0.01, 0.99),
    )
    def test_matches_full_sort(self, values, alpha):
        if len(values) < 1.0 / alpha:
            return
        assert empirical_quantile_loss(values, alpha) == kth_largest_by_sort(values, alpha)
