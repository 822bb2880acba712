"""Basis enumeration, design evaluation, standardization, gram matrices."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsmvar.basis import BasisMode, BasisSpec, enumerate_basis, evaluate_design, gram
from lsmvar.errors import NonFiniteState

from oracles import gram_double_loop


class TestEnumeration:
    def test_full_deg3_p2(self):
        spec = BasisSpec(mode=BasisMode.FULL_DEG3, p=2)
        names = [name for _, name in enumerate_basis(spec)]
        assert len(names) == 10
        assert spec.m == 10
        assert names[0] == "1"
        assert set(names) == {
            "1", "x1", "x2", "x1^2", "x1*x2", "x2^2",
            "x1^3", "x1^2*x2", "x1*x2^2", "x2^3",
        }

    def test_full_deg3_p10(self):
        assert BasisSpec(mode=BasisMode.FULL_DEG3, p=10).m == 286

    def test_glsm_p18(self):
        spec = BasisSpec(mode=BasisMode.GLSM, p=18)
        assert spec.m == 1 + 54 + 153
        assert len(enumerate_basis(spec)) == spec.m

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 30))
    def test_count_identities(self, p):
        full = BasisSpec(mode=BasisMode.FULL_DEG3, p=p)
        assert len(enumerate_basis(full)) == math.comb(p + 3, 3)
        reduced = BasisSpec(mode=BasisMode.GLSM, p=p)
        assert len(enumerate_basis(reduced)) == 1 + 3 * p + math.comb(p, 2)

    def test_ordering_deterministic(self):
        spec = BasisSpec(mode=BasisMode.FULL_DEG3, p=4)
        first = enumerate_basis(spec)
        second = enumerate_basis(spec)
        assert first == second
        # graded: all degree-1 terms come before any degree-2 term
        degrees = [sum(e) for e, _ in first]
        assert degrees == sorted(degrees)


class TestDesign:
    def test_powers_row(self):
        spec = BasisSpec(mode=BasisMode.FULL_DEG3, p=1)
        design = evaluate_design(spec, np.array([[2.0]]), standardize=False)
        assert np.array_equal(design.values[0], [1.0, 2.0, 4.0, 8.0])

    def test_degenerate_cross_section_drops_columns(self):
        spec = BasisSpec(mode=BasisMode.FULL_DEG3, p=2)
        states = np.ones((50, 2))
        design = evaluate_design(spec, states, standardize=True)
        assert design.n_cols == 1  # intercept only
        assert len(design.dropped_names) == 9

    def test_non_finite_rejected(self):
        spec = BasisSpec(mode=BasisMode.FULL_DEG3, p=1)
        with pytest.raises(NonFiniteState):
            evaluate_design(spec, np.array([[np.nan]]))

    def test_standardized_columns(self):
        rng = np.random.default_rng(0)
        spec = BasisSpec(mode=BasisMode.FULL_DEG3, p=3)
        design = evaluate_design(spec, rng.lognormal(size=(200, 3)))
        body = design.values[:, 1:]
        assert np.abs(body.mean(axis=0)).max() < 1e-8
        n = design.n_rows
        assert np.abs(np.linalg.norm(body, axis=0) - np.sqrt(n)).max() < 1e-8 * np.sqrt(n)

    def test_slsm_passthrough(self):
        feats = np.random.default_rng(1).normal(size=(30, 4))
        spec = BasisSpec(mode=BasisMode.SLSM, p=4, feature_names=("a", "b", "c", "d"))
        design = evaluate_design(spec, None, standardize=False, slsm_features=feats)
        assert np.array_equal(design.values[:, 1:], feats)
        assert design.names == ["1", "a", "b", "c", "d"]


class TestGram:
    def test_orthonormal_scaled(self):
        rng = np.random.default_rng(2)
        q, _ = np.linalg.qr(rng.standard_normal((64, 5)))
        x = q * np.sqrt(64)
        assert np.abs(gram(x) - np.eye(5)).max() < 1e-12

    def test_duplicated_column_singular(self):
        rng = np.random.default_rng(3)
        col = rng.standard_normal(40)
        x = np.column_stack([col, col, rng.standard_normal(40)])
        eigs = np.linalg.eigvalsh(gram(x))
        assert eigs[0] < 1e-10

    def test_matches_double_loop(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((5, 3))
        assert np.abs(gram(x) - gram_double_loop(x)).max() < 1e-12


def test_backmapping_reproduces_fitted_values():
    from lsmvar.regression import fit_ols

    rng = np.random.default_rng(5)
    states = rng.lognormal(size=(100, 2))
    y = 1.5 + states[:, 0] - 0.5 * states[:, 1] ** 2 + 0.01 * rng.standard_normal(100)
    spec = BasisSpec(mode=BasisMode.FULL_DEG3, p=2)
    fit_std = fit_ols(evaluate_design(spec, states, standardize=True), y)
    fit_raw = fit_ols(evaluate_design(spec, states, standardize=False), y)
    assert np.abs(fit_std.fitted - fit_raw.fitted).max() < 1e-10
    # coefficients mapped back to the raw scale agree too
    assert abs(fit_std.intercept - fit_raw.intercept) < 1e-6
    assert np.abs(fit_std.coefficients - fit_raw.coefficients).max() < 1e-6
