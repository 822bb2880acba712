"""Polynomial basis families and design-matrix evaluation.

Two generic families are provided: the full total-degree-3 monomial basis
(``FULL_DEG3``, M = C(p+3, 3) features including the constant) and the reduced
family with per-factor pure powers up to 3 plus pairwise first-order cross
terms (``GLSM``, M = 1 + 3p + C(p, 2)).  ``SLSM`` takes explicit, already
engineered feature columns (e.g. powers of an underlying swap value plus bond
prices) and only prepends the intercept.  Feature order is deterministic:
constant first, then graded lexicographic in the exponent tuples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import NonFiniteState, ShapeMismatch

# Columns whose standard deviation falls below this (relative to their
# magnitude) are treated as constant and dropped before standardization.
_ZERO_VAR_TOL = 1e-12


class BasisMode(str, Enum):
    FULL_DEG3 = "full_deg3"
    GLSM = "glsm"
    SLSM = "slsm"
    CUSTOM = "custom"


@dataclass(frozen=True)
class BasisSpec:
    """Which basis family to expand on a p-dimensional cross-section.

    For CUSTOM, ``exponents`` lists the monomials explicitly (exponent tuples
    of length p, the constant () row excluded or included as all-zeros).  For
    SLSM, ``p`` is the number of supplied feature columns and no expansion is
    performed.
    """

    mode: BasisMode
    p: int
    exponents: tuple[tuple[int, ...], ...] | None = None
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.p < 1:
            raise ShapeMismatch("basis requires p >= 1 factors")
        if self.mode is BasisMode.CUSTOM and self.exponents is None:
            raise ShapeMismatch("custom basis requires explicit exponents")

    @property
    def m(self) -> int:
        """Number of basis functions including the constant."""
        if self.mode is BasisMode.FULL_DEG3:
            return math.comb(self.p + 3, 3)
        if self.mode is BasisMode.GLSM:
            return 1 + 3 * self.p + math.comb(self.p, 2)
        if self.mode is BasisMode.SLSM:
            return 1 + self.p
        return len(enumerate_basis(self))


def _monomial_name(expo: tuple[int, ...]) -> str:
    if not any(expo):
        return "1"
    parts = []
    for i, k in enumerate(expo):
        if k == 1:
            parts.append(f"x{i + 1}")
        elif k > 1:
            parts.append(f"x{i + 1}^{k}")
    return "*".join(parts)


def _graded_lex(p: int, max_degree: int):
    """All exponent tuples with total degree 1..max_degree, graded lexicographic."""
    for degree in range(1, max_degree + 1):
        def rec(prefix, remaining, slots):
            if slots == 1:
                yield prefix + (remaining,)
                return
            for k in range(remaining, -1, -1):
                yield from rec(prefix + (k,), remaining - k, slots - 1)
        yield from rec((), degree, p)


def enumerate_basis(spec: BasisSpec) -> list[tuple[tuple[int, ...], str]]:
    """Ordered (exponents, name) list; pure function of the spec."""
    p = spec.p
    if spec.mode is BasisMode.SLSM:
        names = spec.feature_names or tuple(f"f{i + 1}" for i in range(p))
        if len(names) != p:
            raise ShapeMismatch("feature_names length must equal p")
        out = [((0,) * p, "1")]
        for i, name in enumerate(names):
            expo = tuple(1 if j == i else 0 for j in range(p))
            out.append((expo, name))
        return out
    features: list[tuple[int, ...]] = [(0,) * p]
    if spec.mode is BasisMode.FULL_DEG3:
        features.extend(_graded_lex(p, 3))
    elif spec.mode is BasisMode.GLSM:
        eye = lambda i, k: tuple(k if j == i else 0 for j in range(p))
        for k in (1, 2, 3):
            features.extend(eye(i, k) for i in range(p))
        for i in range(p):
            for j in range(i + 1, p):
                features.append(tuple(1 if t in (i, j) else 0 for t in range(p)))
    elif spec.mode is BasisMode.CUSTOM:
        features.extend(e for e in spec.exponents if any(e))
    return [(e, _monomial_name(e)) for e in features]


@dataclass
class DesignMatrix:
    """Evaluated (and optionally standardized) basis on a cross-section.

    ``values`` holds the kept columns (intercept first).  ``center``/``scale``
    record the standardization of the kept non-intercept columns so fitted
    coefficients can be mapped back to the raw feature scale.  Dropped
    zero-variance columns are remembered by raw index for back-mapping.
    """

    values: np.ndarray
    names: list[str]
    center: np.ndarray
    scale: np.ndarray
    kept_raw_index: np.ndarray
    n_raw: int
    standardized: bool
    dropped_names: list[str] = field(default_factory=list)
    raw_names: list[str] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]


def evaluate_design(
    spec: BasisSpec,
    states: np.ndarray,
    standardize: bool = True,
    slsm_features: np.ndarray | None = None,
) -> DesignMatrix:
    """Evaluate the basis on an (N, p) cross-section.

    With ``standardize`` the non-intercept columns are centered and scaled to
    norm sqrt(N); zero-variance columns are dropped and recorded.  For SLSM
    pass the engineered columns via ``slsm_features``.
    """
    if spec.mode is BasisMode.SLSM:
        if slsm_features is None:
            raise ShapeMismatch("SLSM basis requires slsm_features")
        states = np.asarray(slsm_features, dtype=float)
    else:
        states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    if states.shape[1] != spec.p:
        raise ShapeMismatch(f"states have {states.shape[1]} factors, spec.p={spec.p}")
    if not np.isfinite(states).all():
        raise NonFiniteState("cross-section contains non-finite values")

    feats = enumerate_basis(spec)
    n = states.shape[0]
    raw = np.empty((n, len(feats)))
    raw[:, 0] = 1.0
    if spec.mode is BasisMode.SLSM:
        raw[:, 1:] = states
    else:
        # reuse power tables per factor: states only enter via x_i^k, k <= 3
        powers = {1: states, 2: states**2, 3: states**3}
        for col, (expo, _) in enumerate(feats[1:], start=1):
            acc = None
            for i, k in enumerate(expo):
                if k == 0:
                    continue
                term = powers[k][:, i]
                acc = term if acc is None else acc * term
            raw[:, col] = acc

    names = [name for _, name in feats]
    if not standardize:
        m = raw.shape[1]
        return DesignMatrix(
            values=raw,
            names=names,
            center=np.zeros(m - 1),
            scale=np.ones(m - 1),
            kept_raw_index=np.arange(m),
            n_raw=m,
            standardized=False,
            raw_names=names,
        )

    body = raw[:, 1:]
    mu = body.mean(axis=0)
    sd = body.std(axis=0)
    keep = sd > _ZERO_VAR_TOL * np.maximum(1.0, np.abs(mu))
    dropped = [names[i + 1] for i in np.nonzero(~keep)[0]]
    body = (body[:, keep] - mu[keep]) / sd[keep]
    values = np.concatenate([np.ones((n, 1)), body], axis=1)
    kept_idx = np.concatenate([[0], 1 + np.nonzero(keep)[0]])
    kept_names = [names[0]] + [names[i + 1] for i in np.nonzero(keep)[0]]
    return DesignMatrix(
        values=values,
        names=kept_names,
        center=mu[keep],
        scale=sd[keep],
        kept_raw_index=kept_idx,
        n_raw=raw.shape[1],
        standardized=True,
        dropped_names=dropped,
        raw_names=names,
    )


def gram(design: DesignMatrix | np.ndarray) -> np.ndarray:
    """N^{-1} X^T X of the design (symmetric PSD)."""
    x = design.values if isinstance(design, DesignMatrix) else np.asarray(design, float)
    g = x.T @ x / x.shape[0]
    return (g + g.T) / 2.0
