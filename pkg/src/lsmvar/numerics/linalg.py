"""Correlation matrices and Cholesky factorization with PSD repair."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch, NotPositiveSemiDefinite

# Eigenvalues more negative than this cannot be blamed on rounding and abort;
# anything in (-REPAIR_TOL, 0) is clipped to zero and the matrix re-normalized.
REPAIR_TOL = 1e-8


@dataclass(frozen=True)
class CorrelationMatrix:
    """Symmetric matrix with unit diagonal (PSD up to the repair tolerance)."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"correlation matrix must be square, got {m.shape}")
        if not np.allclose(m, m.T, atol=1e-12):
            raise DimensionMismatch("correlation matrix must be symmetric")
        if not np.allclose(np.diag(m), 1.0, atol=1e-12):
            raise DimensionMismatch("correlation matrix must have unit diagonal")
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "CorrelationMatrix":
        return cls(np.eye(dim))

    @classmethod
    def from_offdiagonal(cls, dim: int, rho: float) -> "CorrelationMatrix":
        m = np.full((dim, dim), float(rho))
        np.fill_diagonal(m, 1.0)
        return cls(m)


@dataclass(frozen=True)
class LowerTriangularFactor:
    """L with L @ L.T reproducing the source matrix; `repaired` marks PSD repair."""

    entries: np.ndarray
    repaired: bool = field(default=False)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def cholesky(m: CorrelationMatrix | np.ndarray) -> LowerTriangularFactor:
    """Lower-triangular factor of a correlation matrix.

    If the matrix fails to factor, eigenvalues down to -REPAIR_TOL are clipped
    at zero, the diagonal re-normalized to one and the factorization retried
    (flagged via ``repaired``).  Anything more negative raises
    NotPositiveSemiDefinite with the most negative eigenvalue.
    """
    a = m.entries if isinstance(m, CorrelationMatrix) else CorrelationMatrix(np.asarray(m)).entries
    try:
        return LowerTriangularFactor(np.linalg.cholesky(a))
    except np.linalg.LinAlgError:
        pass
    eigvals, eigvecs = np.linalg.eigh(a)
    most_negative = float(eigvals.min())
    if most_negative < -REPAIR_TOL:
        raise NotPositiveSemiDefinite(most_negative)
    clipped = np.clip(eigvals, 0.0, None)
    repaired = (eigvecs * clipped) @ eigvecs.T
    d = np.sqrt(np.diag(repaired))
    repaired = repaired / np.outer(d, d)
    np.fill_diagonal(repaired, 1.0)
    # tiny jitter escalation in case clipping left the matrix exactly singular
    for jitter in (0.0, 1e-14, 1e-12):
        try:
            shifted = repaired + jitter * np.eye(repaired.shape[0])
            return LowerTriangularFactor(np.linalg.cholesky(shifted), repaired=True)
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveSemiDefinite(most_negative)
