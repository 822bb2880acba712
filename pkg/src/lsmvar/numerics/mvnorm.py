"""Multivariate normal CDF via Genz separation-of-variables quasi-Monte Carlo.

The integrand is transformed to the unit cube with the sequential conditioning
of Genz (1992), with variables reordered so the tightest limits integrate
first; the cube is sampled with Owen-scrambled Sobol points whose scramble
seeds derive from a pinned internal constant, so every evaluation is
deterministic.  The spread across independent scrambles gives the error
estimate.  ``mvn_cdf`` doubles the point count until the estimate meets the
tolerance; ``mvn_cdf_batch`` evaluates many upper-limit rows against one
correlation matrix at a fixed point count, vectorized over states in a numba
kernel (states are independent, so results do not depend on thread count).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange
from scipy.stats import qmc

from ..errors import DimensionMismatch, NoConvergence
from .linalg import CorrelationMatrix, cholesky

# Internal seed for the Sobol scrambles.
_MVN_SEED = 0x9E3779B97F4A7C15
_HUGE = 1e300


@njit(cache=True)
def _ndtri(p: float) -> float:
    """Inverse standard normal CDF, Wichura's AS241 (double precision)."""
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
            + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
            + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
            + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
            + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
            + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
            + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    r = p if q < 0.0 else 1.0 - p
    if r <= 0.0:
        return -37.5 if q < 0.0 else 37.5
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r = r - 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
            + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
            + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
            + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
            + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
            + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
            + 2.05319162663775882187e0) * r + 1.0)
    else:
        r = r - 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
            + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
            + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
            + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
            + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
            + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
            + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    return -val if q < 0.0 else val


@njit(cache=True)
def _ndtr(x: float) -> float:
    return 0.5 * math.erfc(-x * 0.7071067811865475244)


@njit(cache=True, parallel=True)
def _genz_kernel(uppers, chol, w, out):
    """Mean Genz integrand over lattice ``w`` for each upper-limit row.

    uppers: (B, n) with +inf encoded as values >= 1e300; chol: (n, n) lower
    triangular; w: (m, n-1) lattice points in [0, 1); out: (B,).
    """
    n_states, n = uppers.shape
    m = w.shape[0]
    for b in prange(n_states):
        total = 0.0
        y = np.empty(n - 1) if n > 1 else np.empty(1)
        for q in range(m):
            e = 1.0 if uppers[b, 0] >= _HUGE else _ndtr(uppers[b, 0] / chol[0, 0])
            prod = e
            alive = prod > 1e-300
            for d in range(1, n):
                if not alive:
                    break
                u = w[q, d - 1] * e
                if u < 1e-16:
                    u = 1e-16
                elif u > 1.0 - 1e-16:
                    u = 1.0 - 1e-16
                y[d - 1] = _ndtri(u)
                if uppers[b, d] >= _HUGE:
                    e = 1.0
                else:
                    s = 0.0
                    for j in range(d):
                        s += chol[d, j] * y[j]
                    e = _ndtr((uppers[b, d] - s) / chol[d, d])
                prod *= e
                alive = prod > 1e-300
            total += prod if alive else 0.0
        out[b] = total / m


def _sobol_points(n_dims: int, n_points: int, scramble_seed: int) -> np.ndarray:
    if n_dims == 0:
        return np.zeros((n_points, 0))
    sampler = qmc.Sobol(d=n_dims, scramble=True, seed=scramble_seed)
    return sampler.random(n_points)


def _reorder(upper: np.ndarray, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Integrate the tightest (smallest) limits first."""
    order = np.argsort(np.where(np.isposinf(upper), np.inf, upper), kind="stable")
    return upper[order], a[np.ix_(order, order)]


def _prepare(upper, corr) -> tuple[np.ndarray, np.ndarray]:
    upper = np.asarray(upper, dtype=float)
    cm = corr if isinstance(corr, CorrelationMatrix) else CorrelationMatrix(np.asarray(corr))
    if upper.shape[-1] != cm.dim:
        raise DimensionMismatch(
            f"upper limits have dim {upper.shape[-1]}, correlation has dim {cm.dim}"
        )
    return upper, cm.entries


def mvn_cdf(upper, corr, tol: float = 1e-4) -> tuple[float, float]:
    """P(X <= upper) for X ~ N(0, corr), with a shift-based standard error.

    Doubles the lattice size until the error estimate is <= tol.  Limits may
    be +/-inf.  Deterministic: the randomization seed is internal and fixed.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    upper, a = _prepare(upper, corr)
    if upper.ndim != 1:
        raise DimensionMismatch("mvn_cdf expects a single vector of upper limits")
    n = upper.size
    if np.any(np.isneginf(upper)):
        return 0.0, 0.0
    if n == 1:
        return float(_ndtr(float(min(upper[0], _HUGE)))), 0.0
    upper, a = _reorder(upper, a)
    b = np.where(np.isposinf(upper), _HUGE, upper)[None, :]
    chol = cholesky(a).entries
    n_scrambles = 8
    n_points = 256
    while True:
        means = np.empty(n_scrambles)
        out = np.empty(1)
        for s in range(n_scrambles):
            pts = _sobol_points(n - 1, n_points, _MVN_SEED + s)
            _genz_kernel(b, chol, pts, out)
            means[s] = out[0]
        value = float(means.mean())
        err = float(means.std(ddof=1) / math.sqrt(n_scrambles))
        if err <= tol:
            return value, err
        if n_points >= 1 << 17:
            raise NoConvergence(
                f"mvn_cdf error estimate {err:.2e} above tol {tol:.2e} at point cap"
            )
        n_points *= 2


def mvn_cdf_batch(uppers, corr, n_points: int = 512, n_shifts: int = 2) -> np.ndarray:
    """CDF values for many upper-limit rows against one correlation matrix.

    Fixed-size lattice (no adaptivity); used for bulk valuation where the
    per-state tolerance of ``mvn_cdf`` would be wasteful.  Deterministic and
    independent of thread count (states are evaluated independently).
    """
    uppers, a = _prepare(np.atleast_2d(uppers), corr)
    n = uppers.shape[1]
    neg = np.isneginf(uppers).any(axis=1)
    if n == 1:
        vals = np.array([_ndtr(float(min(u, _HUGE))) for u in uppers[:, 0]])
        vals[neg] = 0.0
        return vals
    # order by the mean upper limit across the batch (one shared permutation)
    order = np.argsort(np.where(np.isposinf(uppers), 8.5, np.clip(uppers, -8.5, 8.5)).mean(axis=0),
                       kind="stable")
    uppers = uppers[:, order]
    a = a[np.ix_(order, order)]
    chol = cholesky(a).entries
    b = np.where(np.isposinf(uppers), _HUGE, uppers)
    acc = np.zeros(uppers.shape[0])
    out = np.empty(uppers.shape[0])
    for s in range(n_shifts):
        _genz_kernel(b, chol, _sobol_points(n - 1, n_points, _MVN_SEED + s), out)
        acc += out
    acc /= n_shifts
    acc[neg] = 0.0
    return acc
