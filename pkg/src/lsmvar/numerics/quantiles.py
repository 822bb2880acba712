"""Empirical loss quantiles (exact order statistics, no interpolation)."""

from __future__ import annotations

import math

import numpy as np

from ..errors import AlphaOutOfRange, TooFewSamples


def empirical_quantile_loss(losses, alpha: float) -> float:
    """The ceil(alpha*N)-th largest element of ``losses``.

    This is the ranked-loss VaR estimator: with N simulated losses and tail
    probability alpha, the estimate is the k-th largest loss, k = ceil(alpha*N).
    """
    if not 0.0 < alpha < 1.0:
        raise AlphaOutOfRange(f"alpha must be in (0, 1), got {alpha}")
    v = np.asarray(losses, dtype=float).ravel()
    n = v.size
    if n < 1.0 / alpha:
        raise TooFewSamples(f"need at least {math.ceil(1.0 / alpha)} samples, got {n}")
    k = math.ceil(alpha * n)
    # k-th largest == (n-k)-th smallest (0-based)
    return float(np.partition(v, n - k)[n - k])
