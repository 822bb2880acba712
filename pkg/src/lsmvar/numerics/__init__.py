"""Numerical substrate: RNG streams, linear algebra, quantiles, MVN CDF."""

from .linalg import CorrelationMatrix, LowerTriangularFactor, cholesky
from .mvnorm import mvn_cdf, mvn_cdf_batch
from .quantiles import empirical_quantile_loss
from .rng import (
    PATH_CHUNK,
    SeededStream,
    chunked_normals,
    derive_seed,
    sample_correlated_normals,
)

__all__ = [
    "CorrelationMatrix",
    "LowerTriangularFactor",
    "cholesky",
    "mvn_cdf",
    "mvn_cdf_batch",
    "empirical_quantile_loss",
    "PATH_CHUNK",
    "SeededStream",
    "chunked_normals",
    "derive_seed",
    "sample_correlated_normals",
]
