"""Deterministic random number streams.

Streams are counter-based (Philox) and keyed by ``(seed, stream_id)``, so the
draw sequence of a stream is a pure function of its key: it is bit-identical
across runs, platforms of the same word size, and worker counts.  Path
simulation assigns one stream per fixed-size chunk of paths (``PATH_CHUNK``
paths share a stream, filled path-major), which keeps the per-path draws
independent of the total path count and of any parallel scheduling.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

# Paths per RNG stream.  Draws for path i come from stream (seed, i // PATH_CHUNK)
# at a path-major offset, so they do not depend on how many paths are simulated.
PATH_CHUNK = 4096

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SeededStream:
    """One independent, reproducible draw stream keyed by (seed, stream_id)."""

    seed: int
    stream_id: int = 0

    def generator(self) -> Generator:
        return Generator(Philox(key=[self.seed & _MASK64, self.stream_id & _MASK64]))

    def normals(self, shape) -> np.ndarray:
        """Standard-normal draws; same (seed, stream_id, shape prefix) -> same values."""
        return self.generator().standard_normal(shape)

    def uniforms(self, shape) -> np.ndarray:
        return self.generator().random(shape)


def derive_seed(base_seed: int, tag: str) -> int:
    """Stable 64-bit child seed for a named purpose (e.g. 'backtest', 'u0').

    Uses blake2b so distinct tags give well-separated seeds; the result never
    collides with the contiguous block base_seed..base_seed+2**20 used for
    repetition seeds (re-hashed if it would).
    """
    h = base_seed & _MASK64
    while True:
        digest = hashlib.blake2b(
            f"{h}:{tag}".encode(), digest_size=8
        ).digest()
        child = int.from_bytes(digest, "little")
        if not (base_seed <= child <= base_seed + (1 << 20)):
            return child
        h = child


def chunked_normals(seed: int, n_rows: int, n_cols: int) -> np.ndarray:
    """(n_rows, n_cols) standard normals, row i drawn from stream (seed, i // PATH_CHUNK).

    Row-major fill within each chunk makes row i's values invariant to n_rows,
    so enlarging a simulation extends the path population without disturbing
    existing paths.
    """
    out = np.empty((n_rows, n_cols))
    for chunk_id, start in enumerate(range(0, n_rows, PATH_CHUNK)):
        stop = min(start + PATH_CHUNK, n_rows)
        out[start:stop] = SeededStream(seed, chunk_id).normals((stop - start, n_cols))
    return out


def sample_correlated_normals(stream: SeededStream, factor, count: int) -> np.ndarray:
    """count i.i.d. rows from N(0, L L^T) given a lower-triangular factor L."""
    entries = getattr(factor, "entries", factor)
    entries = np.asarray(entries, dtype=float)
    if count < 1:
        raise ValueError("count must be >= 1")
    z = stream.normals((count, entries.shape[0]))
    return z @ entries.T
