"""Correlated geometric Brownian motion with a measure switch at the horizon.

States advance by the exact lognormal transition per substep, with drift mu_i
(physical measure) on [T0, t1] and the risk-free rate afterwards; refinement of
the substep therefore changes nothing in law.  All rates are per day, vols per
sqrt(day).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import TooFewSamples
from ..numerics.linalg import CorrelationMatrix, cholesky
from ..numerics.rng import chunked_normals
from .grid import PathSet, TimeGrid


@dataclass(frozen=True)
class GbmParams:
    spots: np.ndarray
    drifts: np.ndarray  # per day, physical measure
    vols: np.ndarray    # per sqrt(day)
    corr: CorrelationMatrix
    rate: float         # per day, risk-neutral drift and discounting

    def __post_init__(self):
        for name in ("spots", "drifts", "vols"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), float)))
        if not (self.spots > 0).all():
            raise ValueError("spots must be positive")
        if not (self.vols >= 0).all():
            raise ValueError("vols must be non-negative")
        if len({self.spots.size, self.drifts.size, self.vols.size, self.corr.dim}) != 1:
            raise ValueError("spots, drifts, vols and corr must agree in dimension")

    @property
    def n_assets(self) -> int:
        return self.spots.size


def simulate_gbm(params: GbmParams, grid: TimeGrid, n_paths: int, seed: int) -> PathSet:
    if n_paths < 2:
        raise TooFewSamples("need at least 2 paths")
    p = params.n_assets
    sim_times = grid.simulation_times()
    n_steps = sim_times.size - 1
    chol = cholesky(params.corr).entries

    draws = chunked_normals(seed, n_paths, n_steps * p).reshape(n_paths, n_steps, p)
    cs_times = np.array(grid.cross_section_times())
    cs_lookup = {round(t, 9): k for k, t in enumerate(cs_times)}

    log_s = np.broadcast_to(np.log(params.spots), (n_paths, p)).copy()
    states = np.empty((n_paths, cs_times.size, p))
    for step in range(n_steps):
        t0, t1 = sim_times[step], sim_times[step + 1]
        dt = t1 - t0
        under_p = t1 <= grid.t1 + 1e-12
        m = params.drifts if under_p else np.full(p, params.rate)
        shocks = draws[:, step, :] @ chol.T
        log_s += (m - 0.5 * params.vols**2) * dt + params.vols * np.sqrt(dt) * shocks
        k = cs_lookup.get(round(float(t1), 9))
        if k is not None:
            states[:, k, :] = np.exp(log_s)

    growth = np.broadcast_to(np.exp(params.rate * cs_times), (n_paths, cs_times.size)).copy()
    return PathSet(
        times=cs_times,
        states=states,
        growth=growth,
        t1=grid.t1,
        seed=seed,
        extra={"model": "gbm", "spots": params.spots.copy()},
    )
