"""Time grids and simulated path populations."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidGrid

DAYS_PER_YEAR = 365.0


@dataclass(frozen=True)
class TimeGrid:
    """Valuation horizon and stopping-time grid, all in days from T0 = 0.

    ``substep`` caps the simulation step: each segment ([0, t1], [t1, T_1],
    [T_j, T_{j+1}]) is divided into equal pieces no longer than it.  None
    means one step per segment (exact for lognormal transitions).
    """

    t1: float
    stopping_times: tuple[float, ...]
    substep: float | None = None

    def __post_init__(self):
        stops = tuple(float(t) for t in self.stopping_times)
        object.__setattr__(self, "stopping_times", stops)
        if not stops:
            raise InvalidGrid("at least one stopping time is required")
        if not (0.0 < self.t1 <= stops[0]):
            raise InvalidGrid(f"need 0 < t1 <= T_1, got t1={self.t1}, T_1={stops[0]}")
        if any(b <= a for a, b in zip(stops, stops[1:])):
            raise InvalidGrid("stopping times must be strictly increasing")
        if self.substep is not None and self.substep <= 0:
            raise InvalidGrid("substep must be positive")

    def cross_section_times(self) -> list[float]:
        """Times where states are recorded: [t1, T_1, ..., T_L] (t1 merged if == T_1)."""
        if self.t1 == self.stopping_times[0]:
            return list(self.stopping_times)
        return [self.t1] + list(self.stopping_times)

    def simulation_times(self) -> np.ndarray:
        """All simulation node times including 0, substep-refined."""
        nodes = [0.0]
        prev = 0.0
        for t in self.cross_section_times():
            if self.substep is None:
                nodes.append(t)
            else:
                k = max(1, int(np.ceil((t - prev) / self.substep - 1e-12)))
                nodes.extend(prev + (t - prev) * (i + 1) / k for i in range(k))
            prev = t
        return np.array(nodes)

    @property
    def n_stops(self) -> int:
        return len(self.stopping_times)

    def stop_cs_index(self, j: int) -> int:
        """Cross-section index of stopping time j (0-based)."""
        offset = 0 if self.t1 == self.stopping_times[0] else 1
        return j + offset

    @property
    def t1_cs_index(self) -> int:
        return 0


@dataclass
class PathSet:
    """Simulated risk-factor paths on the cross-section grid.

    ``states``: (N, n_times, p); ``growth``: (N, n_times) pathwise money-market
    accumulation B(t)/B(T0), from which the discount factor between any two
    grid times is the exact ratio D(t_a, t_b) = B(t_a)/B(t_b) (multiplicative
    by construction).  Paths follow the physical measure up to t1 and a
    risk-neutral measure afterwards.
    """

    times: np.ndarray
    states: np.ndarray
    growth: np.ndarray
    t1: float
    seed: int
    measure_note: str = "physical on [T0, t1], risk-neutral after"
    extra: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def n_factors(self) -> int:
        return self.states.shape[2]

    def state(self, cs_index: int) -> np.ndarray:
        return self.states[:, cs_index, :]

    def discount(self, cs_from: int, cs_to: int) -> np.ndarray:
        """Pathwise D(t_from, t_to) = B(t_from)/B(t_to) for grid indices."""
        return self.growth[:, cs_from] / self.growth[:, cs_to]

    def discount_gather(self, cs_from: int, cs_to_per_path: np.ndarray) -> np.ndarray:
        """D(t_from, t_to[i]) where the target index varies per path."""
        rows = np.arange(self.n_paths)
        return self.growth[:, cs_from] / self.growth[rows, cs_to_per_path]

    def discount_from_t0(self, cs_index: int) -> np.ndarray:
        return 1.0 / self.growth[:, cs_index]

    def content_hash(self) -> str:
        """Digest of the pre-regression artifacts (times, states, discounts)."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.times).tobytes())
        h.update(np.ascontiguousarray(self.states).tobytes())
        h.update(np.ascontiguousarray(self.growth).tobytes())
        return h.hexdigest()
