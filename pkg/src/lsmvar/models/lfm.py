"""Lognormal forward-rate market model.

Forward rates carry humped parametric instantaneous volatility
sigma_i(t) = psi_i * [((T_{i-1}-t) g1 + g2) exp(-(T_{i-1}-t) g3) + g4] and
exponentially decaying inter-forward correlation rho_ij = exp(-beta |i-j|).
Simulation is log-Euler under the spot (rolling bank-account) measure; dead
forwards freeze at their reset value.  The physical-measure segment before the
horizon uses the same dynamics unless a drift adjustment is supplied.

Pathwise discounting rolls the one-period bank account: continuous
compounding at rate ln(1 + delta_k * fixing_k) / delta_k inside each accrual
period, which makes discount factors exactly multiplicative across segments
and reproduces 1/(1 + delta_k L_k) over whole periods.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import GridTenorMismatch, IndexOutOfRange, TooFewSamples
from ..numerics.linalg import CorrelationMatrix, cholesky
from ..numerics.rng import chunked_normals
from .grid import DAYS_PER_YEAR, PathSet, TimeGrid

PSI_BOX = (0.9, 1.1)


def hump(u, gamma) -> np.ndarray:
    """Instantaneous-volatility shape nu(u) = ((u g1 + g2) e^{-u g3} + g4)."""
    u = np.asarray(u, dtype=float)
    g1, g2, g3, g4 = gamma
    return (u * g1 + g2) * np.exp(-u * g3) + g4


def lfm_correlation(beta: float, i: int, j: int) -> float:
    """exp(-beta |i - j|)."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    return float(np.exp(-beta * abs(i - j)))


@dataclass(frozen=True)
class LfmParams:
    tenors: np.ndarray    # years, [T_0 = 0, T_1, ..., T_K]
    forwards: np.ndarray  # L_i(0) for i = 1..K
    gamma: tuple[float, float, float, float]
    beta: float
    psi: np.ndarray       # per-forward correction, length K
    p_drift_adjust: np.ndarray | None = None  # per-year log-drift add-on before t1

    def __post_init__(self):
        tenors = np.asarray(self.tenors, dtype=float)
        forwards = np.asarray(self.forwards, dtype=float)
        psi = np.asarray(self.psi, dtype=float)
        object.__setattr__(self, "tenors", tenors)
        object.__setattr__(self, "forwards", forwards)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "gamma", tuple(float(g) for g in self.gamma))
        if tenors[0] != 0.0 or np.any(np.diff(tenors) <= 0):
            raise ValueError("tenors must start at 0 and increase")
        if forwards.size != tenors.size - 1 or psi.size != forwards.size:
            raise ValueError("forwards and psi must have one entry per tenor period")
        if not (forwards > 0).all():
            raise ValueError("initial forwards must be positive")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if np.any(psi < PSI_BOX[0] - 1e-12) or np.any(psi > PSI_BOX[1] + 1e-12):
            raise ValueError(f"psi must lie in [{PSI_BOX[0]}, {PSI_BOX[1]}]")
        probe = hump(np.linspace(0.0, tenors[-1], 512), self.gamma)
        if probe.min() < 0:
            raise ValueError("volatility shape is negative on the tenor span")

    @property
    def n_forwards(self) -> int:
        return self.forwards.size

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.tenors)

    def correlation(self) -> CorrelationMatrix:
        idx = np.arange(1, self.n_forwards + 1)
        return CorrelationMatrix(np.exp(-self.beta * np.abs(idx[:, None] - idx[None, :])))

    def inst_vols(self, t: float) -> np.ndarray:
        """sigma_i(t) for all forwards; zero once a forward has reset."""
        resets = self.tenors[:-1]
        v = self.psi * hump(resets - t, self.gamma)
        return np.where(resets > t + 1e-12, v, 0.0)


def lfm_inst_vol(params: LfmParams, i: int, t: float) -> float:
    """sigma_i(t) for forward i (1-based); zero after the forward's reset."""
    if not 1 <= i <= params.n_forwards:
        raise IndexOutOfRange(f"forward index {i} outside 1..{params.n_forwards}")
    reset = params.tenors[i - 1]
    if t > reset:
        return 0.0
    return float(params.psi[i - 1] * hump(reset - t, params.gamma))


def _period_rate(delta: float, fixing) -> np.ndarray:
    """Continuously-compounded accrual rate reproducing (1 + delta * fixing)."""
    return np.log1p(delta * np.asarray(fixing, dtype=float)) / delta


def _step_log_forwards(log_l, ta, dt, shocks, params, rho_tri):
    """One log-Euler step of the live forwards under the spot measure."""
    resets = params.tenors[:-1]
    deltas = params.deltas
    alive = resets > ta + 1e-12
    sig = np.where(alive, params.psi * hump(resets - ta, params.gamma), 0.0)
    l_cur = np.exp(log_l)
    u = np.where(alive, deltas * sig * l_cur / (1.0 + deltas * l_cur), 0.0)
    drift = sig * (u @ rho_tri)
    incr = (drift - 0.5 * sig**2) * dt + sig * np.sqrt(dt) * shocks
    return np.where(alive, log_l + incr, log_l)


def simulate_lfm(params: LfmParams, grid: TimeGrid, n_paths: int, seed: int) -> PathSet:
    if n_paths < 2:
        raise TooFewSamples("need at least 2 paths")
    k_fwd = params.n_forwards
    tenors = params.tenors
    deltas = params.deltas

    cs_days = np.array(grid.cross_section_times())
    cs_years = cs_days / DAYS_PER_YEAR
    t1_years = grid.t1 / DAYS_PER_YEAR
    for t in np.asarray(grid.stopping_times) / DAYS_PER_YEAR:
        if np.abs(tenors - t).min() > 1e-9:
            raise GridTenorMismatch(f"stopping time {t:.6f}y is not a tenor date")
    if t1_years >= tenors[1]:
        raise GridTenorMismatch("t1 must fall inside the first tenor period")

    # simulation nodes: horizon, every tenor date needed, substep refinement
    last = cs_years[-1]
    key = {0.0, t1_years, *cs_years.tolist(), *[t for t in tenors if t <= last + 1e-12]}
    key_times = np.array(sorted(key))
    if grid.substep is not None:
        sub_y = grid.substep / DAYS_PER_YEAR
        nodes = [0.0]
        for a, b in zip(key_times[:-1], key_times[1:]):
            pieces = max(1, int(np.ceil((b - a) / sub_y - 1e-12)))
            nodes.extend(a + (b - a) * (i + 1) / pieces for i in range(pieces))
        sim_times = np.array(nodes)
    else:
        sim_times = key_times

    n_steps = sim_times.size - 1
    chol = cholesky(params.correlation()).entries
    draws = chunked_normals(seed, n_paths, n_steps * k_fwd).reshape(n_paths, n_steps, k_fwd)

    # rho_kj masked to k <= j: drift_j = sigma_j * sum_{k<=j, alive} rho_kj u_k
    rho = params.correlation().entries
    rho_tri = np.where(np.arange(k_fwd)[:, None] <= np.arange(k_fwd)[None, :], rho, 0.0)

    log_l = np.broadcast_to(np.log(params.forwards), (n_paths, k_fwd)).copy()
    growth = np.ones(n_paths)
    period = 1  # accruing over [T_{period-1}, T_period]
    rate = np.broadcast_to(_period_rate(deltas[0], params.forwards[0]), (n_paths,)).copy()

    cs_lookup = {round(t, 9): i for i, t in enumerate(cs_years)}
    states = np.empty((n_paths, cs_years.size, k_fwd))
    growth_out = np.empty((n_paths, cs_years.size))
    resets = tenors[:-1]

    def record(t):
        i = cs_lookup.get(round(float(t), 9))
        if i is not None:
            states[:, i, :] = np.exp(log_l)
            growth_out[:, i] = growth

    for step in range(n_steps):
        ta, tb = sim_times[step], sim_times[step + 1]
        dt = tb - ta
        shocks = draws[:, step, :] @ chol.T
        log_l = _step_log_forwards(log_l, ta, dt, shocks, params, rho_tri)
        if tb <= t1_years + 1e-12 and params.p_drift_adjust is not None:
            alive = resets > ta + 1e-12
            log_l = np.where(
                alive, log_l + np.asarray(params.p_drift_adjust, float) * dt, log_l
            )

        growth = growth * np.exp(rate * dt)
        # crossing a tenor date re-fixes the accrual rate at the new front forward
        hit = np.nonzero(np.abs(tenors - tb) <= 1e-12)[0]
        if hit.size and hit[0] >= period and hit[0] < k_fwd:
            period = int(hit[0]) + 1
            rate = _period_rate(deltas[period - 1], np.exp(log_l[:, period - 1]))
        record(tb)

    return PathSet(
        times=cs_days,
        states=states,
        growth=growth_out,
        t1=grid.t1,
        seed=seed,
        extra={
            "model": "lfm",
            "tenors_years": tenors.copy(),
            "deltas": deltas.copy(),
            "forwards0": params.forwards.copy(),
            "t1_years": t1_years,
        },
    )


def resimulate_curves(
    params: LfmParams,
    curves: np.ndarray,
    start_years: float,
    end_years: float,
    n_inner: int,
    seed: int,
    substep_years: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Risk-neutral continuation of forward curves from ``start_years``.

    Each of the B input curves is continued by ``n_inner`` fresh paths to
    ``end_years`` (a tenor date).  Returns the terminal curves
    (B * n_inner, K) ordered outer-major and the pathwise discount factors
    D(start, end) from the rolling account.  Used by nested revaluation and
    by bump-and-revalue pricing of curve instruments.
    """
    curves = np.atleast_2d(np.asarray(curves, dtype=float))
    b, k_fwd = curves.shape
    tenors = params.tenors
    deltas = params.deltas
    if np.abs(tenors - end_years).min() > 1e-9:
        raise GridTenorMismatch(f"end time {end_years}y is not a tenor date")

    key = {start_years, end_years}
    key.update(t for t in tenors if start_years + 1e-12 < t < end_years - 1e-12)
    key_times = np.array(sorted(key))
    if substep_years is not None:
        nodes = [key_times[0]]
        for a, bb in zip(key_times[:-1], key_times[1:]):
            pieces = max(1, int(np.ceil((bb - a) / substep_years - 1e-12)))
            nodes.extend(a + (bb - a) * (i + 1) / pieces for i in range(pieces))
        sim_times = np.array(nodes)
    else:
        sim_times = key_times
    n_steps = sim_times.size - 1

    work = np.repeat(curves, n_inner, axis=0)
    log_l = np.log(work)
    rho = params.correlation().entries
    rho_tri = np.where(np.arange(k_fwd)[:, None] <= np.arange(k_fwd)[None, :], rho, 0.0)
    chol = cholesky(params.correlation()).entries
    draws = chunked_normals(seed, b * n_inner, n_steps * k_fwd).reshape(
        b * n_inner, n_steps, k_fwd
    )

    period = int(np.searchsorted(tenors, start_years + 1e-12))  # accrual period index
    period = max(period, 1)
    growth = np.ones(b * n_inner)
    rate = _period_rate(deltas[period - 1], work[:, period - 1])
    for step in range(n_steps):
        ta, tb = sim_times[step], sim_times[step + 1]
        dt = tb - ta
        shocks = draws[:, step, :] @ chol.T
        log_l = _step_log_forwards(log_l, ta, dt, shocks, params, rho_tri)
        growth = growth * np.exp(rate * dt)
        hit = np.nonzero(np.abs(tenors - tb) <= 1e-12)[0]
        if hit.size and hit[0] >= period and hit[0] < k_fwd:
            period = int(hit[0]) + 1
            rate = _period_rate(deltas[period - 1], np.exp(log_l[:, period - 1]))
    return np.exp(log_l), 1.0 / growth


def zcb_prices(paths: PathSet, cs_index: int) -> np.ndarray:
    """P(t, T_j) for all tenor dates T_j >= t at one cross-section; NaN for T_j < t.

    Between tenor dates the stub accrues at the frozen front-period fixing,
    consistent with the pathwise rolling account.
    """
    tenors = paths.extra["tenors_years"]
    deltas = paths.extra["deltas"]
    t = paths.times[cs_index] / DAYS_PER_YEAR
    curve = paths.state(cs_index)  # (N, K) forwards, dead ones frozen
    n, k_fwd = curve.shape
    p = np.full((n, tenors.size), np.nan)
    on_tenor = np.abs(tenors - t) <= 1e-9
    if on_tenor.any():
        m = int(np.nonzero(on_tenor)[0][0])
        stub = np.ones(n)
        start = m + 1
        p[:, m] = 1.0
    else:
        m = int(np.searchsorted(tenors, t))  # t in (T_{m-1}, T_m)
        rate = _period_rate(deltas[m - 1], curve[:, m - 1])
        stub = np.exp(-rate * (tenors[m] - t))
        start = m + 1
        p[:, m] = stub
    acc = stub.copy()
    for j in range(start, tenors.size):
        acc = acc / (1.0 + deltas[j - 1] * curve[:, j - 1])
        p[:, j] = acc
    return p


def initial_zcb(params: LfmParams) -> np.ndarray:
    """P(0, T_j) for j = 0..K from the initial forward curve."""
    acc = np.concatenate([[1.0], np.cumprod(1.0 / (1.0 + params.deltas * params.forwards))])
    return acc


def atm_swap_rate(params: LfmParams, start_index: int, end_index: int | None = None) -> float:
    """Forward par swap rate for the swap spanning [T_start, T_end]."""
    end_index = params.n_forwards if end_index is None else end_index
    p = initial_zcb(params)
    annuity = float((params.deltas[start_index:end_index] * p[start_index + 1 : end_index + 1]).sum())
    return float((p[start_index] - p[end_index]) / annuity)
