"""Euler-Maruyama estimates of the asymptotic velocity.

Every path owns a PCG64 stream seeded from ``SeedSequence(seed, spawn_key=(path,))``,
so a path's trajectory depends only on (seed, path index, config). Paths are
processed in blocks (optionally on several threads); per-path displacements
are reduced in path order, so estimates are bit-identical for any thread count.

Noise conventions: the overdamped model uses unit noise (``dx = -b dt + dW``);
Langevin dynamics use ``dv = (-gamma v + F) dt + sigma dW`` with ``sigma = 1``
by default (generator ``(1/2) d_v^2``, matching the Kramers solvers) or
``sigma = sqrt(2 D)`` when ``noise="sqrt2D"``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict
from typing import Callable

import numpy as np
from numba import njit

from .drift import SpaceDrift, SpaceTimeDrift, TwoStateRates
from .results import VelocityEstimate

THREADS_ENV = "RATCHET_THREADS"


@dataclass(frozen=True)
class SdeConfig:
    dt: float | None = None
    horizon: float = 100.0
    n_paths: int = 1000
    seed: int = 0
    burn_in: float = 10.0
    noise: str = "kramers"
    D: float = 1.0
    block_size: int = 512
    chunk_steps: int = 4096
    n_batches: int = 10

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.horizon > self.burn_in >= 0:
            raise ValueError("need horizon > burn_in >= 0")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.noise not in ("kramers", "sqrt2D"):
            raise ValueError("noise must be 'kramers' or 'sqrt2D'")
        if self.block_size < 1 or self.chunk_steps < 1 or self.n_batches < 1:
            raise ValueError("block_size, chunk_steps and n_batches must be positive")

    def with_default_dt(self, time_scale: float) -> "SdeConfig":
        """Fill in ``dt = 1e-3 * time_scale`` when no step was given."""
        return self if self.dt is not None else self.replace(dt=1e-3 * time_scale)

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def burn_steps(self) -> int:
        return int(round(self.burn_in / self.dt))

    def sigma(self) -> float:
        return 1.0 if self.noise == "kramers" else math.sqrt(2.0 * self.D)

    def replace(self, **kw) -> "SdeConfig":
        d = asdict(self)
        d.update(kw)
        return SdeConfig(**d)


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# drift tables: b(t, x) = const + sum_j amp_j cos(w_j t + k_j x + phase_j)

def _cos_table(d: SpaceTimeDrift):
    amp, w, k, ph = [], [], [], []
    const = d.coeff(0, 0).real
    for p, q, c in d.modes():
        if (p, q) == (0, 0) or p < 0 or (p == 0 and q < 0):
            continue
        amp.append(2 * abs(c))
        w.append(2 * math.pi * p / d.T)
        k.append(2 * math.pi * q / d.L)
        ph.append(math.atan2(c.imag, c.real))
    return const, np.array(amp), np.array(w), np.array(k), np.array(ph)


def _space_table(d: SpaceDrift, width: int):
    amp, k, ph = np.zeros(width), np.zeros(width), np.zeros(width)
    j = 0
    for q, c in d.modes():
        if q <= 0:
            continue
        amp[j], k[j], ph[j] = 2 * abs(c), 2 * math.pi * q / d.L, math.atan2(c.imag, c.real)
        j += 1
    return d.mean, amp, k, ph


@njit(cache=True, nogil=True)
def _eval_td(t, x, const, amp, w, k, ph):
    s = const
    for j in range(amp.size):
        s += amp[j] * math.cos(w[j] * t + k[j] * x + ph[j])
    return s


@njit(cache=True, nogil=True)
def _eval_sd(x, const, amp, k, ph):
    s = const
    for j in range(amp.size):
        s += amp[j] * math.cos(k[j] * x + ph[j])
    return s


@njit(cache=True, nogil=True)
def _overdamped_kernel(x, g0, dt, Z, const, amp, w, k, ph, sigma, rec_idx, rec):
    n, m = Z.shape
    sq = sigma * math.sqrt(dt)
    for i in range(n):
        xi = x[i]
        ptr = 0
        while ptr < rec_idx.size and rec_idx[ptr] <= g0:
            ptr += 1
        for j in range(m):
            g = g0 + j
            b = _eval_td(g * dt, xi, const, amp, w, k, ph)
            xi += -b * dt + sq * Z[i, j]
            if ptr < rec_idx.size and rec_idx[ptr] == g + 1:
                rec[i, ptr] = xi
                ptr += 1
        x[i] = xi


@njit(cache=True, nogil=True)
def _langevin_kernel(x, v, g0, dt, Z, gamma, const, amp, w, k, ph, sigma, burn, v2, rec_idx, rec):
    n, m = Z.shape
    sq = sigma * math.sqrt(dt)
    for i in range(n):
        xi = x[i]
        vi = v[i]
        acc = v2[i]
        ptr = 0
        while ptr < rec_idx.size and rec_idx[ptr] <= g0:
            ptr += 1
        for j in range(m):
            g = g0 + j
            F = _eval_td(g * dt, xi, const, amp, w, k, ph)
            if g >= burn:
                acc += vi * vi * dt
            xi += vi * dt
            vi += (-gamma * vi + F) * dt + sq * Z[i, j]
            if ptr < rec_idx.size and rec_idx[ptr] == g + 1:
                rec[i, ptr] = xi
                ptr += 1
        x[i] = xi
        v[i] = vi
        v2[i] = acc


@njit(cache=True, nogil=True)
def _switching_kernel(x, v, state, clock, g0, dt, Z, E, tabs, rates, kinetic, gamma, sigma,
                      burn, occ, rec_idx, rec):
    """Static drifts per state; ``tabs`` is (2, 4, J): const, amp, k, phase.
    Returns -1 on success or the first path index whose exponential buffer ran out."""
    n, m = Z.shape
    sq = sigma * math.sqrt(dt)
    bad = -1
    for i in range(n):
        xi = x[i]
        vi = v[i]
        s = state[i]
        e = clock[i]
        eptr = 0
        o = occ[i]
        ptr = 0
        while ptr < rec_idx.size and rec_idx[ptr] <= g0:
            ptr += 1
        for j in range(m):
            g = g0 + j
            rem = dt
            push = 0.0
            while True:
                rate = rates[s]
                tau = e / rate
                f = _eval_sd(xi, tabs[s, 0, 0], tabs[s, 1], tabs[s, 2], tabs[s, 3])
                if tau >= rem:
                    e -= rate * rem
                    push += f * rem
                    if g >= burn and s == 0:
                        o += rem
                    break
                push += f * tau
                if g >= burn and s == 0:
                    o += tau
                rem -= tau
                s = 1 - s
                if eptr >= E.shape[1]:
                    bad = i
                    e = 1.0
                else:
                    e = E[i, eptr]
                    eptr += 1
            if kinetic:
                xi += vi * dt
                vi += -gamma * vi * dt + push + sq * Z[i, j]
            else:
                xi += -push + sq * Z[i, j]
            if ptr < rec_idx.size and rec_idx[ptr] == g + 1:
                rec[i, ptr] = xi
                ptr += 1
        x[i] = xi
        v[i] = vi
        state[i] = s
        clock[i] = e
        occ[i] = o
    return bad


# ---------------------------------------------------------------------------
# driver

def _generators(seed: int, start: int, stop: int):
    return [np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(i,))))
            for i in range(start, stop)]


def _record_indices(cfg: SdeConfig) -> np.ndarray:
    b, n = cfg.burn_steps, cfg.n_steps
    idx = np.unique(np.round(np.linspace(b, n, cfg.n_batches + 1)).astype(np.int64))
    return idx


def _run_blocks(cfg: SdeConfig, threads: int | None, block_fn: Callable):
    threads = default_threads() if threads is None else max(1, int(threads))
    starts = list(range(0, cfg.n_paths, cfg.block_size))
    blocks = [(s, min(s + cfg.block_size, cfg.n_paths)) for s in starts]
    if threads == 1 or len(blocks) == 1:
        return [block_fn(a, b) for a, b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda ab: block_fn(*ab), blocks))


def _chunks(cfg: SdeConfig):
    g = 0
    while g < cfg.n_steps:
        m = min(cfg.chunk_steps, cfg.n_steps - g)
        yield g, m
        g += m


def _normals(gens, m, out=None):
    Z = np.empty((len(gens), m)) if out is None or out.shape[1] != m else out
    for r, gen in enumerate(gens):
        gen.standard_normal(out=Z[r])
    return Z


def _estimate(rec: np.ndarray, cfg: SdeConfig, rec_idx: np.ndarray, method: str, extra: dict):
    span = (rec_idx[-1] - rec_idx[0]) * cfg.dt
    disp = rec[:, -1] - rec[:, 0]
    vel = disp / span
    n = vel.size
    mean = float(np.mean(vel))
    se = float(np.std(vel, ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    widths = np.diff(rec_idx) * cfg.dt
    batch = np.mean(np.diff(rec, axis=1), axis=0) / widths
    nb = batch.size
    bse = float(np.std(batch, ddof=1) / math.sqrt(nb)) if nb > 1 else float("nan")
    diag = {"dt": cfg.dt, "horizon": cfg.horizon, "burn_in": cfg.burn_in, "n_paths": n,
            "seed": cfg.seed, "noise": cfg.noise, "batch_means": batch.tolist(),
            "batch_std_error": bse, "displacements": disp}
    diag.update(extra)
    if not math.isfinite(se):
        se = 0.0
    return VelocityEstimate(mean, se, float(n), method, diag)


def simulate_overdamped(b: SpaceTimeDrift, cfg: SdeConfig, threads: int | None = None) -> VelocityEstimate:
    """``dx = -b(t, x) dt + dW``; velocity = mean of (x(H) - x(burn)) / (H - burn)."""
    cfg = cfg.with_default_dt(b.T)
    const, amp, w, k, ph = _cos_table(b)
    rec_idx = _record_indices(cfg)
    sigma = 1.0

    def block(a, z):
        gens = _generators(cfg.seed, a, z)
        x = np.array([g.uniform(0.0, b.L) for g in gens])
        rec = np.empty((z - a, rec_idx.size))
        if rec_idx[0] == 0:
            rec[:, 0] = x
        Z = None
        for g0, m in _chunks(cfg):
            Z = _normals(gens, m, Z)
            _overdamped_kernel(x, g0, cfg.dt, Z, const, amp, w, k, ph, sigma, rec_idx, rec)
        return rec

    rec = np.concatenate(_run_blocks(cfg, threads, block))
    return _estimate(rec, cfg, rec_idx, "montecarlo", {"model": "overdamped"})


def simulate_langevin(F: SpaceTimeDrift, gamma: float, cfg: SdeConfig,
                      threads: int | None = None) -> VelocityEstimate:
    """``dx = v dt, dv = (-gamma v + F) dt + sigma dW``; velocity = time-averaged v.

    ``diagnostics['v2_mean']`` holds the time average of v^2 after burn-in
    with its across-path standard error.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    cfg = cfg.with_default_dt(min(F.T, 1.0 / gamma))
    const, amp, w, k, ph = _cos_table(F)
    rec_idx = _record_indices(cfg)
    sigma = cfg.sigma()
    burn = cfg.burn_steps

    def block(a, z):
        gens = _generators(cfg.seed, a, z)
        x = np.array([g.uniform(0.0, F.L) for g in gens])
        v = np.array([g.normal(0.0, sigma / math.sqrt(2 * gamma)) for g in gens])
        v2 = np.zeros(z - a)
        rec = np.empty((z - a, rec_idx.size))
        if rec_idx[0] == 0:
            rec[:, 0] = x
        Z = None
        for g0, m in _chunks(cfg):
            Z = _normals(gens, m, Z)
            _langevin_kernel(x, v, g0, cfg.dt, Z, gamma, const, amp, w, k, ph, sigma, burn, v2, rec_idx, rec)
        return rec, v2

    out = _run_blocks(cfg, threads, block)
    rec = np.concatenate([r for r, _ in out])
    v2 = np.concatenate([s for _, s in out]) / ((cfg.n_steps - burn) * cfg.dt)
    extra = {"model": "langevin", "gamma": gamma, "sigma": sigma,
             "v2_mean": float(np.mean(v2)),
             "v2_std_error": float(np.std(v2, ddof=1) / math.sqrt(v2.size)) if v2.size > 1 else 0.0}
    return _estimate(rec, cfg, rec_idx, "montecarlo", extra)


def simulate_two_state_switching(d1: SpaceDrift, d2: SpaceDrift, rates: TwoStateRates, cfg: SdeConfig,
                                 kinetic: bool = False, threads: int | None = None) -> VelocityEstimate:
    """Switching diffusion with exact exponential switching times.

    Overdamped: ``dx = -b_s(x) dt + sqrt(2 D) dW`` (D from ``rates``).
    Kinetic: ``dx = v dt, dv = (-gamma v + F_s(x)) dt + sigma dW``.
    State 1 switches to 2 at rate nu1, state 2 to 1 at rate nu2.
    ``diagnostics['occupation_1']`` is the fraction of post-burn-in time in state 1.
    """
    if not math.isclose(d1.L, d2.L):
        raise ValueError("drifts have different periods")
    L = d1.L
    cfg = cfg.with_default_dt(min(1.0, 1.0 / rates.gamma) if kinetic else 1.0)
    width = max(1, d1.max_mode(), d2.max_mode())
    tabs = np.zeros((2, 4, width))
    for s, d in enumerate((d1, d2)):
        const, amp, k, ph = _space_table(d, width)
        tabs[s, 0, :] = const
        tabs[s, 1], tabs[s, 2], tabs[s, 3] = amp, k, ph
    rate_arr = np.array([rates.nu1, rates.nu2])
    gamma = rates.gamma
    sigma = cfg.sigma() if kinetic else math.sqrt(2 * rates.D)
    rec_idx = _record_indices(cfg)
    burn = cfg.burn_steps
    p1 = rates.nu2 / (rates.nu1 + rates.nu2)

    def block(a, z):
        gens = _generators(cfg.seed, a, z)
        n = z - a
        x = np.array([g.uniform(0.0, L) for g in gens])
        v = (np.array([g.normal(0.0, sigma / math.sqrt(2 * gamma)) for g in gens])
             if kinetic else np.zeros(n))
        state = np.array([0 if g.random() < p1 else 1 for g in gens], dtype=np.int64)
        clock = np.array([g.standard_exponential() for g in gens])
        occ = np.zeros(n)
        rec = np.empty((n, rec_idx.size))
        if rec_idx[0] == 0:
            rec[:, 0] = x
        Z = None
        for g0, m in _chunks(cfg):
            Z = _normals(gens, m, Z)
            mean = rate_arr.max() * m * cfg.dt
            K = int(mean + 12 * math.sqrt(mean) + 16)
            E = np.empty((n, K))
            for r, gen in enumerate(gens):
                gen.standard_exponential(out=E[r])
            bad = _switching_kernel(x, v, state, clock, g0, cfg.dt, Z, E, tabs, rate_arr, kinetic,
                                    gamma, sigma, burn, occ, rec_idx, rec)
            if bad >= 0:
                raise RuntimeError(f"switching clock buffer exhausted on path {a + bad}")
        return rec, occ

    out = _run_blocks(cfg, threads, block)
    rec = np.concatenate([r for r, _ in out])
    occ = np.concatenate([o for _, o in out]) / ((cfg.n_steps - burn) * cfg.dt)
    extra = {"model": "two-state-kinetic" if kinetic else "two-state",
             "occupation_1": float(np.mean(occ)),
             "occupation_1_std_error": float(np.std(occ, ddof=1) / math.sqrt(occ.size)) if occ.size > 1 else 0.0,
             "sigma": sigma}
    return _estimate(rec, cfg, rec_idx, "montecarlo", extra)


def write_per_path_csv(path, est: VelocityEstimate):
    """Per-path displacement table (path index, displacement)."""
    import csv
    disp = est.diagnostics["displacements"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "displacement"])
        for i, d in enumerate(disp):
            w.writerow([i, repr(float(d))])
