"""Overdamped ratchet ``dx = -b(t, x) dt + dW`` on the space-time torus.

The periodized density ``w(t, x)`` solves

    d_t w = d_x (w_x / 2 + b w),

and the asymptotic velocity is ``I(b) = -(1/T) int int b w dt dx``.
Everything is done on the double Fourier table of ``w``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .drift import SpaceTimeDrift, DriftError
from .results import SolverError, InstabilityError, VelocityEstimate
from .spectral import SolverConfig, TorusField

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class StationaryDensity:
    field: TorusField
    residual: float
    condition: float
    min_value: float

    @property
    def T(self):
        return self.field.T

    @property
    def L(self):
        return self.field.L

    def mass(self, p: int = 0) -> float:
        """``int_0^L w(t, x) dx`` projected on time mode p."""
        return (self.field.L * self.field.coeff(p, 0)).real


def _index(P, Q):
    def idx(p, q):
        return (p + P) * (2 * Q + 1) + (q + Q)
    return idx


def generator_matrix(b: SpaceTimeDrift, p_max: int, q_max: int) -> sp.csr_matrix:
    """Galerkin matrix of ``w -> -w_t + w_xx/2 + (b w)_x`` on |p| <= p_max, |q| <= q_max."""
    P, Q = p_max, q_max
    T, L = b.T, b.L
    nq = 2 * Q + 1
    n = (2 * P + 1) * nq
    pp, qq = np.meshgrid(np.arange(-P, P + 1), np.arange(-Q, Q + 1), indexing="ij")
    pp, qq = pp.ravel(), qq.ravel()
    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [-1j * TWO_PI * pp / T - 2 * math.pi ** 2 * qq ** 2 / L ** 2]
    for dp, dq, c in b.modes():
        sp_ = pp - dp
        sq = qq - dq
        ok = (np.abs(sp_) <= P) & (np.abs(sq) <= Q)
        r = np.nonzero(ok)[0]
        rows.append(r)
        cols.append((sp_[ok] + P) * nq + (sq[ok] + Q))
        vals.append(1j * TWO_PI * qq[ok] / L * c)
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


def _check_truncation(b: SpaceTimeDrift, cfg: SolverConfig):
    pm, qm = b.max_mode()
    if pm > cfg.p_max or qm > cfg.q_max:
        raise DriftError(f"drift modes up to ({pm}, {qm}) exceed truncation ({cfg.p_max}, {cfg.q_max})")


def _condest(A: sp.spmatrix, lu) -> float:
    try:
        inv_norm = spla.onenormest(spla.LinearOperator(A.shape, matvec=lu.solve,
                                                       rmatvec=lambda y: lu.solve(y, trans="H"),
                                                       dtype=complex))
        return float(spla.norm(A, 1) * inv_norm)
    except Exception:  # estimator failures are not fatal
        return float("nan")


def solve_stationary(b: SpaceTimeDrift, cfg: SolverConfig | None = None, check: bool = True) -> StationaryDensity:
    """Stationary space-time periodic density with ``int_0^L w(t, .) = 1``."""
    cfg = cfg or SolverConfig()
    _check_truncation(b, cfg)
    P, Q = cfg.p_max, cfg.q_max
    A = generator_matrix(b, P, Q)
    i0 = P * (2 * Q + 1) + Q
    B = A.tolil()
    B[i0, :] = 0
    B[i0, i0] = 1.0
    B = B.tocsc()
    rhs = np.zeros(A.shape[0], complex)
    rhs[i0] = 1.0 / b.L
    try:
        lu = spla.splu(B)
    except RuntimeError as exc:
        raise SolverError("singular truncated generator", truncation=(P, Q)) from exc
    w = lu.solve(rhs)
    residual = float(np.max(np.abs(A @ w)))
    cond = _condest(B, lu)
    table = w.reshape(2 * P + 1, 2 * Q + 1)
    table = 0.5 * (table + np.conj(table[::-1, ::-1]))
    field = TorusField(table, b.T, b.L)
    wmin = field.grid_min(cfg.oversample)
    if check:
        if not np.isfinite(residual) or residual > cfg.residual_tol:
            raise SolverError(f"stationary residual {residual:.3e} above tolerance",
                              residual=residual, condition=cond)
        if wmin < -cfg.positivity_tol:
            raise SolverError(f"density negative ({wmin:.3e}) on validation grid; increase truncation",
                              min_value=wmin)
    return StationaryDensity(field, residual, cond, wmin)


def _pair_sum(b: TorusField, w: TorusField) -> complex:
    """``sum_{p,q} b_{p,q} w_{-p,-q}`` over the common mode box."""
    P, Q = min(b.p_max, w.p_max), min(b.q_max, w.q_max)
    bb = b.resized(P, Q).coeffs
    ww = w.resized(P, Q).coeffs
    return complex(np.sum(bb * ww[::-1, ::-1]))


def velocity(b: SpaceTimeDrift, w: StationaryDensity) -> VelocityEstimate:
    """``I(b) = -(1/T) int int b w = -L sum b_{p,q} w_{-p,-q}``.

    The error bound is the contribution one would get from the outermost
    shell of the density table, a crude proxy for truncation error.
    """
    f = w.field
    val = -f.L * _pair_sum(b, f).real
    c = np.abs(f.coeffs)
    shell = max(float(c[0].max()), float(c[-1].max()), float(c[:, 0].max()), float(c[:, -1].max()))
    bound = f.L * float(np.sum(np.abs(b.coeffs))) * shell + w.residual
    return VelocityEstimate(val, bound, math.inf, "spectral",
                            {"residual": w.residual, "condition": w.condition,
                             "truncation": (f.p_max, f.q_max), "min_density": w.min_value})


def stationary_velocity(b: SpaceTimeDrift, cfg: SolverConfig | None = None) -> VelocityEstimate:
    return velocity(b, solve_stationary(b, cfg))


# ---------------------------------------------------------------------------
# time evolution

@dataclass(frozen=True)
class EvolutionState:
    """Spatial Fourier coefficients of ``u_per(t, .)`` at time ``t``."""

    coeffs: np.ndarray
    L: float
    t: float = 0.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim != 1 or c.size % 2 == 0:
            raise ValueError("state coefficients must be 1-D of odd length")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def q_max(self):
        return (self.coeffs.size - 1) // 2

    @property
    def mass(self) -> float:
        return self.L * self.coeffs[self.q_max].real

    @classmethod
    def uniform(cls, L: float, q_max: int):
        c = np.zeros(2 * q_max + 1, complex)
        c[q_max] = 1.0 / L
        return cls(c, L)

    @classmethod
    def from_density(cls, w: StationaryDensity | TorusField, t: float = 0.0, q_max: int | None = None):
        f = w.field if isinstance(w, StationaryDensity) else w
        P = f.p_max
        phase = np.exp(1j * TWO_PI * np.arange(-P, P + 1) * t / f.T)
        c = phase @ f.coeffs
        st = cls(c, f.L, t)
        return st if q_max is None else st.resized(q_max)

    @classmethod
    def from_function(cls, fn, L: float, q_max: int, t: float = 0.0):
        n = 4 * (2 * q_max + 1)
        x = np.arange(n) * L / n
        spec = np.fft.fft(fn(x)) / n
        return cls(spec[np.arange(-q_max, q_max + 1) % n], L, t)

    def resized(self, q_max: int):
        Q = self.q_max
        out = np.zeros(2 * q_max + 1, complex)
        k = min(Q, q_max)
        out[q_max - k:q_max + k + 1] = self.coeffs[Q - k:Q + k + 1]
        return EvolutionState(out, self.L, self.t)

    def __call__(self, x):
        q = np.arange(-self.q_max, self.q_max + 1)
        return (np.exp(2j * np.pi * np.multiply.outer(np.asarray(x, float), q) / self.L) @ self.coeffs).real


@dataclass(frozen=True)
class EvolutionResult:
    state: EvolutionState
    mean_velocity: float
    elapsed: float
    mass_drift: float


def evolve(u0: EvolutionState, b: SpaceTimeDrift, horizon: float, dt: float | None = None,
           q_max: int | None = None) -> EvolutionResult:
    """Integrate ``u_t = (u_x/2 + b u)_x`` with integrating-factor RK4.

    Diffusion is applied exactly in Fourier space; the drift term is
    explicit. The functional ``-int b u dx`` is integrated alongside by the
    same RK4 stages, and its time average over ``[t0, t0 + horizon]`` is
    returned as ``mean_velocity``.
    """
    if not math.isclose(u0.L, b.L):
        raise ValueError("state and drift have different space periods")
    dt = b.T / 512 if dt is None else dt
    if not dt > 0 or not horizon > 0:
        raise ValueError("dt and horizon must be positive")
    Q = max(u0.q_max, b.q_max) if q_max is None else q_max
    if Q < b.q_max:
        raise ValueError("state truncation must contain the drift modes")
    u = u0.resized(Q).coeffs.copy()
    L, T = b.L, b.T
    P_b, Q_b = b.p_max, b.q_max
    q = np.arange(-Q, Q + 1)
    ik = 1j * TWO_PI * q / L
    lam = -2 * math.pi ** 2 * q ** 2 / L ** 2
    n_steps = max(1, int(round(horizon / dt)))
    dt = horizon / n_steps
    E = np.exp(lam * dt / 2)
    E2 = E * E
    omega = 1j * TWO_PI * np.arange(-P_b, P_b + 1) / T
    B = b.coeffs

    def drift_at(t):
        return np.exp(omega * t) @ B                     # b_q(t), length 2Q_b+1

    def rhs(bq, v):
        full = np.convolve(bq, v)                        # modes -(Q+Q_b) .. Q+Q_b
        conv = full[Q_b:Q_b + 2 * Q + 1]
        return ik * conv

    def flux(bq, v):
        # -L sum_q b_q v_{-q}
        return -L * float(np.dot(bq, v[Q + Q_b:Q - Q_b - 1 if Q > Q_b else None:-1]).real)

    m0 = L * u[Q].real
    t0 = u0.t
    acc = 0.0
    for j in range(n_steps):
        t = t0 + j * dt
        b0, bh, b1 = drift_at(t), drift_at(t + dt / 2), drift_at(t + dt)
        k1 = rhs(b0, u)
        u2 = E * (u + 0.5 * dt * k1)
        k2 = rhs(bh, u2)
        u3 = E * u + 0.5 * dt * k2
        k3 = rhs(bh, u3)
        u4 = E2 * u + dt * E * k3
        k4 = rhs(b1, u4)
        acc += dt / 6 * (flux(b0, u) + 2 * flux(bh, u2) + 2 * flux(bh, u3) + flux(b1, u4))
        u = E2 * u + dt / 6 * (E2 * k1 + 2 * E * (k2 + k3) + k4)
        if not np.all(np.isfinite(u)):
            raise InstabilityError(f"evolution blew up at t={t:.4g}; reduce dt")
    mass_drift = abs(L * u[Q].real - m0)
    if mass_drift > 1e-8:
        raise InstabilityError(f"mass drifted by {mass_drift:.3e}")
    state = EvolutionState(u, L, t0 + horizon)
    return EvolutionResult(state, acc / horizon, horizon, mass_drift)


# ---------------------------------------------------------------------------
# perturbation formulas

def first_order_response(B: SpaceTimeDrift) -> TorusField:
    """First-order density correction around ``w0 = 1/L``:
    ``w1_{p,q} = (i pi q / L^2) / (i pi p / T + pi^2 q^2 / L^2) B_{p,q}``."""
    T, L = B.T, B.L
    P, Q = B.p_max, B.q_max
    p = np.arange(-P, P + 1)[:, None]
    q = np.arange(-Q, Q + 1)[None, :]
    den = 1j * math.pi * p / T + math.pi ** 2 * q ** 2 / L ** 2
    num = 1j * math.pi * q / L ** 2 * np.ones_like(den)
    out = np.zeros_like(den)
    nz = q != 0
    nz = np.broadcast_to(nz, den.shape)
    out[nz] = num[nz] / den[nz] * B.coeffs[nz]
    return TorusField(out, T, L)


def second_variation(B: SpaceTimeDrift) -> float:
    """Second-order Taylor coefficient of ``eps -> I(eps B)``:

        -sum_{p,q} p q L^3 T / (p^2 L^4 + pi^2 q^4 T^2) |B_{p,q}|^2.
    """
    T, L = B.T, B.L
    total = 0.0
    for p, q, c in B.modes():
        if p == 0 or q == 0:
            continue
        total -= p * q * L ** 3 * T / (p * p * L ** 4 + math.pi ** 2 * q ** 4 * T ** 2) * abs(c) ** 2
    return total


@dataclass(frozen=True)
class MixedZero:
    alpha: float
    drift: SpaceTimeDrift
    velocity: float
    iterations: int


def find_mixed_zero(b1: SpaceTimeDrift, b2: SpaceTimeDrift, cfg: SolverConfig | None = None,
                    tol: float = 1e-8, max_iter: int = 200) -> MixedZero:
    """Bisection for alpha in (0, 1) with ``I((1 - alpha) b1 + alpha b2) = 0``."""
    cfg = cfg or SolverConfig()

    def mix(a):
        return SpaceTimeDrift(((1 - a) * b1 + a * b2).coeffs, b1.T, b1.L)

    def phi(a):
        return stationary_velocity(mix(a), cfg).value

    lo, hi = 0.0, 1.0
    f_lo, f_hi = phi(lo), phi(hi)
    if f_lo * f_hi > 0 or (f_lo == 0 and f_hi == 0):
        raise ValueError(f"endpoint velocities have the same sign ({f_lo:.3e}, {f_hi:.3e})")
    if f_lo == 0:
        return MixedZero(0.0, mix(0.0), 0.0, 0)
    if f_hi == 0:
        return MixedZero(1.0, mix(1.0), 0.0, 0)
    mid, f_mid = 0.5, phi(0.5)
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        f_mid = phi(mid)
        if abs(f_mid) <= tol or hi - lo < 4 * np.finfo(float).eps:
            return MixedZero(mid, mix(mid), f_mid, it)
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    raise RuntimeError("bisection did not converge")
