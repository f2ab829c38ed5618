"""Hermite-Fourier Galerkin solvers for the Kramers equation.

Single state (position x, velocity v, friction gamma, unit noise)::

    d_t f + v d_x f = d_v(gamma v f) + (1/2) d_v^2 f - F(t, x) d_v f

Two states: the same operator with static forces F_1, F_2 plus the switching
term ``M f`` with ``M = [[-nu1, nu2], [nu1, -nu2]]``.

Velocity dependence is expanded as ``f = sum_n c_n(t, x) phi_n(v)`` with

    phi_n(v) = M(v) He_n(v / s) / sqrt(n!),   M(v) = sqrt(gamma/pi) e^{-gamma v^2},
    s = 1 / sqrt(2 gamma),

on which the velocity operators are tridiagonal:
``OU phi_n = -gamma n phi_n``, ``v phi_n = s (sqrt(n+1) phi_{n+1} + sqrt(n) phi_{n-1})``
and ``d_v phi_n = -sqrt(n+1) phi_{n+1} / s``. The stored coefficients
``a_n = (gamma/pi)^{1/4} c_n`` are those of ``psi = e^{gamma v^2/2} f`` in the
orthonormal functions ``gamma^{1/4} e_n(sqrt(gamma) v)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..drift import SpaceDrift, SpaceTimeDrift, TwoStateRates, DriftError
from ..results import SolverError, VelocityEstimate
from ..spectral import SolverConfig, hermite_e_all

TWO_PI = 2.0 * math.pi


def _sym_factor(gamma: float) -> float:
    return (gamma / math.pi) ** 0.25


def tail_fraction(a: np.ndarray, n_axis: int = 0, last: int = 2) -> float:
    """Norm of the last ``last`` Hermite orders relative to the whole tensor."""
    a = np.moveaxis(np.asarray(a), n_axis, 0)
    total = float(np.sqrt(np.sum(np.abs(a) ** 2)))
    if total == 0.0:
        return 0.0
    return float(np.sqrt(np.sum(np.abs(a[-last:]) ** 2))) / total


# ---------------------------------------------------------------------------
# assembly

@dataclass(frozen=True)
class _Layout:
    n_states: int
    N: int
    P: int
    Q: int

    @property
    def size(self) -> int:
        return self.n_states * (self.N + 1) * (2 * self.P + 1) * (2 * self.Q + 1)

    @property
    def shape(self):
        return (self.n_states, self.N + 1, 2 * self.P + 1, 2 * self.Q + 1)

    def index(self, i, n, p, q):
        return ((i * (self.N + 1) + n) * (2 * self.P + 1) + (p + self.P)) * (2 * self.Q + 1) + (q + self.Q)


def assemble_kinetic(forces, gamma: float, T: float, L: float, lay: _Layout,
                     M: np.ndarray | None = None) -> sp.csr_matrix:
    """Sparse Galerkin matrix of the stationary kinetic operator.

    ``forces`` is a list (one per state) of coefficient tables of shape
    (2P'+1, 2Q'+1) with P' <= lay.P, Q' <= lay.Q.
    """
    s = 1.0 / math.sqrt(2.0 * gamma)
    i_, n_, p_, q_ = np.meshgrid(np.arange(lay.n_states), np.arange(lay.N + 1),
                                 np.arange(-lay.P, lay.P + 1), np.arange(-lay.Q, lay.Q + 1), indexing="ij")
    i_, n_, p_, q_ = (a.ravel() for a in (i_, n_, p_, q_))
    row = np.arange(lay.size)
    kq = TWO_PI * q_ / L
    R, C, V = [row], [row], [-1j * TWO_PI * p_ / T - gamma * n_ + 0j]

    m = n_ >= 1
    R.append(row[m]); C.append(lay.index(i_[m], n_[m] - 1, p_[m], q_[m]))
    V.append(-1j * kq[m] * s * np.sqrt(n_[m]))
    m = n_ < lay.N
    R.append(row[m]); C.append(lay.index(i_[m], n_[m] + 1, p_[m], q_[m]))
    V.append(-1j * kq[m] * s * np.sqrt(n_[m] + 1))

    for i, F in enumerate(forces):
        F = np.asarray(F)
        Pf, Qf = (F.shape[0] - 1) // 2, (F.shape[1] - 1) // 2
        for a, b in zip(*np.nonzero(F)):
            dp, dq, c = a - Pf, b - Qf, F[a, b]
            sp_, sq = p_ - dp, q_ - dq
            m = (i_ == i) & (n_ >= 1) & (np.abs(sp_) <= lay.P) & (np.abs(sq) <= lay.Q)
            R.append(row[m]); C.append(lay.index(i, n_[m] - 1, sp_[m], sq[m]))
            V.append(np.sqrt(n_[m]) / s * c)

    if M is not None:
        for i in range(lay.n_states):
            for j in range(lay.n_states):
                m = i_ == i
                R.append(row[m]); C.append(lay.index(j, n_[m], p_[m], q_[m]))
                V.append(np.full(int(m.sum()), M[i, j], complex))

    A = sp.coo_matrix((np.concatenate(V), (np.concatenate(R), np.concatenate(C))),
                      shape=(lay.size, lay.size)).tocsr()
    A.sum_duplicates()
    return A


def _normalized_system(A: sp.csr_matrix, norm_row: int, norm_cols, L: float):
    B = A.tolil()
    B[norm_row, :] = 0
    for c in norm_cols:
        B[norm_row, c] = 1.0
    rhs = np.zeros(A.shape[0], complex)
    rhs[norm_row] = 1.0 / L
    return B.tocsc(), rhs


def _lu(B):
    try:
        return spla.splu(B)
    except RuntimeError as exc:
        raise SolverError("singular truncated kinetic system") from exc


# ---------------------------------------------------------------------------
# single state

@dataclass(frozen=True)
class KineticDensity:
    """Symmetrized Hermite-Fourier coefficients ``a[n, p, q]``."""

    coeffs: np.ndarray
    gamma: float
    T: float
    L: float
    residual: float = 0.0
    tail: float = 0.0
    min_value: float = float("nan")
    representation: str = "symmetrized"

    @property
    def n_max(self):
        return self.coeffs.shape[0] - 1

    @property
    def p_max(self):
        return (self.coeffs.shape[1] - 1) // 2

    @property
    def q_max(self):
        return (self.coeffs.shape[2] - 1) // 2

    @property
    def moments(self) -> np.ndarray:
        """Coefficients ``c[n, p, q]`` on ``phi_n``; ``c[0]`` is the spatial density."""
        return self.coeffs / _sym_factor(self.gamma)

    def mass(self, p: int = 0) -> float:
        return float((self.L * self.moments[0, p + self.p_max, self.q_max]).real)

    def density(self, t, x, v):
        """Pointwise ``f(t, x, v)`` (broadcast over the three arguments)."""
        t, x, v = np.broadcast_arrays(*(np.asarray(a, float) for a in (t, x, v)))
        c = self.moments
        P, Q = self.p_max, self.q_max
        et = np.exp(2j * np.pi * np.multiply.outer(t, np.arange(-P, P + 1)) / self.T)
        ex = np.exp(2j * np.pi * np.multiply.outer(x, np.arange(-Q, Q + 1)) / self.L)
        cn = np.einsum("...p,npq,...q->n...", et, c, ex)
        phi = _phi_all(self.n_max, v, self.gamma)
        return np.sum(cn * phi, axis=0).real


def _phi_all(N: int, v, gamma: float) -> np.ndarray:
    """``phi_n(v)`` for n <= N, via the orthonormal Hermite functions."""
    v = np.asarray(v, float)
    w = math.sqrt(gamma) * v
    e = hermite_e_all(N, w)
    # phi_n = sqrt(gamma) pi^{-1/4} e^{-w^2/2} e_n(w)
    return math.sqrt(gamma) * math.pi ** -0.25 * np.exp(-0.5 * w * w) * e


def _grid_min(c_sum: np.ndarray, T, L, gamma, oversample=4, v_span=4.0, nv=17) -> float:
    """Minimum of f over a (t, x, v) grid; ``c_sum`` has shape (N+1, 2P+1, 2Q+1)."""
    N = c_sum.shape[0] - 1
    P, Q = (c_sum.shape[1] - 1) // 2, (c_sum.shape[2] - 1) // 2
    nt, nx = oversample * (2 * P + 1), oversample * (2 * Q + 1)
    buf = np.zeros((N + 1, nt, nx), complex)
    for dp in range(-P, P + 1):
        buf[:, dp % nt, np.arange(-Q, Q + 1) % nx] += c_sum[:, dp + P, :]
    cn = (np.fft.ifft2(buf, axes=(1, 2)) * (nt * nx)).real      # (N+1, nt, nx)
    v = np.linspace(-v_span, v_span, nv) / math.sqrt(gamma)
    phi = _phi_all(N, v, gamma)                                   # (N+1, nv)
    f = np.tensordot(phi, cn, axes=(0, 0))                        # (nv, nt, nx)
    return float(min(f.min(), cn[0].min()))


def _check_force(F: SpaceTimeDrift, cfg: SolverConfig):
    pm, qm = F.max_mode()
    if pm > cfg.p_max or qm > cfg.q_max:
        raise DriftError(f"force modes ({pm}, {qm}) exceed truncation ({cfg.p_max}, {cfg.q_max})")


def _single_system(F: SpaceTimeDrift, gamma: float, cfg: SolverConfig):
    lay = _Layout(1, cfg.n_max, cfg.p_max, cfg.q_max)
    A = assemble_kinetic([F.coeffs], gamma, F.T, F.L, lay)
    r0 = lay.index(0, 0, 0, 0)
    return lay, A, r0


def solve_stationary_kramers(F: SpaceTimeDrift, gamma: float = 1.0, cfg: SolverConfig | None = None,
                             check: bool = True) -> KineticDensity:
    """Stationary density of the single-state Kramers equation."""
    cfg = cfg or SolverConfig()
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    _check_force(F, cfg)
    lay, A, r0 = _single_system(F, gamma, cfg)
    B, rhs = _normalized_system(A, r0, [r0], F.L)
    c = _lu(B).solve(rhs)
    residual = float(np.max(np.abs(A @ c)))
    c = c.reshape(lay.shape)[0]
    c = 0.5 * (c + np.conj(c[:, ::-1, ::-1]))
    a = c * _sym_factor(gamma)
    tail = tail_fraction(a)
    fmin = _grid_min(c, F.T, F.L, gamma, cfg.oversample)
    dens = KineticDensity(a, gamma, F.T, F.L, residual, tail, fmin)
    if check:
        _post_checks(dens.residual, tail, fmin, cfg)
    return dens


def _post_checks(residual, tail, fmin, cfg: SolverConfig):
    if not np.isfinite(residual) or residual > cfg.residual_tol:
        raise SolverError(f"kinetic residual {residual:.3e} above tolerance", residual=residual)
    if tail > cfg.tail_tol:
        raise SolverError(f"Hermite tail fraction {tail:.3e} above {cfg.tail_tol:.1e}; raise n_max",
                          tail=tail)
    if fmin < -cfg.positivity_tol:
        raise SolverError(f"kinetic density negative ({fmin:.3e}) on validation grid", min_value=fmin)


def _pair(F: np.ndarray, c0: np.ndarray) -> complex:
    """``sum_{p,q} F_{p,q} c0_{-p,-q}`` over the common box."""
    Pf, Qf = (F.shape[0] - 1) // 2, (F.shape[1] - 1) // 2
    Pc, Qc = (c0.shape[0] - 1) // 2, (c0.shape[1] - 1) // 2
    P, Q = min(Pf, Pc), min(Qf, Qc)
    Fs = F[Pf - P:Pf + P + 1, Qf - Q:Qf + Q + 1]
    cs = c0[Pc - P:Pc + P + 1, Qc - Q:Qc + Q + 1]
    return complex(np.sum(Fs * cs[::-1, ::-1]))


def velocity_kramers(F: SpaceTimeDrift, gamma: float, f: KineticDensity) -> VelocityEstimate:
    """``I = (1/(gamma T)) int int int F f`` with the first-moment value in the diagnostics."""
    c = f.moments
    val = (f.L / gamma * _pair(F.coeffs, c[0])).real
    s = 1.0 / math.sqrt(2 * gamma)
    first = (f.L * s * c[1, f.p_max, f.q_max]).real if f.n_max >= 1 else float("nan")
    bound = abs(val - first) + abs(val) * f.tail + f.residual
    return VelocityEstimate(val, bound, math.inf, "spectral",
                            {"first_moment": first, "tail": f.tail, "residual": f.residual,
                             "truncation": (f.n_max, f.p_max, f.q_max)})


def stationary_velocity_kramers(F, gamma=1.0, cfg=None) -> VelocityEstimate:
    return velocity_kramers(F, gamma, solve_stationary_kramers(F, gamma, cfg))


def kramers_series(F: SpaceTimeDrift, gamma: float, cfg: SolverConfig | None = None, order: int = 3):
    """Taylor coefficients ``[I_1, ..., I_order]`` of ``eps -> I(eps F)``
    from the Galerkin perturbation recursion."""
    cfg = cfg or SolverConfig()
    _check_force(F, cfg)
    lay = _Layout(1, cfg.n_max, cfg.p_max, cfg.q_max)
    A0 = assemble_kinetic([np.zeros((1, 1))], gamma, F.T, F.L, lay)
    A1 = assemble_kinetic([F.coeffs], gamma, F.T, F.L, lay) - A0
    r0 = lay.index(0, 0, 0, 0)
    return _series(A0, A1, r0, [r0], F.L, lay, order,
                   lambda c: (F.L / gamma * _pair(F.coeffs, c.reshape(lay.shape)[0, 0])).real)


def _series(A0, A1, r0, norm_cols, L, lay, order, functional):
    B0, rhs = _normalized_system(A0, r0, norm_cols, L)
    lu = _lu(B0)
    A1 = A1.tolil()
    A1[r0, :] = 0
    A1 = A1.tocsr()
    c = lu.solve(rhs)
    out = []
    for _ in range(order):
        out.append(functional(c))
        c = lu.solve(-(A1 @ c))
    return out


# ---------------------------------------------------------------------------
# two states

@dataclass(frozen=True)
class Rescaling:
    """Change of units that sets the friction to one.

    ``t -> gamma t``, ``v -> sqrt(gamma) v``, ``x -> gamma^{3/2} x``; rates
    become ``nu / gamma``, forces ``F / sqrt(gamma)``, the period
    ``L gamma^{3/2}``, and velocities scale as ``I = I' / sqrt(gamma)``.
    """

    gamma: float

    def rates(self, r: TwoStateRates) -> TwoStateRates:
        return TwoStateRates(r.nu1 / self.gamma, r.nu2 / self.gamma, r.D, 1.0)

    def length(self, L: float) -> float:
        return L * self.gamma ** 1.5

    def force(self, F: SpaceDrift) -> SpaceDrift:
        return SpaceDrift(F.coeffs / math.sqrt(self.gamma), self.length(F.L))

    def velocity(self, I_scaled: float) -> float:
        return I_scaled / math.sqrt(self.gamma)

    # inverse maps
    def original_rates(self, r: TwoStateRates) -> TwoStateRates:
        return TwoStateRates(r.nu1 * self.gamma, r.nu2 * self.gamma, r.D, self.gamma)

    def original_force(self, F: SpaceDrift) -> SpaceDrift:
        return SpaceDrift(F.coeffs * math.sqrt(self.gamma), F.L / self.gamma ** 1.5)


def appendix_rescale(F1: SpaceDrift, F2: SpaceDrift, rates: TwoStateRates):
    """Map a two-state Kramers problem to friction one; returns
    ``(F1', F2', rates', Rescaling)``."""
    sc = Rescaling(rates.gamma)
    return sc.force(F1), sc.force(F2), sc.rates(rates), sc


@dataclass(frozen=True)
class TwoStateKineticDensity:
    """Coefficients ``a[i, n, q]`` of ``psi_i`` in the working units
    (friction ``gamma``, period ``L``); ``scale`` maps back to the input units."""

    coeffs: np.ndarray
    gamma: float
    L: float
    rates: TwoStateRates
    residual: float = 0.0
    tail: float = 0.0
    min_value: float = float("nan")
    scale: Rescaling | None = None

    @property
    def n_max(self):
        return self.coeffs.shape[1] - 1

    @property
    def q_max(self):
        return (self.coeffs.shape[2] - 1) // 2

    @property
    def moments(self) -> np.ndarray:
        return self.coeffs / _sym_factor(self.gamma)

    @property
    def mass(self) -> float:
        return float((self.L * self.moments[:, 0, self.q_max].sum()).real)

    @property
    def components(self) -> tuple[KineticDensity, KineticDensity]:
        return tuple(KineticDensity(self.coeffs[i][:, None, :], self.gamma, 1.0, self.L,
                                    self.residual, self.tail, self.min_value)
                     for i in range(2))


def _two_state_system(F1: SpaceDrift, F2: SpaceDrift, rates: TwoStateRates, cfg: SolverConfig,
                      forces_scale: float = 1.0):
    if not math.isclose(F1.L, F2.L):
        raise ValueError("forces have different periods")
    if max(F1.max_mode(), F2.max_mode()) > cfg.q_max:
        raise DriftError("force modes exceed the space truncation")
    lay = _Layout(2, cfg.n_max, 0, cfg.q_max)
    forces = [forces_scale * F1.coeffs[None, :], forces_scale * F2.coeffs[None, :]]
    A = assemble_kinetic(forces, rates.gamma, 1.0, F1.L, lay, rates.M)
    r0 = lay.index(1, 0, 0, 0)
    cols = [lay.index(0, 0, 0, 0), lay.index(1, 0, 0, 0)]
    return lay, A, r0, cols


def _solve_two_state_working(F1, F2, rates, cfg, check, scale):
    lay, A, r0, cols = _two_state_system(F1, F2, rates, cfg)
    B, rhs = _normalized_system(A, r0, cols, F1.L)
    c = _lu(B).solve(rhs)
    residual = float(np.max(np.abs(A @ c)))
    c = c.reshape(lay.shape)[:, :, 0, :]
    c = 0.5 * (c + np.conj(c[:, :, ::-1]))
    a = c * _sym_factor(rates.gamma)
    tail = tail_fraction(a, n_axis=1)
    fmin = min(_grid_min(c[i][:, None, :], 1.0, F1.L, rates.gamma, cfg.oversample) for i in range(2))
    dens = TwoStateKineticDensity(a, rates.gamma, F1.L, rates, residual, tail, fmin, scale)
    if check:
        _post_checks(residual, tail, fmin, cfg)
    return dens


def solve_stationary_kramers_two_state(F1: SpaceDrift, F2: SpaceDrift, rates: TwoStateRates,
                                       cfg: SolverConfig | None = None, rescale: bool = True,
                                       check: bool = True) -> TwoStateKineticDensity:
    """Stationary pair ``(psi_1, psi_2)``; by default solved in units where gamma = 1."""
    cfg = cfg or SolverConfig()
    if rescale:
        G1, G2, r, sc = appendix_rescale(F1, F2, rates)
        return _solve_two_state_working(G1, G2, r, cfg, check, sc)
    return _solve_two_state_working(F1, F2, rates, cfg, check, None)


def velocity_kramers_two_state(F1: SpaceDrift, F2: SpaceDrift, psi: TwoStateKineticDensity) -> VelocityEstimate:
    """``I = (1/gamma) sum_i int int F_i f_i``, reported in the input units."""
    sc = psi.scale
    if sc is not None:
        F1, F2 = sc.force(F1), sc.force(F2)
    c = psi.moments
    Q = psi.q_max
    val = 0.0
    for i, F in enumerate((F1, F2)):
        val += (psi.L / psi.gamma * _pair(F.coeffs[None, :], c[i, 0][None, :])).real
    s = 1.0 / math.sqrt(2 * psi.gamma)
    first = (psi.L * s * c[:, 1, Q].sum()).real
    if sc is not None:
        val, first = sc.velocity(val), sc.velocity(first)
    bound = abs(val - first) + abs(val) * psi.tail + psi.residual
    return VelocityEstimate(val, bound, math.inf, "spectral",
                            {"first_moment": first, "tail": psi.tail, "residual": psi.residual,
                             "rescaled": sc is not None})


def stationary_velocity_kramers_two_state(F1, F2, rates, cfg=None, rescale=True) -> VelocityEstimate:
    return velocity_kramers_two_state(F1, F2, solve_stationary_kramers_two_state(F1, F2, rates, cfg, rescale))


def kramers_two_state_series(F1: SpaceDrift, F2: SpaceDrift, rates: TwoStateRates,
                             cfg: SolverConfig | None = None, order: int = 3):
    """Taylor coefficients ``[I_1, ..., I_order]`` of ``eps -> I(eps F1, eps F2)``
    (input units) from the Galerkin perturbation recursion."""
    cfg = cfg or SolverConfig()
    G1, G2, r, sc = appendix_rescale(F1, F2, rates)
    lay, A, r0, cols = _two_state_system(G1, G2, r, cfg)
    _, A0, _, _ = _two_state_system(G1, G2, r, cfg, forces_scale=0.0)
    Qs = lay.Q

    def functional(c):
        c = c.reshape(lay.shape)[:, 0, 0, :]
        tot = sum(_pair(G.coeffs[None, :], c[i][None, :]) for i, G in enumerate((G1, G2)))
        return sc.velocity((G1.L * tot).real)

    return _series(A0, A - A0, r0, cols, G1.L, lay, order, functional)


def first_order_two_state(F1: SpaceDrift, F2: SpaceDrift, rates: TwoStateRates,
                          cfg: SolverConfig | None = None) -> np.ndarray:
    """First-order correction ``a^1[i, n, q]`` of the symmetrized coefficients
    (gamma = 1 units)."""
    cfg = cfg or SolverConfig()
    G1, G2, r, sc = appendix_rescale(F1, F2, rates)
    lay, A, r0, cols = _two_state_system(G1, G2, r, cfg)
    _, A0, _, _ = _two_state_system(G1, G2, r, cfg, forces_scale=0.0)
    B0, rhs = _normalized_system(A0, r0, cols, G1.L)
    lu = _lu(B0)
    A1 = (A - A0).tolil()
    A1[r0, :] = 0
    c0 = lu.solve(rhs)
    c1 = lu.solve(-(A1.tocsr() @ c0))
    return c1.reshape(lay.shape)[:, :, 0, :] * _sym_factor(1.0)
