"""Two-state switching diffusion.

Densities ``w1, w2`` on [0, L] solve

    D w_i'' + (b_i w_i)' + (M w)_i = 0,    M = [[-nu1, nu2], [nu1, -nu2]],

with ``int (w1 + w2) = 1``. The particle moves as ``dx = -b_i dt + sqrt(2D) dW``
in state i, so the asymptotic velocity is ``-int (b1 w1 + b2 w2) dx``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .drift import SpaceDrift, TwoStateRates, DriftError
from .results import SolverError, VelocityEstimate
from .spectral import SolverConfig, conv_matrix_1d

TWO_PI = 2.0 * math.pi

# The displacement of the switching diffusion (checked by Monte Carlo)
# carries a minus sign, as in the single-state model.
SIGN_CONVENTION = "displacement: I = -int (b1 w1 + b2 w2) dx"


@dataclass(frozen=True)
class TwoStateDensity:
    w1: np.ndarray
    w2: np.ndarray
    rates: TwoStateRates
    L: float
    residual: float
    min_value: float = float("nan")

    @property
    def q_max(self) -> int:
        return (self.w1.size - 1) // 2

    @property
    def mass(self) -> float:
        Q = self.q_max
        return self.L * (self.w1[Q] + self.w2[Q]).real

    def evaluate(self, x):
        x = np.asarray(x, float)
        q = np.arange(-self.q_max, self.q_max + 1)
        E = np.exp(2j * np.pi * np.multiply.outer(x, q) / self.L)
        return (E @ self.w1).real, (E @ self.w2).real


def _common_L(b1: SpaceDrift, b2: SpaceDrift) -> float:
    if not math.isclose(b1.L, b2.L):
        raise ValueError("the two drifts have different periods")
    return b1.L


def two_state_matrix(b1: SpaceDrift, b2: SpaceDrift, rates: TwoStateRates, q_max: int) -> np.ndarray:
    """Dense Galerkin matrix acting on ``[w1(-Q..Q), w2(-Q..Q)]``."""
    L = _common_L(b1, b2)
    Q = q_max
    n = 2 * Q + 1
    q = np.arange(-Q, Q + 1)
    k = TWO_PI * q / L
    A = np.zeros((2 * n, 2 * n), complex)
    M = rates.M
    for i, b in enumerate((b1, b2)):
        blk = slice(i * n, (i + 1) * n)
        A[blk, blk] += np.diag(-rates.D * k ** 2)
        A[blk, blk] += (1j * k)[:, None] * conv_matrix_1d(b.coeffs, Q, Q)
        for j in range(2):
            A[blk, slice(j * n, (j + 1) * n)] += M[i, j] * np.eye(n)
    return A


def solve_stationary_two_state(b1: SpaceDrift, b2: SpaceDrift, rates: TwoStateRates,
                               cfg: SolverConfig | None = None, check: bool = True) -> TwoStateDensity:
    cfg = cfg or SolverConfig()
    L = _common_L(b1, b2)
    Q = cfg.q_max
    if max(b1.max_mode(), b2.max_mode()) > Q:
        raise DriftError("drift modes exceed the space truncation")
    n = 2 * Q + 1
    A = two_state_matrix(b1, b2, rates, Q)
    B = A.copy()
    r = n + Q                        # state 2, q = 0 row becomes the normalization
    B[r, :] = 0
    B[r, Q] = B[r, n + Q] = 1.0
    rhs = np.zeros(2 * n, complex)
    rhs[r] = 1.0 / L
    cond = np.linalg.cond(B)
    if not np.isfinite(cond) or cond > 1e14:
        raise SolverError("ill-conditioned two-state system", condition=cond)
    w = np.linalg.solve(B, rhs)
    residual = float(np.max(np.abs(A @ w)))
    w1 = 0.5 * (w[:n] + np.conj(w[:n][::-1]))
    w2 = 0.5 * (w[n:] + np.conj(w[n:][::-1]))
    dens = TwoStateDensity(w1, w2, rates, L, residual)
    x = np.arange(cfg.oversample * n) * L / (cfg.oversample * n)
    v1, v2 = dens.evaluate(x)
    wmin = float(min(v1.min(), v2.min()))
    dens = TwoStateDensity(w1, w2, rates, L, residual, wmin)
    if check:
        if residual > cfg.residual_tol:
            raise SolverError(f"two-state residual {residual:.3e} above tolerance", residual=residual)
        if wmin < -cfg.positivity_tol:
            raise SolverError(f"two-state density negative ({wmin:.3e})", min_value=wmin)
    return dens


def _contract(b: SpaceDrift, w: np.ndarray) -> complex:
    """``sum_q b(q) w(-q)``."""
    Qw = (w.size - 1) // 2
    total = 0j
    for q, c in b.modes():
        if abs(q) <= Qw:
            total += c * w[Qw - q]
    return total


def velocity_two_state(b1: SpaceDrift, b2: SpaceDrift, w: TwoStateDensity) -> VelocityEstimate:
    val = -w.L * (_contract(b1, w.w1) + _contract(b2, w.w2)).real
    edge = max(abs(w.w1[0]), abs(w.w1[-1]), abs(w.w2[0]), abs(w.w2[-1]))
    bound = w.L * (np.abs(b1.coeffs).sum() + np.abs(b2.coeffs).sum()) * edge + w.residual
    return VelocityEstimate(val, float(bound), math.inf, "spectral",
                            {"residual": w.residual, "sign_convention": SIGN_CONVENTION,
                             "min_density": w.min_value})


def stationary_velocity_two_state(b1, b2, rates, cfg=None) -> VelocityEstimate:
    return velocity_two_state(b1, b2, solve_stationary_two_state(b1, b2, rates, cfg))


def perturbation_densities(b1: SpaceDrift, b2: SpaceDrift, rates: TwoStateRates, order: int):
    """Density corrections ``w^0 .. w^order`` of ``w(eps b1, eps b2)``.

    Each order solves, mode by mode, the 2x2 system
    ``(-D k^2 + M) w^j(q) = -i k ((b1 w1^{j-1})(q), (b2 w2^{j-1})(q))`` with
    ``w^j(0) = 0`` for j >= 1. The bandwidth grows by the drift bandwidth at
    every order, so no truncation is involved.
    """
    L = _common_L(b1, b2)
    Kb = max(b1.max_mode(), b2.max_mode())
    nu = rates.nu1 + rates.nu2
    w0 = np.zeros((2, 1), complex)
    w0[:, 0] = (rates.nu2 / (L * nu), rates.nu1 / (L * nu))
    out = [w0]
    M = rates.M
    c1, c2 = b1.padded(Kb), b2.padded(Kb)
    for j in range(1, order + 1):
        prev = out[-1]
        Qp = (prev.shape[1] - 1) // 2
        Qn = Qp + Kb
        conv = np.stack([np.convolve(c1, prev[0]), np.convolve(c2, prev[1])])  # modes -Qn..Qn
        cur = np.zeros((2, 2 * Qn + 1), complex)
        for idx in range(2 * Qn + 1):
            q = idx - Qn
            if q == 0:
                continue
            k = TWO_PI * q / L
            A = -rates.D * k * k * np.eye(2) + M
            cur[:, idx] = np.linalg.solve(A, -1j * k * conv[:, idx])
        out.append(cur)
    return out


def perturbation_order(b1: SpaceDrift, b2: SpaceDrift, rates: TwoStateRates, k: int) -> float:
    """Taylor coefficient ``I_k`` of ``eps -> I(eps b1, eps b2)`` (k >= 1)."""
    if k < 1:
        raise ValueError("order must be >= 1")
    L = _common_L(b1, b2)
    w = perturbation_densities(b1, b2, rates, k - 1)[-1]
    return float(-L * (_contract(b1, w[0]) + _contract(b2, w[1])).real)


def third_variation_closed_form(nu1: float, nu2: float) -> float:
    """Closed-form third-order coefficient for ``(cos 2x, cos x)``, L = 2 pi, D = 1,
    in the ``+int (b1 w1 + b2 w2)`` convention; the displacement velocity is
    its negative."""
    if not (nu1 > 0 and nu2 > 0):
        raise ValueError("rates must be positive")
    s = nu1 + nu2
    return -nu1 * nu2 * (nu2 - 2 * nu1 + 1) / (4 * s * (s + 1) ** 2 * (s + 4))
