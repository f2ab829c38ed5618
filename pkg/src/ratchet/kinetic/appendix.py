"""Closed-form perturbation sums for the two-state Kramers model (friction one).

Here ``psi_i = e^{v^2/2} f_i`` is expanded in the orthonormal Hermite
functions ``e_n``; ``Lop = d_v^2 - v^2 + 1`` has eigenvalues ``-2n``. With
``c_p = 2 pi i p / L`` and ``a_p = 2 pi^2 p^2 / L^2`` the ingredients are

* ``delta_m(p) = pi^{1/4} e^{pi^2 p^2/L^2} 2^{-m/2} c_p^m / sqrt(m!)``
  (Gaussian overlap of a shifted Hermite function),
* ``beta_n(q) = pi^{1/4} e^{pi^2 q^2/L^2} 2^{-n/2} c_q^{n-1} (n + a_q) / sqrt(n!)``
  (coefficients of the shifted first-order source),
* the 2x2 resolvent blocks ``(-2n - 2 a_p + 2M)^{-1}``,
* the shifted overlaps ``gamma_{n,m}(r)`` of :func:`ratchet.spectral.gamma_nm`.

All inputs must already be in units where the friction is one (see
:func:`ratchet.kinetic.kramers.appendix_rescale`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..drift import SpaceDrift
from ..spectral import SolverConfig, gamma_nm

BAND_LIMIT = 8


def _check_band(G1: SpaceDrift, G2: SpaceDrift, band_limit: int):
    if not math.isclose(G1.L, G2.L):
        raise ValueError("forces have different periods")
    if max(G1.max_mode(), G2.max_mode()) > band_limit:
        raise ValueError(f"forces must be Fourier polynomials of order <= {band_limit} "
                         "(the sums carry e^{pi^2 p^2/L^2} growth factors)")
    if abs(G1.coeff(0)) > 1e-14 or abs(G2.coeff(0)) > 1e-14:
        raise ValueError("forces must have zero space average")


def _modes(G1: SpaceDrift, G2: SpaceDrift) -> list[int]:
    return sorted({q for q, _ in G1.modes() if q != 0} | {q for q, _ in G2.modes() if q != 0})


def _cp(p, L):
    return 2j * math.pi * p / L


def _ap(p, L):
    return 2 * math.pi ** 2 * p * p / L ** 2


def delta_m(m: int, p: int, L: float) -> complex:
    """``int e^{-v^2/2} e_m(v + 2 pi i p / L) dv``."""
    return (math.pi ** 0.25 * math.exp(math.pi ** 2 * p * p / L ** 2) * 2 ** (-m / 2)
            * _cp(p, L) ** m / math.sqrt(math.factorial(m)))


def beta_n(n: int, q: int, L: float) -> complex:
    """Coefficient of ``e_n`` in the shifted source ``(v - c) e^{-(v - c)^2/2}``, c = 2 pi i q / L."""
    return (math.pi ** 0.25 * math.exp(math.pi ** 2 * q * q / L ** 2) * 2 ** (-n / 2)
            / math.sqrt(math.factorial(n)) * _cp(q, L) ** (n - 1) * (n + _ap(q, L)))


def resolvent_block(n: int, p: int, nu1: float, nu2: float, L: float) -> np.ndarray:
    """``(-2n - 4 pi^2 p^2 / L^2 + 2M)^{-1}`` in closed form."""
    a = n + _ap(p, L)
    nu = nu1 + nu2
    return -np.array([[nu2 + a, nu2], [nu1, nu1 + a]]) / (2 * a * (a + nu))


def source_vector(G1: SpaceDrift, G2: SpaceDrift, q: int, nu1: float, nu2: float) -> np.ndarray:
    """Fourier coefficient ``H(q)`` of the first-order source ``v e^{-v^2/2} H(x)``."""
    nu = nu1 + nu2
    return -4 / (G1.L * nu * math.sqrt(math.pi)) * np.array([nu2 * G1.coeff(q), nu1 * G2.coeff(q)])


def R_even(G1: SpaceDrift, G2: SpaceDrift, n: int, p: int, nu1: float, nu2: float) -> complex:
    """Bilinear form ``R_n(p) = G(-p)^T P_n(p) (nu2 G1(p), nu1 G2(p))``, even in p for real forces."""
    a = n + _ap(p, G1.L)
    g1m, g2m, g1, g2 = G1.coeff(-p), G2.coeff(-p), G1.coeff(p), G2.coeff(p)
    return (g1m * g1 * nu2 * (nu2 + a) + g2m * g2 * nu1 * (nu1 + a)
            + nu1 * nu2 * (g1m * g2 + g2m * g1))


def appendix_I2(G1: SpaceDrift, G2: SpaceDrift, nu1: float, nu2: float, L: float | None = None,
                cfg: SolverConfig | None = None) -> float:
    """Second-order sum ``(2/(L nu)) sum_{n,p} e^{2 a_p} 2^{-n}/n! c_p^{2n-1} R_n(p) / (n + nu + a_p)``.

    It vanishes because ``R_n`` is even and ``c_p^{2n-1}`` is odd in p.
    """
    cfg = cfg or SolverConfig()
    L = G1.L if L is None else L
    _check_band(G1, G2, BAND_LIMIT)
    nu = nu1 + nu2
    total = 0j
    for p in _modes(G1, G2):
        a = _ap(p, L)
        for n in range(cfg.n_max + 1):
            total += (math.exp(2 * math.pi ** 2 * p * p / L ** 2) * 2.0 ** -n / math.factorial(n)
                      * _cp(p, L) ** (2 * n - 1) * R_even(G1, G2, n, p, nu1, nu2) / (n + nu + a))
    return float((2 / (L * nu) * total).real)


@dataclass(frozen=True)
class I3Result:
    value: float
    tail: float
    n_max: int
    imag_residue: float


def _I3_partial(G1, G2, nu1, nu2, L, N):
    """Partial sums over n, m <= N; returns the array ``T[m, n]`` of term totals."""
    nu = nu1 + nu2
    modes = _modes(G1, G2)
    terms = np.zeros((N + 1, N + 1), complex)
    fact = [math.sqrt(math.factorial(k)) for k in range(N + 2)]
    for p in modes:
        ap = _ap(p, L)
        cp = _cp(p, L)
        gm = np.array([G1.coeff(-p), G2.coeff(-p)])
        for q in modes:
            r = p - q
            C = np.array([G1.coeff(r), G2.coeff(r)])
            if not C.any():
                continue
            aq = _ap(q, L)
            cq = _cp(q, L)
            h = np.array([nu2 * G1.coeff(q), nu1 * G2.coeff(q)])
            gam = np.array([[gamma_nm(n, m, r, L) for m in range(N + 1)] for n in range(N + 2)])
            for m in range(N + 1):
                A = np.array([[nu2 + m + ap, nu1], [nu2, nu1 + m + ap]])
                left = A @ gm
                dm = math.exp(math.pi ** 2 * p * p / L ** 2) * 2 ** (-m / 2) * cp ** m / fact[m]
                for n in range(N + 1):
                    B = np.array([[nu2 + n + aq, nu2], [nu1, nu1 + n + aq]])
                    S = left @ (C * (B @ h))
                    K = cq * gam[n, m] - math.sqrt(2 * (n + 1)) * gam[n + 1, m]
                    bn = math.exp(math.pi ** 2 * q * q / L ** 2) * 2 ** (-n / 2) * cq ** (n - 1) / fact[n]
                    terms[m, n] += K * bn * dm * S / ((m + ap) * (m + nu + ap) * (n + nu + aq))
    return terms


def appendix_I3(G1: SpaceDrift, G2: SpaceDrift, nu1: float, nu2: float, L: float | None = None,
                cfg: SolverConfig | None = None, band_limit: int = BAND_LIMIT) -> I3Result:
    """Third-order coefficient of ``eps -> I(eps G1, eps G2)`` at friction one.

    Quadruple sum over Hermite orders n, m <= n_max and Fourier modes p, q
    of the forces. With the two ``pi^{1/4}`` overlap factors pulled out of
    ``delta_m`` and ``beta_n`` the prefactor is ``-2 / (nu1 + nu2)``. The tail
    estimate is the magnitude of all terms with ``max(n, m) > n_max - 4``.
    """
    cfg = cfg or SolverConfig()
    L = G1.L if L is None else L
    _check_band(G1, G2, band_limit)
    N = cfg.n_max
    terms = _I3_partial(G1, G2, nu1, nu2, L, N)
    pref = -2.0 / (nu1 + nu2)
    total = pref * terms.sum()
    k = max(N - 3, 0)
    outer = terms.copy()
    outer[:k, :k] = 0
    tail = abs(pref) * float(np.abs(outer).sum())
    return I3Result(float(total.real), tail, N, float(abs(total.imag)))


def first_order_psi(G1: SpaceDrift, G2: SpaceDrift, nu1: float, nu2: float,
                    n_max: int = 48) -> dict[int, np.ndarray]:
    """First-order coefficients ``a1[q][i, n]`` of ``psi^1`` per Fourier mode.

    Each mode solves ``(Lop - 4 pi i q v / L + 2M) psi^1(q) = v e^{-v^2/2} H(q)``
    directly in the Hermite basis, where ``v`` acts tridiagonally.
    """
    L = G1.L
    _check_band(G1, G2, BAND_LIMIT)
    M = np.array([[-nu1, nu2], [nu1, -nu2]])
    n = np.arange(n_max + 1)
    V = np.diag(np.sqrt(n[1:] / 2), -1) + np.diag(np.sqrt(n[1:] / 2), 1)
    out = {}
    for q in _modes(G1, G2):
        op = (np.kron(np.eye(2), np.diag(-2.0 * n) - 4j * math.pi * q / L * V)
              + np.kron(2 * M, np.eye(n_max + 1)))
        h = source_vector(G1, G2, q, nu1, nu2)
        rhs = np.zeros(2 * (n_max + 1), complex)
        # v e^{-v^2/2} = pi^{1/4} e_1 / sqrt(2)
        rhs[1] = h[0] * math.pi ** 0.25 / math.sqrt(2)
        rhs[n_max + 2] = h[1] * math.pi ** 0.25 / math.sqrt(2)
        out[q] = np.linalg.solve(op, rhs).reshape(2, n_max + 1)
    return out
