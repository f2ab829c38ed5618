"""Second-order response of the Kramers model and the J integral.

With ``alpha = 2 pi^2 q^2 / (gamma^3 L^2)`` and ``beta = 2 pi p / (gamma T)``,
the per-mode kernel is

    Gamma_{p,q} = -(i / (4 pi^2 q)) int_0^{k*} e^{pi q k/(gamma^2 L)}
                  |1 - k/k*|^{alpha + i beta - 1} k dk,   k* = 2 pi q/(gamma L),

which after ``k = k* u`` equals ``-i q J(alpha, beta) / (gamma^2 L^2)`` with

    J(alpha, beta) = int_0^1 e^{alpha u} (1 - u)^{alpha - 1 + i beta} u du.

The endpoint ``u = 1`` is singular for ``alpha < 1`` and the integrand is
huge in the middle for large alpha. Both problems disappear with
``1 - u = e^{-w}``:

    J = int_0^inf exp(alpha (1 - e^{-w} - w)) (1 - e^{-w}) e^{-i beta w} dw,

whose amplitude peaks at ``w ~ 1/sqrt(alpha)`` and decays like e^{-alpha w}.
The oscillatory factor is handled by QUADPACK's sine/cosine weight rule.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from ..drift import SpaceTimeDrift


@dataclass(frozen=True)
class GammaValue:
    p: int
    q: int
    value: complex

    @property
    def symmetric_part(self) -> float:
        """``(Gamma_{p,q} + Gamma_{-p,-q}) / 2``, which is real."""
        return self.value.real


def _amplitude(alpha: float):
    def g(w):
        one_minus = -math.expm1(-w)
        return math.exp(alpha * (one_minus - w)) * one_minus
    return g


def J_integral(alpha: float, beta: float, epsabs: float = 1e-13, epsrel: float = 1e-11) -> complex:
    """``J(alpha, beta)`` by adaptive quadrature in the exponential variable."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    g = _amplitude(alpha)
    # the amplitude is below exp(-alpha (w - 1)), i.e. < 1e-20, past w_end
    w_end = 1.0 + 46.0 / alpha
    kw = dict(epsabs=epsabs, epsrel=epsrel, limit=500)
    if beta == 0.0:
        re, _ = integrate.quad(g, 0.0, w_end, **kw)
        return complex(re, 0.0)
    re, _ = integrate.quad(g, 0.0, w_end, weight="cos", wvar=abs(beta), **kw)
    im, _ = integrate.quad(g, 0.0, w_end, weight="sin", wvar=abs(beta), **kw)
    return complex(re, -math.copysign(im, beta))


def gamma_params(p: int, q: int, gamma: float, T: float, L: float) -> tuple[float, float]:
    alpha = 2 * math.pi ** 2 * q * q / (gamma ** 3 * L * L)
    beta = 2 * math.pi * p / (gamma * T)
    return alpha, beta


def gamma_pq(p: int, q: int, gamma: float = 1.0, T: float = 1.0, L: float = 1.0) -> GammaValue:
    """Per-mode kernel ``Gamma_{p,q}`` (q != 0)."""
    if q == 0:
        raise ValueError("Gamma_{p,q} is defined for q != 0 only")
    if not (gamma > 0 and T > 0 and L > 0):
        raise ValueError("gamma, T and L must be positive")
    alpha, beta = gamma_params(p, q, gamma, T, L)
    J = J_integral(alpha, beta)
    return GammaValue(p, q, -1j * q * J / (gamma ** 2 * L ** 2))


def gamma_table(G: SpaceTimeDrift, gamma: float = 1.0) -> list[GammaValue]:
    return [gamma_pq(p, q, gamma, G.T, G.L) for p, q, _ in G.modes() if q != 0]


def kramers_second_order(G: SpaceTimeDrift, gamma: float = 1.0) -> float:
    """Second-order coefficient ``I_2`` of ``eps -> I(eps G)`` in the Kramers model:

        I_2 = (2 pi L / gamma) sum_{p,q} |G_{p,q}|^2 Re Gamma_{p,q}.
    """
    total = 0.0
    warned = False
    for p, q, c in G.modes():
        if q == 0:
            if p != 0 and not warned:
                warnings.warn("force modes with q = 0 contribute nothing at second order", stacklevel=2)
                warned = True
            continue
        if p == 0:
            continue   # symmetric part vanishes identically
        total += abs(c) ** 2 * gamma_pq(p, q, gamma, G.T, G.L).symmetric_part
    return 2 * math.pi * G.L / gamma * total


def steepest_descent_J(alpha: float, beta: float) -> tuple[complex, float]:
    """Return ``J(alpha, beta)`` and the leading large-alpha term of ``Im J``.

    Near ``u = 0`` the integrand behaves like ``u e^{-alpha u^2/2} e^{-i beta u}``
    which gives ``Im J ~ -beta sqrt(pi/2) alpha^{-3/2}``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    J = J_integral(alpha, beta)
    return J, -beta * math.sqrt(math.pi / 2) * alpha ** -1.5


def gamma_csv(G: SpaceTimeDrift, gamma: float = 1.0) -> str:
    """Per-mode Gamma table as CSV text (p, q, Re, Im, symmetric part)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["p", "q", "gamma_re", "gamma_im", "symmetric_part"])
    for gv in gamma_table(G, gamma):
        w.writerow([gv.p, gv.q, repr(gv.value.real), repr(gv.value.imag), repr(gv.symmetric_part)])
    return buf.getvalue()
