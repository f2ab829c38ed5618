"""Basis functions and coefficient-space arithmetic shared by the solvers.

Space-time periodic fields are stored as full tables of complex Fourier
coefficients ``c[p + P, q + Q]`` for the expansion

    f(t, x) = sum_{p, q} c[p, q] exp(2 pi i p t / T) exp(2 pi i q x / L).

Velocity-space dependence uses the normalized Hermite functions

    e_n(v) = 2^{-n/2} pi^{-1/4} (n!)^{-1/2} H_n(v) exp(-v^2 / 2),

which are the eigenfunctions of ``d^2/dv^2 - v^2 + 1`` with eigenvalues
``-2n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

N_MAX_HARD = 512


@dataclass(frozen=True)
class SolverConfig:
    """Truncation and tolerance settings for the Galerkin solvers.

    ``p_max`` and ``q_max`` bound the time and space Fourier modes, ``n_max``
    the Hermite order of the kinetic solvers.
    """

    p_max: int = 8
    q_max: int = 16
    n_max: int = 48
    residual_tol: float = 1e-9
    positivity_tol: float = 1e-10
    tail_tol: float = 1e-6
    oversample: int = 4

    def __post_init__(self):
        if self.p_max < 0 or self.q_max < 0 or self.n_max < 1:
            raise ValueError("truncation parameters must be non-negative (n_max >= 1)")
        if self.n_max > N_MAX_HARD:
            raise ValueError(f"n_max={self.n_max} exceeds the hard cap {N_MAX_HARD}")

    def replace(self, **changes) -> "SolverConfig":
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(changes)
        return SolverConfig(**kw)


# ---------------------------------------------------------------------------
# Hermite functions and Laguerre polynomials
# ---------------------------------------------------------------------------

def hermite_e_all(n_max: int, v) -> np.ndarray:
    """Return ``[e_0(v), ..., e_{n_max}(v)]`` stacked along axis 0.

    Uses the recurrence on the normalized functions,
    ``e_{n+1} = (sqrt(2) v e_n - sqrt(n) e_{n-1}) / sqrt(n+1)``,
    so no factorial or raw Hermite polynomial is ever formed. Complex
    arguments are accepted (needed for shifted evaluations).
    """
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    if n_max > N_MAX_HARD:
        raise ValueError(f"Hermite order {n_max} exceeds the hard cap {N_MAX_HARD}")
    v = np.asarray(v)
    dtype = np.result_type(v.dtype, np.float64)
    out = np.empty((n_max + 1,) + v.shape, dtype=dtype)
    out[0] = np.pi ** -0.25 * np.exp(-0.5 * v * v)
    if n_max >= 1:
        out[1] = math.sqrt(2.0) * v * out[0]
    for n in range(1, n_max):
        out[n + 1] = (math.sqrt(2.0) * v * out[n] - math.sqrt(n) * out[n - 1]) / math.sqrt(n + 1)
    return out


def hermite_e(n: int, v):
    """Normalized Hermite function ``e_n(v)``."""
    vals = hermite_e_all(n, v)[n]
    return vals.item() if np.ndim(vals) == 0 else vals


def hermite_e_deriv_all(n_max: int, v) -> np.ndarray:
    """Derivatives ``e_n'(v)`` for n <= n_max via the ladder relation
    ``e_n' = sqrt(n/2) e_{n-1} - sqrt((n+1)/2) e_{n+1}``."""
    e = hermite_e_all(n_max + 1, v)
    d = np.empty_like(e[:-1])
    d[0] = -math.sqrt(0.5) * e[1]
    for n in range(1, n_max + 1):
        d[n] = math.sqrt(n / 2.0) * e[n - 1] - math.sqrt((n + 1) / 2.0) * e[n + 1]
    return d


def laguerre(m: int, s: int, x):
    """Generalized Laguerre polynomial ``L_m^s(x)`` by three-term recurrence."""
    if m < 0 or s < 0:
        raise ValueError("laguerre requires m >= 0 and s >= 0")
    x = np.asarray(x)
    prev = np.ones_like(x, dtype=np.result_type(x.dtype, np.float64))
    if m == 0:
        return prev.item() if prev.ndim == 0 else prev
    cur = 1.0 + s - x
    for k in range(1, m):
        prev, cur = cur, ((2 * k + 1 + s - x) * cur - (k + s) * prev) / (k + 1)
    return cur.item() if np.ndim(cur) == 0 else cur


def gamma_nm(n: int, m: int, r: float, L: float) -> complex:
    """Overlap ``int e_m(v) e_n(v - 2 pi i r / L) dv`` in closed form.

    The two branches (m <= n and m >= n) are Laguerre expressions; at r = 0
    the value is the Kronecker delta exactly.
    """
    if n < 0 or m < 0:
        raise ValueError("Hermite indices must be non-negative")
    if L <= 0:
        raise ValueError("L must be positive")
    if r == 0:
        return complex(n == m)
    a = math.pi * r / L
    arg = -2.0 * a * a
    gauss = math.exp(a * a)
    if m <= n:
        k = n - m
        ratio = math.exp(0.5 * (math.lgamma(m + 1) - math.lgamma(n + 1)))
        return complex(ratio * 2.0 ** (k / 2) * gauss * (-1j * a) ** k * laguerre(m, k, arg))
    k = m - n
    ratio = math.exp(0.5 * (math.lgamma(n + 1) - math.lgamma(m + 1)))
    return complex(ratio * 2.0 ** (k / 2) * gauss * (1j * a) ** k * laguerre(n, k, arg))


def gamma_table(n_max: int, m_max: int, r: float, L: float) -> np.ndarray:
    """Array ``G[n, m] = gamma_nm(n, m, r, L)``."""
    out = np.empty((n_max + 1, m_max + 1), dtype=complex)
    for n in range(n_max + 1):
        for m in range(m_max + 1):
            out[n, m] = gamma_nm(n, m, r, L)
    return out


# ---------------------------------------------------------------------------
# Space-time Fourier tables
# ---------------------------------------------------------------------------

def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TorusField:
    """Double Fourier table of a function periodic in t (period T) and x (period L)."""

    coeffs: np.ndarray
    T: float = 1.0
    L: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.ndim != 2 or c.shape[0] % 2 == 0 or c.shape[1] % 2 == 0:
            raise ValueError("coefficient table must have odd shape (2P+1, 2Q+1)")
        if not (self.T > 0 and self.L > 0):
            raise ValueError("periods must be positive")
        object.__setattr__(self, "coeffs", _frozen(c))
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "L", float(self.L))

    # construction ---------------------------------------------------------
    @classmethod
    def zeros(cls, p_max: int, q_max: int, T: float = 1.0, L: float = 1.0):
        return cls(np.zeros((2 * p_max + 1, 2 * q_max + 1), complex), T, L)

    @classmethod
    def constant(cls, value: float, p_max: int = 0, q_max: int = 0, T: float = 1.0, L: float = 1.0):
        c = np.zeros((2 * p_max + 1, 2 * q_max + 1), complex)
        c[p_max, q_max] = value
        return cls(c, T, L)

    @classmethod
    def from_modes(cls, modes: Mapping[tuple[int, int], complex], T: float = 1.0, L: float = 1.0,
                   p_max: int | None = None, q_max: int | None = None):
        """Build from ``{(p, q): coefficient}``; the truncation defaults to the
        largest mode present."""
        pm = max([abs(p) for p, _ in modes] + [0]) if p_max is None else p_max
        qm = max([abs(q) for _, q in modes] + [0]) if q_max is None else q_max
        c = np.zeros((2 * pm + 1, 2 * qm + 1), complex)
        for (p, q), val in modes.items():
            if abs(p) > pm or abs(q) > qm:
                raise ValueError(f"mode {(p, q)} outside truncation ({pm}, {qm})")
            c[p + pm, q + qm] += val
        return cls(c, T, L)

    # access ---------------------------------------------------------------
    @property
    def p_max(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    @property
    def q_max(self) -> int:
        return (self.coeffs.shape[1] - 1) // 2

    def coeff(self, p: int, q: int) -> complex:
        if abs(p) > self.p_max or abs(q) > self.q_max:
            return 0j
        return complex(self.coeffs[p + self.p_max, q + self.q_max])

    def modes(self, tol: float = 0.0):
        """Iterate over ``(p, q, c)`` for coefficients with ``|c| > tol``."""
        P, Q = self.p_max, self.q_max
        for i, j in zip(*np.nonzero(np.abs(self.coeffs) > tol)):
            yield int(i) - P, int(j) - Q, complex(self.coeffs[i, j])

    def max_mode(self, tol: float = 0.0) -> tuple[int, int]:
        """Largest |p| and |q| carrying a coefficient above ``tol``."""
        pm = qm = 0
        for p, q, _ in self.modes(tol):
            pm, qm = max(pm, abs(p)), max(qm, abs(q))
        return pm, qm

    def hermitian_defect(self) -> float:
        """``max |c(-p,-q) - conj c(p,q)|``; zero for real fields."""
        c = self.coeffs
        return float(np.max(np.abs(c[::-1, ::-1] - np.conj(c)))) if c.size else 0.0

    def is_real(self, tol: float = 1e-12) -> bool:
        return self.hermitian_defect() <= tol

    def resized(self, p_max: int, q_max: int) -> "TorusField":
        """Zero-pad or truncate to the given mode box."""
        out = np.zeros((2 * p_max + 1, 2 * q_max + 1), complex)
        P, Q = self.p_max, self.q_max
        pp, qq = min(P, p_max), min(Q, q_max)
        out[p_max - pp:p_max + pp + 1, q_max - qq:q_max + qq + 1] = \
            self.coeffs[P - pp:P + pp + 1, Q - qq:Q + qq + 1]
        return type(self)._rebuild(self, out)

    def _rebuild(self, coeffs):
        return TorusField(coeffs, self.T, self.L)

    def norm2(self) -> float:
        """Mean square over the torus (Parseval)."""
        return float(np.sum(np.abs(self.coeffs) ** 2))

    # evaluation -----------------------------------------------------------
    def __call__(self, t, x):
        t = np.asarray(t, float)
        x = np.asarray(x, float)
        P, Q = self.p_max, self.q_max
        p = np.arange(-P, P + 1)
        q = np.arange(-Q, Q + 1)
        et = np.exp(2j * np.pi * np.multiply.outer(t, p) / self.T)
        ex = np.exp(2j * np.pi * np.multiply.outer(x, q) / self.L)
        # contract over p and q with broadcasting of t and x
        val = np.einsum("...p,pq,...q->...", et, self.coeffs, ex)
        return val

    def on_grid(self, nt: int, nx: int, real: bool = True) -> np.ndarray:
        """Values on the uniform grid ``t_j = jT/nt``, ``x_k = kL/nx`` (shape (nt, nx))."""
        P, Q = self.p_max, self.q_max
        if nt < 2 * P + 1 or nx < 2 * Q + 1:
            raise ValueError("grid too small for the truncation")
        buf = np.zeros((nt, nx), complex)
        for dp in range(-P, P + 1):
            buf[dp % nt, np.arange(-Q, Q + 1) % nx] += self.coeffs[dp + P]
        vals = np.fft.ifft2(buf) * (nt * nx)
        return vals.real if real else vals

    def grid_min(self, oversample: int = 4) -> float:
        nt = oversample * (2 * self.p_max + 1)
        nx = oversample * (2 * self.q_max + 1)
        return float(self.on_grid(nt, nx).min())

    # arithmetic -----------------------------------------------------------
    def _check_periods(self, other: "TorusField"):
        if not (math.isclose(self.T, other.T) and math.isclose(self.L, other.L)):
            raise ValueError(f"period mismatch: ({self.T}, {self.L}) vs ({other.T}, {other.L})")

    def __add__(self, other: "TorusField") -> "TorusField":
        self._check_periods(other)
        P, Q = max(self.p_max, other.p_max), max(self.q_max, other.q_max)
        return self._rebuild(self.resized(P, Q).coeffs + other.resized(P, Q).coeffs)

    def __sub__(self, other: "TorusField") -> "TorusField":
        return self + (-1.0) * other

    def __mul__(self, scalar) -> "TorusField":
        return self._rebuild(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "TorusField":
        return self * -1.0


def torus_convolve(a: TorusField, b: TorusField, p_max: int | None = None,
                   q_max: int | None = None) -> TorusField:
    """Coefficients of the pointwise product ``a(t, x) * b(t, x)``.

    The result is truncated to ``(p_max, q_max)``, which default to the
    larger of the two input truncations.
    """
    a._check_periods(b)
    P = max(a.p_max, b.p_max) if p_max is None else p_max
    Q = max(a.q_max, b.q_max) if q_max is None else q_max
    full = _convolve2d(a.coeffs, b.coeffs)
    out = TorusField(full, a.T, a.L).resized(P, Q)
    return TorusField(out.coeffs, a.T, a.L)


def _convolve2d(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    from scipy.signal import convolve2d
    return convolve2d(x, y, mode="full")


def conv_matrix_1d(coeffs: np.ndarray, n_out: int, n_in: int) -> np.ndarray:
    """Dense matrix ``C`` with ``(C @ w)[q] = sum_k coeffs[k] w[q - k]`` for
    centred index ranges ``q in [-n_out, n_out]`` and ``q - k in [-n_in, n_in]``."""
    K = (len(coeffs) - 1) // 2
    C = np.zeros((2 * n_out + 1, 2 * n_in + 1), dtype=complex)
    for k in range(-K, K + 1):
        ck = coeffs[k + K]
        if ck == 0:
            continue
        for q in range(-n_out, n_out + 1):
            j = q - k
            if -n_in <= j <= n_in:
                C[q + n_out, j + n_in] += ck
    return C
