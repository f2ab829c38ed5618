"""Periodic drifts and forces: construction, checks and the gauge change
that removes the instantaneous spatial average."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .spectral import TorusField

ZERO_TOL = 1e-14


class DriftError(ValueError):
    pass


@dataclass(frozen=True)
class SpaceTimeDrift(TorusField):
    """Real drift ``b(t, x)`` stored as a Hermitian Fourier table.

    Construction symmetrizes the table; inputs that are visibly not real
    (defect above ``1e-10`` relative) are rejected.
    """

    def __post_init__(self):
        super().__post_init__()
        c = self.coeffs
        scale = max(1.0, float(np.max(np.abs(c)))) if c.size else 1.0
        if self.hermitian_defect() > 1e-10 * scale:
            raise DriftError("drift coefficients are not Hermitian (field is not real)")
        sym = 0.5 * (c + np.conj(c[::-1, ::-1]))
        sym.setflags(write=False)
        object.__setattr__(self, "coeffs", sym)

    def _rebuild(self, coeffs):
        return SpaceTimeDrift(coeffs, self.T, self.L)

    @classmethod
    def from_modes(cls, modes, T=1.0, L=1.0, p_max=None, q_max=None, real=True):
        """``modes`` maps (p, q) to a coefficient. With ``real=True`` each
        listed mode is completed with its conjugate partner when absent."""
        modes = dict(modes)
        if real:
            for (p, q), c in list(modes.items()):
                if (-p, -q) not in modes:
                    modes[(-p, -q)] = np.conj(c)
        base = TorusField.from_modes(modes, T, L, p_max, q_max)
        return cls(base.coeffs, T, L)

    @classmethod
    def zero(cls, T=1.0, L=1.0, p_max=0, q_max=0):
        return cls(np.zeros((2 * p_max + 1, 2 * q_max + 1), complex), T, L)

    @classmethod
    def from_function(cls, fn, T=1.0, L=1.0, p_max=8, q_max=16, oversample=2):
        """Sample ``fn(t, x)`` on a uniform grid and keep modes up to the truncation."""
        nt = oversample * (2 * p_max + 1)
        nx = oversample * (2 * q_max + 1)
        t = np.arange(nt) * T / nt
        x = np.arange(nx) * L / nx
        grid = fn(t[:, None], x[None, :]) * np.ones((nt, nx))
        return drift_from_samples(grid, T, L, p_max, q_max)

    @property
    def space_time_mean(self) -> float:
        return self.coeff(0, 0).real

    def is_time_independent(self, tol: float = ZERO_TOL) -> bool:
        return all(p == 0 for p, _, _ in self.modes(tol))


@dataclass(frozen=True)
class SpaceDrift:
    """Real, time-independent periodic function of x (two-state drifts and forces)."""

    coeffs: np.ndarray
    L: float = 1.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.ndim != 1 or c.size % 2 == 0:
            raise ValueError("coefficients must be a 1-D array of odd length 2Q+1")
        if not self.L > 0:
            raise ValueError("L must be positive")
        scale = max(1.0, float(np.max(np.abs(c))))
        if np.max(np.abs(c[::-1] - np.conj(c))) > 1e-10 * scale:
            raise DriftError("space drift coefficients are not Hermitian")
        c = 0.5 * (c + np.conj(c[::-1]))
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "L", float(self.L))

    @classmethod
    def from_modes(cls, modes: Mapping[int, complex], L: float = 1.0, q_max: int | None = None):
        modes = dict(modes)
        for q, c in list(modes.items()):
            if -q not in modes:
                modes[-q] = np.conj(c)
        qm = max([abs(q) for q in modes] + [0]) if q_max is None else q_max
        c = np.zeros(2 * qm + 1, complex)
        for q, val in modes.items():
            c[q + qm] += val
        return cls(c, L)

    @classmethod
    def cosine(cls, k: int, amplitude: float = 1.0, L: float = 1.0):
        """``amplitude * cos(2 pi k x / L)``."""
        if k == 0:
            return cls.from_modes({0: amplitude}, L)
        return cls.from_modes({k: amplitude / 2, -k: amplitude / 2}, L)

    @classmethod
    def zero(cls, L: float = 1.0):
        return cls(np.zeros(1, complex), L)

    @property
    def q_max(self) -> int:
        return (self.coeffs.size - 1) // 2

    def coeff(self, q: int) -> complex:
        return complex(self.coeffs[q + self.q_max]) if abs(q) <= self.q_max else 0j

    def padded(self, q_max: int) -> np.ndarray:
        if q_max < self.max_mode():
            raise ValueError(f"drift has modes beyond q_max={q_max}")
        out = np.zeros(2 * q_max + 1, complex)
        Q = min(self.q_max, q_max)
        out[q_max - Q:q_max + Q + 1] = self.coeffs[self.q_max - Q:self.q_max + Q + 1]
        return out

    def max_mode(self, tol: float = 0.0) -> int:
        nz = np.nonzero(np.abs(self.coeffs) > tol)[0]
        return int(np.max(np.abs(nz - self.q_max))) if nz.size else 0

    def modes(self, tol: float = 0.0):
        for j in np.nonzero(np.abs(self.coeffs) > tol)[0]:
            yield int(j) - self.q_max, complex(self.coeffs[j])

    @property
    def mean(self) -> float:
        return self.coeff(0).real

    def __call__(self, x):
        x = np.asarray(x, float)
        q = np.arange(-self.q_max, self.q_max + 1)
        return (np.exp(2j * np.pi * np.multiply.outer(x, q) / self.L) @ self.coeffs).real

    def __mul__(self, s):
        return SpaceDrift(self.coeffs * s, self.L)

    __rmul__ = __mul__

    def __add__(self, other: "SpaceDrift"):
        if not math.isclose(self.L, other.L):
            raise ValueError("period mismatch")
        Q = max(self.q_max, other.q_max)
        return SpaceDrift(self.padded(Q) + other.padded(Q), self.L)

    def as_torus(self, T: float = 1.0) -> SpaceTimeDrift:
        return SpaceTimeDrift(self.coeffs[None, :], T, self.L)


@dataclass(frozen=True)
class TwoStateRates:
    """Switching rates nu1 (1 -> 2), nu2 (2 -> 1), diffusion D and friction gamma."""

    nu1: float
    nu2: float
    D: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        for name in ("nu1", "nu2", "D", "gamma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def M(self) -> np.ndarray:
        return np.array([[-self.nu1, self.nu2], [self.nu1, -self.nu2]])

    def sigma(self, L: float) -> float:
        return 4 * math.pi ** 2 * self.D / L ** 2

    @property
    def occupation(self) -> tuple[float, float]:
        s = self.nu1 + self.nu2
        return self.nu2 / s, self.nu1 / s


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ZeroAverageReport:
    space_average_ok: bool
    time_average_ok: bool
    space_violations: tuple = ()
    time_violations: tuple = ()

    @property
    def ok(self) -> bool:
        return self.space_average_ok and self.time_average_ok


def validate_zero_average(d: TorusField, tol: float = ZERO_TOL) -> ZeroAverageReport:
    """Check ``coeff(p, 0) = 0`` for all p and ``coeff(0, q) = 0`` for all q."""
    P, Q = d.p_max, d.q_max
    col = d.coeffs[:, Q]
    row = d.coeffs[P, :]
    space = tuple((p - P, 0) for p in np.nonzero(np.abs(col) > tol)[0])
    time = tuple((0, q - Q) for q in np.nonzero(np.abs(row) > tol)[0])
    return ZeroAverageReport(not space, not time, space, time)


@dataclass(frozen=True)
class GaugeReport:
    discarded_energy: float
    shift_amplitude: float
    n_nodes: int


def gauge_eliminate(d: SpaceTimeDrift, p_max: int | None = None, oversample: int = 4,
                    return_report: bool = False):
    """Move to the frame ``x -> x + a(t)`` that removes the spatial average.

    Returns ``b(t, x + a(t)) - (1/L) int b(t, y) dy`` with
    ``a(t) = -(1/L) int_0^t int_0^L b``. The shifted drift is projected back
    onto ``|p| <= p_max`` time modes (default: the input truncation) by
    trapezoidal quadrature on ``oversample * (2 P + 1)`` nodes.
    """
    if abs(d.coeff(0, 0)) > 1e-12:
        raise DriftError("gauge elimination needs zero space-time mean")
    P_in, Q = d.p_max, d.q_max
    P_out = P_in if p_max is None else p_max
    mean_row = d.coeffs[:, Q].copy()
    if np.all(np.abs(mean_row) <= ZERO_TOL):
        out = d.resized(P_out, Q)
        rep = GaugeReport(0.0, 0.0, 0)
        return (out, rep) if return_report else out

    nt = max(oversample * (2 * max(P_in, P_out) + 1), 64)
    t = np.arange(nt) * d.T / nt
    p = np.arange(-P_in, P_in + 1)
    omega = 2 * np.pi * p / d.T
    # a(t) = -int_0^t m(s) ds, m(s) = sum_p m_p e^{i w_p s}; the p = 0 term vanishes
    nz = p != 0
    a = np.zeros(nt)
    phase = np.exp(1j * np.multiply.outer(t, omega[nz]))
    a = -((phase - 1.0) @ (mean_row[nz] / (1j * omega[nz]))).real

    et = np.exp(1j * np.multiply.outer(t, omega))          # (nt, 2P+1)
    bq_t = et @ d.coeffs                                      # b_q(t_j), (nt, 2Q+1)
    q = np.arange(-Q, Q + 1)
    shifted = bq_t * np.exp(2j * np.pi * np.multiply.outer(a, q) / d.L)
    shifted[:, Q] = 0.0                                       # subtract the space average

    spec = np.fft.fft(shifted, axis=0) / nt                   # row k <-> time mode k (mod nt)
    out = np.zeros((2 * P_out + 1, 2 * Q + 1), complex)
    for pp in range(-P_out, P_out + 1):
        out[pp + P_out] = spec[pp % nt]
    kept = float(np.sum(np.abs(out) ** 2))
    discarded = max(float(np.sum(np.abs(spec) ** 2)) - kept, 0.0)
    result = SpaceTimeDrift(out, d.T, d.L)
    rep = GaugeReport(discarded, float(np.max(np.abs(a))), nt)
    return (result, rep) if return_report else result


def drift_from_samples(grid, T: float, L: float, p_max: int | None = None,
                       q_max: int | None = None) -> SpaceTimeDrift:
    """Discrete Fourier analysis of samples on the uniform (t, x) grid."""
    grid = np.asarray(grid, float)
    nt, nx = grid.shape
    P = (nt - 1) // 2 if p_max is None else p_max
    Q = (nx - 1) // 2 if q_max is None else q_max
    if nt < 2 * P + 1 or nx < 2 * Q + 1:
        raise DriftError(f"grid {grid.shape} too small for truncation ({P}, {Q})")
    spec = np.fft.fft2(grid) / (nt * nx)
    pi = np.arange(-P, P + 1) % nt
    qi = np.arange(-Q, Q + 1) % nx
    return SpaceTimeDrift(spec[np.ix_(pi, qi)], T, L)


# ---------------------------------------------------------------------------
# presets

def traveling_wave(eps: float = 1.0, T: float = 1.0, L: float = 1.0, direction: int = 1) -> SpaceTimeDrift:
    """``eps * cos(2 pi (t/T + direction * x/L))``."""
    return SpaceTimeDrift.from_modes({(1, direction): eps / 2}, T, L)


def standing_wave(eps: float = 1.0, T: float = 1.0, L: float = 1.0) -> SpaceTimeDrift:
    """``eps * cos(2 pi t/T) cos(2 pi x/L)``."""
    return SpaceTimeDrift.from_modes({(1, 1): eps / 4, (1, -1): eps / 4}, T, L)


def static_wave(eps: float = 1.0, T: float = 1.0, L: float = 1.0) -> SpaceTimeDrift:
    """``eps * cos(2 pi x/L)`` (no time dependence)."""
    return SpaceTimeDrift.from_modes({(0, 1): eps / 2}, T, L)


def cos2x_cosx(eps: float = 1.0, L: float = 2 * math.pi) -> tuple[SpaceDrift, SpaceDrift]:
    """The two-state pair ``(eps cos(4 pi x/L), eps cos(2 pi x/L))``; with
    L = 2 pi this is (cos 2x, cos x)."""
    return SpaceDrift.cosine(2, eps, L), SpaceDrift.cosine(1, eps, L)


SPACE_TIME_PRESETS = {
    "traveling_wave": traveling_wave,
    "reversed_wave": lambda eps=1.0, T=1.0, L=1.0: traveling_wave(eps, T, L, direction=-1),
    "standing_wave": standing_wave,
    "static_wave": static_wave,
}

TWO_STATE_PRESETS = {
    "cos2x_cosx": cos2x_cosx,
    "common_static": lambda eps=1.0, L=2 * math.pi: (SpaceDrift.cosine(1, eps, L),) * 2,
}
