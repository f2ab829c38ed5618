from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any


class SolverError(RuntimeError):
    """A stationary solve produced an unusable density (singular system,
    residual or positivity failure, Hermite tail too heavy)."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class InstabilityError(RuntimeError):
    pass


@dataclass(frozen=True)
class VelocityEstimate:
    """Asymptotic velocity with an error bar.

    ``std_error`` is a statistical standard error for Monte Carlo estimates
    and a truncation error bound for deterministic methods.
    """

    value: float
    std_error: float = 0.0
    n_effective: float = math.inf
    method: str = "spectral"
    diagnostics: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("velocity estimate is not finite")
        if not self.std_error >= 0:
            raise ValueError("std_error must be non-negative")

    def __float__(self):
        return float(self.value)

    def agrees_with(self, other: "VelocityEstimate", n_sigma: float = 3.0, floor: float = 0.0) -> bool:
        tol = n_sigma * math.hypot(self.std_error, other.std_error) + floor
        return abs(self.value - other.value) <= tol
