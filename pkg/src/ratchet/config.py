"""Experiment configuration (TOML).

Grammar::

    model  = "overdamped"        # overdamped | two-state | kramers | kramers-two-state
    method = "spectral"          # spectral | perturbative | montecarlo | all

    [physics]                    # any subset; defaults T = 1, L = 1 (2 pi for two-state models),
                                 # gamma = D = 1, nu = (1, 2)
    T = 1.0
    L = 1.0
    gamma = 1.0
    D = 1.0
    nu1 = 1.0
    nu2 = 2.0

    [drift]                      # single-state models: preset or explicit modes
    preset = "traveling_wave"    # see ratchet.drift.SPACE_TIME_PRESETS
    eps = 0.05
    # modes = [[p, q, re, im], ...]          conjugate partners are implied
    # two-state models:
    # preset = "cos2x_cosx"                  see ratchet.drift.TWO_STATE_PRESETS
    # state1 = [[q, re, im], ...]
    # state2 = [[q, re, im], ...]

    [drift2]                     # second drift, zero-find only (same grammar)

    [solver]                     # SolverConfig fields
    [sde]                        # SdeConfig fields
    [crosscheck]
    rel_tol = 0.1                # relative slack for deterministic pairs
    [sweep]
    parameter = "eps"            # eps or any [physics] key
    values = [0.02, 0.04, 0.08]
    [output]
    dir = "out"
    per_path_csv = false

Unknown keys anywhere are rejected.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import tomli

from .drift import (SPACE_TIME_PRESETS, TWO_STATE_PRESETS, SpaceDrift, SpaceTimeDrift,
                    TwoStateRates)
from .montecarlo import SdeConfig
from .spectral import SolverConfig

MODELS = ("overdamped", "two-state", "kramers", "kramers-two-state")
METHODS = ("spectral", "perturbative", "montecarlo", "all")
PHYSICS_KEYS = ("T", "L", "gamma", "D", "nu1", "nu2")
DRIFT_KEYS = ("preset", "eps", "modes", "state1", "state2")
TOP_KEYS = ("model", "method", "physics", "drift", "drift2", "solver", "sde", "crosscheck",
            "sweep", "output")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""


def _reject_unknown(section: dict, allowed, where: str):
    for k in section:
        if k not in allowed:
            raise ConfigError(f"unknown key '{where}{k}'")


@dataclass(frozen=True)
class DriftSpec:
    preset: str | None = None
    eps: float = 1.0
    modes: tuple = ()
    state1: tuple = ()
    state2: tuple = ()

    @classmethod
    def parse(cls, d: dict, where: str) -> "DriftSpec":
        _reject_unknown(d, DRIFT_KEYS, where)
        spec = cls(preset=d.get("preset"), eps=float(d.get("eps", 1.0)),
                   modes=tuple(tuple(m) for m in d.get("modes", ())),
                   state1=tuple(tuple(m) for m in d.get("state1", ())),
                   state2=tuple(tuple(m) for m in d.get("state2", ())))
        if spec.preset is not None and (spec.modes or spec.state1 or spec.state2):
            raise ConfigError(f"'{where}preset' cannot be combined with explicit modes")
        for name, rows, width in (("modes", spec.modes, 4), ("state1", spec.state1, 3),
                                  ("state2", spec.state2, 3)):
            for r in rows:
                if len(r) != width:
                    raise ConfigError(f"'{where}{name}' entries need {width} numbers, got {list(r)}")
        return spec

    def to_dict(self) -> dict:
        out: dict[str, Any] = {}
        if self.preset is not None:
            out["preset"] = self.preset
            out["eps"] = self.eps
        for k in ("modes", "state1", "state2"):
            v = getattr(self, k)
            if v:
                out[k] = [list(r) for r in v]
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "overdamped"
    method: str = "spectral"
    physics: dict = field(default_factory=dict)     # user-given keys only; see ``phys``
    drift: DriftSpec = DriftSpec()
    drift2: DriftSpec | None = None
    solver: SolverConfig = SolverConfig()
    sde: SdeConfig = SdeConfig()
    rel_tol: float = 0.1
    sweep_parameter: str | None = None
    sweep_values: tuple = ()
    out_dir: str = "out"
    per_path_csv: bool = False

    # -- construction -------------------------------------------------------
    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        _reject_unknown(raw, TOP_KEYS, "")
        model = raw.get("model", "overdamped")
        method = raw.get("method", "spectral")
        if model not in MODELS:
            raise ConfigError(f"'model' must be one of {MODELS}, got {model!r}")
        if method not in METHODS:
            raise ConfigError(f"'method' must be one of {METHODS}, got {method!r}")
        p_raw = raw.get("physics", {})
        _reject_unknown(p_raw, PHYSICS_KEYS, "physics.")
        phys = {k: float(v) for k, v in p_raw.items()}
        drift = DriftSpec.parse(raw.get("drift", {}), "drift.")
        drift2 = DriftSpec.parse(raw["drift2"], "drift2.") if "drift2" in raw else None

        s_raw = raw.get("solver", {})
        _reject_unknown(s_raw, [f.name for f in fields(SolverConfig)], "solver.")
        sd_raw = raw.get("sde", {})
        _reject_unknown(sd_raw, [f.name for f in fields(SdeConfig)], "sde.")
        cc = raw.get("crosscheck", {})
        _reject_unknown(cc, ("rel_tol",), "crosscheck.")
        sw = raw.get("sweep", {})
        _reject_unknown(sw, ("parameter", "values"), "sweep.")
        out = raw.get("output", {})
        _reject_unknown(out, ("dir", "per_path_csv"), "output.")
        try:
            solver = SolverConfig(**s_raw)
            sde = SdeConfig(**sd_raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        cfg = cls(model, method, phys, drift, drift2, solver, sde, float(cc.get("rel_tol", 0.1)),
                  sw.get("parameter"), tuple(float(v) for v in sw.get("values", ())),
                  str(out.get("dir", "out")), bool(out.get("per_path_csv", False)))
        cfg.validate()
        return cfg

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            try:
                raw = tomli.load(fh)
            except tomli.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(raw)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def with_parameter(self, name: str, value: float) -> "ExperimentConfig":
        if name == "eps":
            if self.drift.preset is None:
                raise ConfigError("'sweep.parameter' eps needs a drift preset")
            return replace(self, drift=replace(self.drift, eps=value))
        if name in PHYSICS_KEYS:
            return replace(self, physics={**self.physics, name: value})
        raise ConfigError(f"'sweep.parameter' must be eps or one of {PHYSICS_KEYS}, got {name!r}")

    # -- validation ---------------------------------------------------------
    @property
    def phys(self) -> dict:
        """Physical parameters with model defaults filled in (L = 2 pi for two-state models)."""
        d = {"T": 1.0, "L": 2 * math.pi if self.two_state else 1.0, "gamma": 1.0, "D": 1.0,
             "nu1": 1.0, "nu2": 2.0}
        d.update(self.physics)
        return d

    @property
    def two_state(self) -> bool:
        return self.model in ("two-state", "kramers-two-state")

    def validate(self):
        for k in PHYSICS_KEYS:
            if not self.phys[k] > 0:
                raise ConfigError(f"'physics.{k}' must be positive")
        for spec, where in ((self.drift, "drift."), (self.drift2, "drift2.")):
            if spec is None:
                continue
            if spec.preset is not None:
                table = TWO_STATE_PRESETS if self.two_state else SPACE_TIME_PRESETS
                if spec.preset not in table:
                    raise ConfigError(f"'{where}preset' {spec.preset!r} is not a {self.model} preset "
                                      f"(choose from {sorted(table)})")
            if self.two_state and spec.modes:
                raise ConfigError(f"'{where}modes' is for single-state models; use state1/state2")
            if not self.two_state and (spec.state1 or spec.state2):
                raise ConfigError(f"'{where}state1/state2' are for two-state models; use modes")
        if self.sweep_parameter is not None:
            self.with_parameter(self.sweep_parameter, 1.0)
        if self.model == "kramers-two-state" and self.method in ("perturbative", "all"):
            from .kinetic.appendix import BAND_LIMIT
            F1, F2 = self.two_state_drifts()
            if max(F1.max_mode(), F2.max_mode()) > BAND_LIMIT:
                raise ConfigError(f"'drift' must be band-limited (modes <= {BAND_LIMIT}) "
                                  "for the perturbative kramers-two-state method")

    # -- drift construction -------------------------------------------------
    def rates(self) -> TwoStateRates:
        p = self.phys
        return TwoStateRates(p["nu1"], p["nu2"], p["D"], p["gamma"])

    def space_time_drift(self, spec: DriftSpec | None = None) -> SpaceTimeDrift:
        spec = spec or self.drift
        T, L = self.phys["T"], self.phys["L"]
        if spec.preset is not None:
            return SPACE_TIME_PRESETS[spec.preset](spec.eps, T, L)
        if not spec.modes:
            return SpaceTimeDrift.zero(T, L)
        modes: dict = {}
        for p, q, re, im in spec.modes:
            modes[(int(p), int(q))] = modes.get((int(p), int(q)), 0) + complex(re, im)
        return SpaceTimeDrift.from_modes(modes, T, L)

    def two_state_drifts(self, spec: DriftSpec | None = None) -> tuple[SpaceDrift, SpaceDrift]:
        spec = spec or self.drift
        L = self.phys["L"]
        if spec.preset is not None:
            return TWO_STATE_PRESETS[spec.preset](spec.eps, L)

        def build(rows):
            if not rows:
                return SpaceDrift.zero(L)
            return SpaceDrift.from_modes({int(q): complex(re, im) for q, re, im in rows}, L)
        return build(spec.state1), build(spec.state2)

    def echo(self) -> dict:
        """Parameters echoed into every result record."""
        d = {"model": self.model, "physics": self.phys, "drift": self.drift.to_dict(),
             "solver": {f.name: getattr(self.solver, f.name) for f in fields(SolverConfig)},
             "sde": {f.name: getattr(self.sde, f.name) for f in fields(SdeConfig)}}
        if self.drift2 is not None:
            d["drift2"] = self.drift2.to_dict()
        return d


def load(path: str | Path) -> ExperimentConfig:
    return ExperimentConfig.from_toml(path)
