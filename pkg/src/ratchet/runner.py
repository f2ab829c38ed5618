"""Experiment orchestration behind the command line front end."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .config import ExperimentConfig, ConfigError
from .results import VelocityEstimate

RECORD_FILE = "records.jsonl"


# ---------------------------------------------------------------------------
# records

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer, int)) and not isinstance(x, bool):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, (str, bool)) or x is None:
        return x
    return repr(x)


@dataclass(frozen=True)
class ResultRecord:
    model: str
    method: str
    I: float
    error_bound: float
    parameters: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    wall_time: float = 0.0
    seed: int | None = None
    version: str = __version__

    def to_json(self) -> str:
        return json.dumps(_jsonable(asdict(self)), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ResultRecord":
        d = json.loads(line)
        return cls(**d)

    def reproduces(self, baseline: "ResultRecord", n_sigma: float = 3.0) -> bool:
        """Does this record agree with ``baseline`` within the stated error bounds?"""
        tol = n_sigma * math.hypot(self.error_bound, baseline.error_bound)
        tol = max(tol, 1e-10 * max(abs(self.I), abs(baseline.I)), 1e-15)
        return abs(self.I - baseline.I) <= tol


def read_records(path) -> list[ResultRecord]:
    with open(path) as fh:
        return [ResultRecord.from_json(line) for line in fh if line.strip()]


def atomic_write(path, text: str):
    """Write-then-rename so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")     # RFC 4180
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# single estimates

def _spectral(cfg: ExperimentConfig) -> tuple[VelocityEstimate, dict]:
    if cfg.model == "overdamped":
        from .overdamped import stationary_velocity
        est = stationary_velocity(cfg.space_time_drift(), cfg.solver)
    elif cfg.model == "two-state":
        from .twostate import stationary_velocity_two_state
        b1, b2 = cfg.two_state_drifts()
        est = stationary_velocity_two_state(b1, b2, cfg.rates(), cfg.solver)
    elif cfg.model == "kramers":
        from .kinetic.kramers import stationary_velocity_kramers
        est = stationary_velocity_kramers(cfg.space_time_drift(), cfg.phys["gamma"], cfg.solver)
    else:
        from .kinetic.kramers import stationary_velocity_kramers_two_state
        F1, F2 = cfg.two_state_drifts()
        est = stationary_velocity_kramers_two_state(F1, F2, cfg.rates(), cfg.solver)
    return est, {}


def _perturbative(cfg: ExperimentConfig) -> tuple[VelocityEstimate, dict]:
    diag: dict[str, Any] = {}
    if cfg.model == "overdamped":
        from .overdamped import second_variation
        val = second_variation(cfg.space_time_drift())
        diag["order"] = 2
    elif cfg.model == "kramers":
        from .kinetic.gamma import kramers_second_order
        val = kramers_second_order(cfg.space_time_drift(), cfg.phys["gamma"])
        diag["order"] = 2
    elif cfg.model == "two-state":
        from .twostate import perturbation_order, third_variation_closed_form, SIGN_CONVENTION
        b1, b2 = cfg.two_state_drifts()
        r = cfg.rates()
        I1, I2, val = (perturbation_order(b1, b2, r, k) for k in (1, 2, 3))
        diag.update(order=3, I1=I1, I2=I2, sign_convention=SIGN_CONVENTION)
        p = cfg.phys
        if (cfg.drift.preset == "cos2x_cosx" and math.isclose(p["L"], 2 * math.pi)
                and math.isclose(p["D"], 1.0)):
            closed = third_variation_closed_form(p["nu1"], p["nu2"])
            ref = -closed * cfg.drift.eps ** 3
            diag.update(closed_form=closed, closed_form_displacement=-closed,
                        reference=ref, relative_error=abs(val - ref) / abs(ref) if ref else abs(val))
    else:
        from .kinetic.appendix import appendix_I3
        from .kinetic.kramers import appendix_rescale
        F1, F2 = cfg.two_state_drifts()
        G1, G2, r, sc = appendix_rescale(F1, F2, cfg.rates())
        res = appendix_I3(G1, G2, r.nu1, r.nu2, cfg=cfg.solver)
        val = sc.velocity(res.value)
        diag.update(order=3, tail=sc.velocity(res.tail), imag_residue=res.imag_residue)
    return VelocityEstimate(float(val), 0.0, math.inf, "perturbative", diag), {}


def _montecarlo(cfg: ExperimentConfig, threads: int | None) -> tuple[VelocityEstimate, dict]:
    from . import montecarlo as mc
    if cfg.model == "overdamped":
        est = mc.simulate_overdamped(cfg.space_time_drift(), cfg.sde, threads)
    elif cfg.model == "kramers":
        est = mc.simulate_langevin(cfg.space_time_drift(), cfg.phys["gamma"], cfg.sde, threads)
    else:
        d1, d2 = cfg.two_state_drifts()
        est = mc.simulate_two_state_switching(d1, d2, cfg.rates(), cfg.sde,
                                              kinetic=cfg.model == "kramers-two-state", threads=threads)
    disp = est.diagnostics.get("displacements")
    return est, {"displacements": disp}


def estimate(cfg: ExperimentConfig, method: str, threads: int | None = None):
    if method == "spectral":
        return _spectral(cfg)
    if method == "perturbative":
        return _perturbative(cfg)
    if method == "montecarlo":
        return _montecarlo(cfg, threads)
    raise ConfigError(f"'method' {method!r} cannot be run on its own")


def _record(cfg: ExperimentConfig, method: str, est: VelocityEstimate, wall: float) -> ResultRecord:
    diag = {k: v for k, v in est.diagnostics.items() if k != "displacements"}
    if method == "montecarlo":
        diag["n_effective"] = est.n_effective
    return ResultRecord(cfg.model, method, float(est.value), float(est.std_error), cfg.echo(), diag,
                        wall, cfg.sde.seed if method == "montecarlo" else None)


def methods_of(cfg: ExperimentConfig) -> list[str]:
    return ["spectral", "perturbative", "montecarlo"] if cfg.method == "all" else [cfg.method]


def crosscheck(records: list[ResultRecord], rel_tol: float, n_sigma: float = 3.0) -> list[dict]:
    """Pairwise discrepancies with 3-sigma verdicts.

    Monte Carlo carries its standard error; the perturbative value is a
    truncated series, so pairs involving it get ``rel_tol * |I|`` of slack.
    """
    out = []
    for i in range(len(records)):
        for j in range(i + 1, len(records)):
            a, b = records[i], records[j]
            sigma = math.hypot(a.error_bound, b.error_bound)
            slack = rel_tol * max(abs(a.I), abs(b.I)) if "perturbative" in (a.method, b.method) else 0.0
            diff = a.I - b.I
            tol = n_sigma * sigma + slack + 1e-12
            out.append({"pair": f"{a.method}-{b.method}", "difference": diff, "sigma": sigma,
                        "tolerance": tol, "agree": abs(diff) <= tol})
    return out


@dataclass
class RunOutput:
    records: list[ResultRecord]
    crosscheck: list[dict] | None = None
    extras: dict = field(default_factory=dict)


def run_velocity(cfg: ExperimentConfig, threads: int | None = None) -> RunOutput:
    records, extras = [], {}
    for m in methods_of(cfg):
        t0 = time.perf_counter()
        est, extra = estimate(cfg, m, threads)
        records.append(_record(cfg, m, est, time.perf_counter() - t0))
        if extra.get("displacements") is not None:
            extras["displacements"] = extra["displacements"]
    cc = crosscheck(records, cfg.rel_tol) if cfg.method == "all" else None
    return RunOutput(records, cc, extras)


def write_velocity(out: RunOutput, cfg: ExperimentConfig, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    paths = [out_dir / RECORD_FILE, out_dir / "results.csv"]
    atomic_write(paths[0], "".join(r.to_json() + "\n" for r in out.records))
    atomic_write(paths[1], csv_text(["model", "method", "I", "error_bound", "wall_time", "seed"],
                                    [[r.model, r.method, repr(r.I), repr(r.error_bound),
                                      f"{r.wall_time:.6f}", "" if r.seed is None else r.seed]
                                     for r in out.records]))
    if out.crosscheck is not None:
        paths.append(out_dir / "crosscheck.json")
        atomic_write(paths[-1], json.dumps(_jsonable(out.crosscheck), indent=2) + "\n")
    if cfg.per_path_csv and "displacements" in out.extras:
        disp = out.extras["displacements"]
        paths.append(out_dir / "per_path.csv")
        atomic_write(paths[-1], csv_text(["path", "displacement"],
                                         [[i, repr(float(d))] for i, d in enumerate(disp)]))
    return paths


# ---------------------------------------------------------------------------
# sweeps

def power_law_fit(x, y) -> dict | None:
    """Least-squares slope of log|y| against log x; None if signs are mixed or zero."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size < 2 or np.any(x <= 0) or np.any(y == 0) or not (np.all(y > 0) or np.all(y < 0)):
        return None
    X, Y = np.log(x), np.log(np.abs(y))
    A = np.vstack([X, np.ones_like(X)]).T
    coef, res, *_ = np.linalg.lstsq(A, Y, rcond=None)
    dof = x.size - 2
    if dof > 0:
        s2 = float(np.sum((Y - A @ coef) ** 2)) / dof
        se = math.sqrt(s2 / float(np.sum((X - X.mean()) ** 2)))
    else:
        se = 0.0
    return {"exponent": float(coef[0]), "exponent_std_error": se, "prefactor": float(math.copysign(math.exp(coef[1]), y[0]))}


def sign_changes(x, y) -> list[tuple[float, float]]:
    return [(float(x[i]), float(x[i + 1])) for i in range(len(x) - 1)
            if y[i] == 0 or np.sign(y[i]) != np.sign(y[i + 1])]


@dataclass
class SweepOutput:
    parameter: str
    values: list[float]
    records: list[list[ResultRecord]]
    fits: dict
    brackets: dict


def run_sweep(cfg: ExperimentConfig, threads: int | None = None,
              parameter: str | None = None, values=None) -> SweepOutput:
    parameter = parameter or cfg.sweep_parameter
    values = list(cfg.sweep_values if values is None else values)
    if parameter is None or not values:
        raise ConfigError("'sweep.parameter' and 'sweep.values' are required")
    cfgs = [cfg.with_parameter(parameter, v) for v in values]
    for c in cfgs:
        c.validate()
    n_workers = max(1, threads or 1)
    inner = 1 if n_workers > 1 else threads
    if n_workers == 1:
        runs = [run_velocity(c, inner) for c in cfgs]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as ex:
            runs = list(ex.map(lambda c: run_velocity(c, inner), cfgs))
    records = [r.records for r in runs]
    fits, brackets = {}, {}
    for k, m in enumerate(methods_of(cfg)):
        ys = [rec[k].I for rec in records]
        if parameter == "eps":
            fits[m] = power_law_fit(values, ys)
        brackets[m] = sign_changes(values, ys)
    return SweepOutput(parameter, values, records, fits, brackets)


def write_sweep(out: SweepOutput, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    rows, lines = [], []
    plots: dict[str, list] = {}
    for v, recs in zip(out.values, out.records):
        for r in recs:
            rows.append([out.parameter, repr(v), r.model, r.method, repr(r.I), repr(r.error_bound)])
            lines.append(r.to_json() + "\n")
            plots.setdefault(r.method, []).append([repr(v), repr(r.I), repr(r.error_bound)])
    paths = [out_dir / "sweep.csv", out_dir / RECORD_FILE, out_dir / "sweep_summary.json"]
    atomic_write(paths[0], csv_text(["parameter", "value", "model", "method", "I", "error_bound"], rows))
    atomic_write(paths[1], "".join(lines))
    atomic_write(paths[2], json.dumps(_jsonable({"parameter": out.parameter, "fits": out.fits,
                                                 "sign_changes": out.brackets}), indent=2) + "\n")
    for m, pts in plots.items():
        paths.append(out_dir / f"plot_{m}.csv")
        atomic_write(paths[-1], csv_text(["x", "y", "yerr"], pts))
    return paths


# ---------------------------------------------------------------------------
# zero finding

def run_zero_find(cfg: ExperimentConfig) -> tuple[ResultRecord, Any]:
    """Mixing weight ``alpha0`` with ``I((1 - alpha0) b1 + alpha0 b2) = 0`` (overdamped)."""
    from .overdamped import find_mixed_zero
    if cfg.model != "overdamped":
        raise ConfigError("'model' must be overdamped for zero-find")
    if cfg.drift2 is None:
        raise ConfigError("'drift2' is required for zero-find")
    b1, b2 = cfg.space_time_drift(), cfg.space_time_drift(cfg.drift2)
    t0 = time.perf_counter()
    mz = find_mixed_zero(b1, b2, cfg.solver)
    rec = ResultRecord(cfg.model, "zero-find", float(mz.velocity), 0.0, cfg.echo(),
                       {"alpha": mz.alpha, "iterations": mz.iterations}, time.perf_counter() - t0)
    return rec, mz


def write_zero_find(rec: ResultRecord, mz, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    rows = [[p, q, repr(c.real), repr(c.imag)] for p, q, c in mz.drift.modes() if abs(c) > 0]
    paths = [out_dir / RECORD_FILE, out_dir / "composite_drift.csv"]
    atomic_write(paths[0], rec.to_json() + "\n")
    atomic_write(paths[1], csv_text(["p", "q", "re", "im"], rows))
    return paths


def composite_from_csv(path, T: float, L: float):
    """Read back a composite drift written by :func:`write_zero_find`."""
    from .drift import SpaceTimeDrift
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        modes = {(int(r["p"]), int(r["q"])): complex(float(r["re"]), float(r["im"])) for r in rd}
    return SpaceTimeDrift.from_modes(modes, T, L, real=False)
