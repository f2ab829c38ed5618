"""Command line front end: ``ratchet {velocity, sweep, zero-find, selftest}``."""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from . import __version__
from .config import ConfigError, DriftSpec, ExperimentConfig
from .montecarlo import THREADS_ENV
from .results import InstabilityError, SolverError


def _threads(args) -> int:
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        return args.threads
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        raise ConfigError(f"environment variable {THREADS_ENV} must be an integer") from None


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_toml(args.config) if args.config else ExperimentConfig()
    if args.model is not None:
        cfg = replace(cfg, model=args.model)
    if args.method is not None:
        cfg = replace(cfg, method=args.method)
    if args.preset is not None:
        eps = cfg.drift.eps if cfg.drift.preset is not None else 1.0
        cfg = replace(cfg, drift=DriftSpec(preset=args.preset, eps=eps))
    if args.eps is not None:
        if cfg.drift.preset is None:
            raise ConfigError("--eps needs a drift preset")
        cfg = replace(cfg, drift=replace(cfg.drift, eps=args.eps))
    if args.seed is not None:
        cfg = replace(cfg, sde=cfg.sde.replace(seed=args.seed))
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    cfg.validate()
    return cfg


def _cmd_velocity(args) -> int:
    from .runner import read_records, run_velocity, write_velocity
    cfg = _load(args)
    out = run_velocity(cfg, _threads(args))
    paths = write_velocity(out, cfg, cfg.out_dir)
    for r in out.records:
        print(f"{r.model} {r.method}: I = {r.I:.10g} +- {r.error_bound:.3g}")
    status = 0
    if out.crosscheck is not None:
        for c in out.crosscheck:
            print(f"  {c['pair']}: diff {c['difference']:.3g}, tol {c['tolerance']:.3g}, "
                  f"{'agree' if c['agree'] else 'DISAGREE'}")
    if args.baseline:
        base = {(b.model, b.method): b for b in read_records(args.baseline)}
        for r in out.records:
            b = base.get((r.model, r.method))
            if b is None:
                continue
            ok = r.reproduces(b)
            print(f"  baseline {r.method}: {'reproduced' if ok else 'MISMATCH'} ({b.I:.10g})")
            status |= 0 if ok else 1
    print("wrote " + ", ".join(str(p) for p in paths))
    return status


def _cmd_sweep(args) -> int:
    from .runner import run_sweep, write_sweep
    cfg = _load(args)
    values = [float(v) for v in args.values.split(",")] if args.values else None
    out = run_sweep(cfg, _threads(args), args.parameter, values)
    paths = write_sweep(out, cfg.out_dir)
    for v, recs in zip(out.values, out.records):
        print(f"{out.parameter} = {v:g}: " + ", ".join(f"{r.method} {r.I:.6g}" for r in recs))
    for m, fit in out.fits.items():
        if fit:
            print(f"{m}: exponent {fit['exponent']:.4f} +- {fit['exponent_std_error']:.2g}")
    for m, br in out.brackets.items():
        for lo, hi in br:
            print(f"{m}: sign change in [{lo:g}, {hi:g}]")
    print("wrote " + ", ".join(str(p) for p in paths))
    return 0


def _cmd_zero_find(args) -> int:
    from .runner import run_zero_find, write_zero_find
    cfg = _load(args)
    rec, mz = run_zero_find(cfg)
    paths = write_zero_find(rec, mz, cfg.out_dir)
    print(f"alpha0 = {mz.alpha:.12g} (I = {mz.velocity:.3g}, {mz.iterations} bisections)")
    print("wrote " + ", ".join(str(p) for p in paths))
    return 0


def _cmd_selftest(args) -> int:
    from .acceptance import run_all
    only = {int(k) for k in args.only.split(",")} if args.only else None
    results = run_all(print, only)
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} criteria passed")
    return 0 if n_pass == len(results) else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML experiment file")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, metavar="N", help="Monte Carlo seed")
    common.add_argument("--threads", type=int, metavar="N",
                        help=f"worker threads (default: ${THREADS_ENV} or 1)")
    common.add_argument("--preset", metavar="NAME", help="drift preset (overrides drift section)")
    common.add_argument("--eps", type=float, help="preset amplitude")
    common.add_argument("--model", choices=["overdamped", "two-state", "kramers", "kramers-two-state"])
    common.add_argument("--method", choices=["spectral", "perturbative", "montecarlo", "all"])

    p = argparse.ArgumentParser(prog="ratchet", description="Asymptotic velocity of periodically driven diffusions.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("velocity", parents=[common], help="estimate the velocity")
    v.add_argument("--baseline", metavar="PATH", help="records.jsonl to compare against")
    v.set_defaults(func=_cmd_velocity)
    s = sub.add_parser("sweep", parents=[common], help="sweep one parameter")
    s.add_argument("--parameter", help="eps or a physics key (overrides sweep.parameter)")
    s.add_argument("--values", help="comma-separated values (overrides sweep.values)")
    s.set_defaults(func=_cmd_sweep)
    z = sub.add_parser("zero-find", parents=[common], help="zero of the velocity along a mixture of two drifts")
    z.set_defaults(func=_cmd_zero_find)
    t = sub.add_parser("selftest", parents=[common], help="run the acceptance suite")
    t.add_argument("--only", help="comma-separated criterion numbers")
    t.set_defaults(func=_cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, InstabilityError) as exc:
        diag = getattr(exc, "diagnostics", {})
        print(f"solver error: {exc} {json.dumps(diag, default=str) if diag else ''}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
