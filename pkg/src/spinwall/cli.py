"""Command-line front end.

Every artifact carries a reproducibility header: JSON outputs embed a
``meta`` record, CSV outputs start with ``#`` comment lines holding the
resolved configuration and the package version.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from ._kernels import BACKEND
from ._parallel import ordered_map, thread_count
from .chirality import read_chirality_csv
from .config import KINDS, ConfigError, ExperimentConfig, load, model_params, validate
from .energy_1d import breakdown
from .energy_2d import ModelParams2D, energy_record
from .geometry import SystemGeometry
from .limits import (ScalingSchedule, estimate_R_constant, fhom_estimate, limit_2d, limit_second_order_finite_l,
                     limit_second_order_l0, sharpen, wall_schedule, write_convergence_csv)
from .minimize import MinimizeOptions, minimize_chain, minimize_field2d
from .spin_field import read_chain, read_field, write_chain, write_field


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _vec(text: str) -> np.ndarray:
    return np.array([float(x) for x in text.split(",")])


# ---------------------------------------------------------------------------
# resolution of config + flags


def _config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = load(args.config)
    else:
        cfg = ExperimentConfig()
        if args.command in KINDS:
            cfg.kind = args.command
    if getattr(args, "R", None) is not None or getattr(args, "v1", None) is not None:
        v1 = _vec(args.v1) if args.v1 else (cfg.geometry.v1 if cfg.geometry else np.array([0.0, 0.0, 1.0]))
        v2 = _vec(args.v2) if args.v2 else (cfg.geometry.v2 if cfg.geometry else -v1)
        R = args.R if args.R is not None else cfg.geometry.R
        cfg.geometry = SystemGeometry(v1, v2, R)
    for key in ("alpha", "delta", "k"):
        val = getattr(args, key, None)
        if val is not None:
            cfg.model[key] = val
            if key == "alpha":
                cfg.model.pop("delta", None)
            if key == "delta":
                cfg.model.pop("alpha", None)
    if getattr(args, "ns", None):
        ns = [int(x) for x in args.ns.split(",")]
        k = cfg.model.get("k", 1.0)
        if args.l is not None:
            cfg.schedule = ScalingSchedule.fixed_l(ns, args.l, k)
        else:
            expo = args.delta_exponent if args.delta_exponent is not None else 2.0 / 3.0
            cfg.schedule = ScalingSchedule.power(ns, expo, k)
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.experiment.setdefault("threads", str(thread_count(args.threads)))
    cfg.experiment["mm_literal"] = bool(args.mm_literal)
    cfg.experiment["backend"] = BACKEND
    return cfg


def _need(cfg, what):
    if what == "geometry" and cfg.geometry is None:
        raise ConfigError(["geometry is required (give --R or a [geometry] section)"])
    if what == "model" and not cfg.model:
        raise ConfigError(["model is required (give --alpha/--delta or a [model] section)"])
    if what == "schedule" and cfg.schedule is None:
        raise ConfigError(["schedule is required (give --ns or a [schedule] section)"])


def _meta(cfg: ExperimentConfig, command: str) -> dict:
    return {"command": command, "version": __version__, "config": cfg.resolved()}


def _emit_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _header_lines(cfg, command):
    return [f"spinwall {__version__} {command}", "config " + json.dumps(cfg.resolved(), sort_keys=True)]


def _write_rows(path, header, columns, rows):
    fh = open(path, "w", newline="", encoding="utf-8") if path else sys.stdout
    try:
        for line in header:
            fh.write(f"# {line}\n")
        wr = csv.writer(fh)
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_fmt(v) if isinstance(v, float) else v for v in (r[c] for c in columns)])
    finally:
        if path:
            fh.close()


# ---------------------------------------------------------------------------
# commands


def cmd_energy(args):
    cfg = _config(args)
    _need(cfg, "model")
    chain = read_chain(args.chain)
    cfg.geometry = chain.geom
    params = model_params(cfg.model)
    b = breakdown(chain, params, literal=args.mm_literal)
    _emit_json({"meta": _meta(cfg, "energy"), "breakdown": b.to_dict()}, args.out)
    return 0


def _options(args, **extra) -> MinimizeOptions:
    kw = {}
    if getattr(args, "max_iterations", None) is not None:
        kw["max_iterations"] = args.max_iterations
    if getattr(args, "tol", None) is not None:
        kw["gradient_tolerance"] = args.tol
    if getattr(args, "method", None):
        kw["method"] = args.method
    kw.update(extra)
    return MinimizeOptions(**kw)


def cmd_minimize(args):
    cfg = _config(args)
    _need(cfg, "model")
    chain = read_chain(args.chain)
    cfg.geometry = chain.geom
    params = model_params(cfg.model)
    pins = tuple(float(x) for x in args.pins.split(",")) if args.pins else None
    opts = _options(args, enforce_bc=args.enforce_bc, chirality_pins=pins, seed=cfg.seed)
    out, rep = minimize_chain(chain, params, opts)
    write_chain(out, args.out)
    if args.report:
        _emit_json({"meta": _meta(cfg, "minimize"), "report": rep.to_dict()}, args.report)
    if args.trace:
        rows = [{"iteration": i, "energy": float(e)} for i, e in enumerate(rep.energy_trace)]
        _write_rows(args.trace, _header_lines(cfg, "minimize"), ["iteration", "energy"], rows)
    print(json.dumps({"status": rep.status, "iterations": rep.iterations, "energy": rep.energy}))
    return 0 if rep.converged else 3


def cmd_wall(args):
    cfg = _config(args)
    _need(cfg, "geometry")
    _need(cfg, "schedule")
    rows = wall_schedule(cfg.schedule, cfg.geometry, _options(args), threads=int(cfg.experiment["threads"]))
    write_convergence_csv(rows, args.out or cfg.experiment.get("output", "wall.csv"), _header_lines(cfg, "wall"))
    return 0 if any(r["status"] == "converged" for r in rows) else 4


def _fhom_points(args, cfg):
    if args.z:
        return [(_vec(z), float("nan")) for z in args.z]
    g = cfg.geometry
    ts = np.linspace(0.0, 1.0, args.segment)
    c, e = g.centers[0], g.e1[0]
    return [(c + t * g.R * e, float(t)) for t in ts]


def cmd_fhom(args):
    cfg = _config(args)
    _need(cfg, "geometry")
    _need(cfg, "model")
    params = model_params(cfg.model)
    pts = _fhom_points(args, cfg)

    def one(item):
        z, t = item
        return z, t, fhom_estimate(z, params, args.window, cfg.geometry, args.rho, args.restarts, cfg.seed)

    rows = []
    for z, t, res in ordered_map(one, pts, int(cfg.experiment["threads"])):
        rows.append({"z1": float(z[0]), "z2": float(z[1]), "z3": float(z[2]), "t": t, "k": res.k, "rho": res.rho,
                     "value": res.value, "lower_bound": res.lower_bound, "status": res.status})
    cols = ["z1", "z2", "z3", "t", "k", "rho", "value", "lower_bound", "status"]
    _write_rows(args.out, _header_lines(cfg, "fhom"), cols, rows)
    return 0 if any(r["status"] == "ok" for r in rows) else 4


def cmd_junction(args):
    cfg = _config(args)
    _need(cfg, "geometry")
    _need(cfg, "schedule")
    value, rows, stable = estimate_R_constant(cfg.schedule, cfg.geometry, starts=args.starts, seed=cfg.seed)
    header = _header_lines(cfg, "junction") + [f"value {_fmt(value)} stable {stable}"]
    write_convergence_csv(rows, args.out or cfg.experiment.get("output", "junction.csv"), header)
    return 0


def cmd_sweep(args):
    cfg = _config(args)
    kind = cfg.experiment.get("sweep", cfg.kind)
    if kind == "wall":
        return cmd_wall(args)
    if kind == "junction":
        return cmd_junction(args)
    if kind == "fhom":
        return cmd_fhom(args)
    raise ConfigError([f"sweep kind must be wall, junction or fhom, got {kind!r}"])


def cmd_field2d(args):
    cfg = _config(args)
    _need(cfg, "model")
    fld = read_field(args.field)
    cfg.geometry = fld.geom
    params = ModelParams2D(delta=model_params(cfg.model).delta, k=cfg.model.get("k", 1.0))
    report = None
    if args.minimize:
        pins = tuple(float(x) for x in args.row_pins.split(",")) if args.row_pins else None
        fld, rep = minimize_field2d(fld, params, _options(args), row_pins=pins)
        report = rep.to_dict()
        if args.field_out:
            write_field(fld, args.field_out)
    _emit_json({"meta": _meta(cfg, "field2d"), "energy": energy_record(fld, params), "report": report}, args.out)
    return 0


def cmd_limit_eval(args):
    cfg = _config(args)
    f = read_chirality_csv(args.chirality)
    if args.regime == "l0":
        value = limit_second_order_l0(f)
    elif args.regime == "finite":
        if args.l is None:
            raise ConfigError(["--l is required for the finite-l regime"])
        lam = args.spacing if args.spacing is not None else 1.0 / max(1, f.site.max() + 1)
        value = limit_second_order_finite_l(replace(f, lam=lam), args.l)
    else:
        lam = args.spacing if args.spacing is not None else 1.0 / f.w.shape[0]
        f = replace(f, lam=lam)
        value = limit_2d(sharpen(f) if args.sharpen else f)
    _emit_json({"meta": _meta(cfg, "limit-eval"), "regime": args.regime, "value": value, "convention": "normalized"},
               args.out)
    return 0


def cmd_validate(args):
    problems = validate(args.config_file)
    for p in problems:
        print(p)
    return 1 if any(p.startswith("error") for p in problems) else 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p, geometry=True, model=True, schedule=False):
    p.add_argument("--config", help="experiment configuration file")
    p.add_argument("--out", help="output path (stdout when omitted)")
    if geometry:
        p.add_argument("--R", type=float, help="circle radius")
        p.add_argument("--v1", help="first axis, comma separated (default 0,0,1)")
        p.add_argument("--v2", help="second axis (default -v1)")
    if model:
        p.add_argument("--alpha", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--k", type=float)
    if schedule:
        p.add_argument("--ns", help="comma separated n values (lambda = 1/n)")
        p.add_argument("--delta-exponent", type=float, help="delta = n^(-exponent)")
        p.add_argument("--l", type=float, help="choose delta so that lambda/sqrt(2 delta) = l")


def _add_opt(p):
    p.add_argument("--method", choices=["newton", "gradient"])
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--tol", type=float, help="gradient tolerance")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spinwall", description="frustrated spin chains on two circles")
    ap.add_argument("--version", action="version", version=f"spinwall {__version__}")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--threads", type=int, default=None, help="worker threads (default $SPINWALL_THREADS or 1)")
    ap.add_argument("--mm-literal", action="store_true", help="literal renormalizing constant in interval energies")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("energy", help="energy breakdown of a stored chain")
    p.add_argument("chain")
    _add_common(p, geometry=False)
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("minimize", help="minimize a stored chain over angles")
    p.add_argument("chain")
    _add_common(p, geometry=False)
    _add_opt(p)
    p.add_argument("--report", help="JSON report path")
    p.add_argument("--trace", help="CSV energy trace path")
    p.add_argument("--enforce-bc", action="store_true", help="impose <u0,u1> = <u(N-1),uN>")
    p.add_argument("--pins", help="left,right pinned turn angles of the two end bonds")
    p.set_defaults(func=cmd_minimize)

    p = sub.add_parser("wall", help="measured wall cost along a schedule")
    _add_common(p, model=False, schedule=True)
    _add_opt(p)
    p.set_defaults(func=cmd_wall)

    p = sub.add_parser("fhom", help="homogenized cell-problem estimates")
    _add_common(p)
    p.add_argument("--z", action="append", help="target average x,y,z (repeatable)")
    p.add_argument("--segment", type=int, default=9, help="points on the segment from c1 to a point of S1")
    p.add_argument("--window", type=int, default=64)
    p.add_argument("--rho", type=float)
    p.add_argument("--restarts", type=int, default=8)
    p.set_defaults(func=cmd_fhom)

    p = sub.add_parser("junction", help="junction constant along a schedule")
    _add_common(p, model=False, schedule=True)
    p.add_argument("--starts", type=int, default=16)
    p.set_defaults(func=cmd_junction)

    p = sub.add_parser("sweep", help="run the sweep configured in [experiment]")
    _add_common(p, schedule=True)
    _add_opt(p)
    p.add_argument("--z", action="append")
    p.add_argument("--segment", type=int, default=9)
    p.add_argument("--window", type=int, default=64)
    p.add_argument("--rho", type=float)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--starts", type=int, default=16)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("field2d", help="planar energy record, optionally after minimization")
    p.add_argument("field")
    _add_common(p, geometry=False)
    _add_opt(p)
    p.add_argument("--minimize", action="store_true")
    p.add_argument("--row-pins", help="left,right turns forced on the first and last three squares of each row")
    p.add_argument("--field-out", help="write the minimized field here")
    p.set_defaults(func=cmd_field2d)

    p = sub.add_parser("limit-eval", help="evaluate a limit functional on a chirality CSV")
    p.add_argument("chirality")
    _add_common(p, geometry=False, model=False)
    p.add_argument("--regime", choices=["l0", "finite", "2d"], required=True)
    p.add_argument("--l", type=float)
    p.add_argument("--spacing", type=float, help="lattice spacing (default 1/number of rows)")
    p.add_argument("--sharpen", action="store_true", help="replace 2D values by their signs first")
    p.set_defaults(func=cmd_limit_eval)

    p = sub.add_parser("validate", help="check a configuration file")
    p.add_argument("config_file")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        os.environ["SPINWALL_THREADS"] = str(args.threads)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "problems": exc.problems}), file=sys.stderr)
        return 2
    except (ValueError, OSError, ArithmeticError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
