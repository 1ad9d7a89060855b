"""Experiment configuration: bracketed sections with key = value lines.

    [geometry]
    v1 = 0, 0, 1
    v2 = 0, 0, -1
    R = 0.9999

    [model]
    delta = 0.01        ; or alpha = 3.96
    k = 1

    [schedule]
    n = 1024, 2048, 4096
    delta_exponent = 0.6667   ; or l = 1, or delta = d1, d2, ...
    l_target = 0

    [experiment]
    kind = wall
    output = wall.csv
    seed = 0
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import GeometryError, SystemGeometry, r_max
from .limits import ScalingSchedule

KINDS = ("energy", "minimize", "wall", "fhom", "junction", "sweep", "field2d", "limit-eval")

KNOWN = {
    "geometry": {"v1", "v2", "r"},
    "model": {"alpha", "delta", "k"},
    "schedule": {"n", "delta_exponent", "l", "delta", "k", "l_target", "eta_target"},
    "experiment": {"kind", "output", "seed", "input", "z", "window", "rho", "restarts", "sweep", "regime",
                   "stub_left", "stub_right", "starts", "threads", "grid", "enforce_bc"},
}


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


@dataclass
class ExperimentConfig:
    geometry: SystemGeometry | None = None
    model: dict = field(default_factory=dict)
    schedule: ScalingSchedule | None = None
    kind: str = "energy"
    experiment: dict = field(default_factory=dict)
    seed: int = 0
    raw: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        return {
            "version": __version__,
            "geometry": self.geometry.to_dict() if self.geometry else None,
            "model": self.model,
            "schedule": [list(p) for p in self.schedule.points] if self.schedule else None,
            "kind": self.kind,
            "experiment": self.experiment,
            "seed": self.seed,
        }

    def header(self) -> str:
        return json.dumps(self.resolved(), sort_keys=True)


def _read(text_or_path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    p = Path(str(text_or_path))
    if "\n" not in str(text_or_path) and p.exists():
        cp.read(p, encoding="utf-8")
    else:
        cp.read_string(str(text_or_path))
    return cp


def _schedule(sec) -> tuple[ScalingSchedule | None, list[str]]:
    problems = []
    if "n" not in sec:
        return None, problems
    ns = [int(x) for x in _floats(sec["n"])]
    k = float(sec.get("k", "1"))
    l_target = sec.get("l_target")
    l_target = None if l_target is None else float(l_target)
    eta = sec.get("eta_target")
    eta = None if eta is None else float(eta)
    rules = [key for key in ("delta_exponent", "l", "delta") if key in sec]
    if len(rules) != 1:
        problems.append("schedule: give exactly one of delta_exponent, l, delta")
        return None, problems
    if rules[0] == "delta_exponent":
        sch = ScalingSchedule.power(ns, float(sec["delta_exponent"]), k, l_target, eta)
    elif rules[0] == "l":
        l = float(sec["l"])
        sch = ScalingSchedule.fixed_l(ns, l, k)
        sch = ScalingSchedule(sch.points, l if l_target is None else l_target, eta)
    else:
        ds = _floats(sec["delta"])
        if len(ds) != len(ns):
            problems.append("schedule: delta list must match n list")
            return None, problems
        sch = ScalingSchedule(tuple((n, 1.0 / n, d, k) for n, d in zip(ns, ds)), l_target, eta)
    return sch, problems


def validate(source) -> list[str]:
    """Every violated invariant (errors prefixed 'error:', warnings 'warning:')."""
    try:
        cp = _read(source)
    except configparser.Error as exc:
        return [f"error: unreadable config: {exc}"]
    out = []
    for name in cp.sections():
        if name not in KNOWN:
            out.append(f"error: unknown section [{name}]")
            continue
        for key in cp[name]:
            if key not in KNOWN[name]:
                out.append(f"error: unknown key {name}.{key}")
    if cp.has_section("geometry"):
        g = cp["geometry"]
        try:
            v1, v2, R = np.array(_floats(g["v1"])), np.array(_floats(g["v2"])), float(g["r"])
            bound = r_max(v1, v2)
            if not R < bound:
                out.append(f"error: geometry.R = {R} must be below R_max = {bound:.12g}")
            else:
                SystemGeometry(v1, v2, R)
        except KeyError as exc:
            out.append(f"error: geometry is missing {exc.args[0]}")
        except (ValueError, GeometryError) as exc:
            out.append(f"error: geometry: {exc}")
    if cp.has_section("model"):
        m = cp["model"]
        if "alpha" not in m and "delta" not in m:
            out.append("error: model needs alpha or delta")
        for key in ("alpha", "delta", "k"):
            if key in m:
                try:
                    v = float(m[key])
                    if key in ("alpha", "k") and not v > 0:
                        out.append(f"error: model.{key} must be positive")
                except ValueError:
                    out.append(f"error: model.{key} is not a number")
    if cp.has_section("schedule"):
        try:
            sch, probs = _schedule(cp["schedule"])
            out += [f"error: {p}" for p in probs]
            if sch is not None:
                out += [f"warning: {w}" for w in sch.check()]
        except ValueError as exc:
            out.append(f"error: schedule: {exc}")
    if cp.has_section("experiment"):
        kind = cp["experiment"].get("kind", "energy")
        if kind not in KINDS:
            out.append(f"error: experiment.kind must be one of {', '.join(KINDS)}")
    return out


def load(source) -> ExperimentConfig:
    problems = [p for p in validate(source) if p.startswith("error")]
    if problems:
        raise ConfigError(problems)
    cp = _read(source)
    cfg = ExperimentConfig(raw={s: dict(cp[s]) for s in cp.sections()})
    if cp.has_section("geometry"):
        g = cp["geometry"]
        cfg.geometry = SystemGeometry(np.array(_floats(g["v1"])), np.array(_floats(g["v2"])), float(g["r"]))
    if cp.has_section("model"):
        cfg.model = {k: float(v) for k, v in cp["model"].items()}
    if cp.has_section("schedule"):
        cfg.schedule, _ = _schedule(cp["schedule"])
    if cp.has_section("experiment"):
        e = dict(cp["experiment"])
        cfg.kind = e.pop("kind", "energy")
        cfg.seed = int(e.pop("seed", "0"))
        cfg.experiment = e
    return cfg


def model_params(model: dict):
    from .energy_1d import ModelParams1D

    if "delta" in model:
        return ModelParams1D(delta=model["delta"], k=model.get("k", 1.0))
    return ModelParams1D(alpha=model["alpha"], k=model.get("k", 1.0))
