"""Continuum limit functionals and the numerical estimators that connect
lattice measurements to them: homogenized cell problems, the junction
constant, the three wall regimes, the planar limit and measured wall costs.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize as sp_minimize

from . import _kernels
from ._parallel import ordered_map
from .chirality import (ChiralityField1D, ChiralityField2D, directional_variation, discrete_curl_residual,
                        normalize_chirality, transform_T1d, transform_T2d)
from .energy_1d import ModelParams1D, remainder_from_arrays
from .energy_2d import ModelParams2D, energy_H2d
from .geometry import SystemGeometry, embed, embed_derivative
from .minimize import MinimizeOptions, build_wall_profile, ground_turn, minimize_chain, minimize_field2d, wall_turns
from .spin_field import Piece1D, SpinField2D

WALL_L0 = 8.0 / 3.0
WALL_2D = 4.0 / 3.0
VALUE_TOL = 1e-6


class InfeasibleError(ValueError):
    pass


# ---------------------------------------------------------------------------
# schedules


@dataclass(frozen=True)
class ScalingSchedule:
    """Points (n, lambda, delta, k) with the derived l = lambda/sqrt(2 delta),
    eta = lambda k and eps = lambda/sqrt(delta)."""

    points: tuple
    l_target: float | None = None
    eta_target: float | None = None

    @classmethod
    def power(cls, ns, delta_exponent: float, k: float = 1.0, l_target=None, eta_target=None) -> "ScalingSchedule":
        """lambda = 1/n, delta = n^(-delta_exponent), constant k."""
        pts = tuple((int(n), 1.0 / n, float(n) ** (-delta_exponent), float(k)) for n in ns)
        return cls(pts, l_target, eta_target)

    @classmethod
    def fixed_l(cls, ns, l: float, k: float = 1.0) -> "ScalingSchedule":
        """lambda = 1/n and delta chosen so that lambda/sqrt(2 delta) = l."""
        pts = tuple((int(n), 1.0 / n, 0.5 / (l * n) ** 2, float(k)) for n in ns)
        return cls(pts, l, None)

    @property
    def n(self):
        return [p[0] for p in self.points]

    def l_values(self) -> list[float]:
        return [lam / math.sqrt(2.0 * delta) for _, lam, delta, _ in self.points]

    def eta_values(self) -> list[float]:
        return [lam * k for _, lam, _, k in self.points]

    def eps_values(self) -> list[float]:
        return [lam / math.sqrt(delta) for _, lam, delta, _ in self.points]

    def check(self) -> list[str]:
        """Consistency warnings (empty when the schedule looks sound)."""
        out = []
        lams = [p[1] for p in self.points]
        if any(b >= a for a, b in zip(lams, lams[1:])):
            out.append("lambda_n is not strictly decreasing")
        for n, lam, delta, k in self.points:
            if not 0 < delta:
                out.append(f"delta must be positive (n={n})")
            if not k > 0:
                out.append(f"k must be positive (n={n})")
        ls = self.l_values()
        if self.l_target is not None and len(ls) > 1:
            if self.l_target == 0 and any(b > a for a, b in zip(ls, ls[1:])):
                out.append("l_n is not decreasing although the target is l = 0")
            elif math.isinf(self.l_target) and any(b < a for a, b in zip(ls, ls[1:])):
                out.append("l_n is not increasing although the target is l = inf")
            elif 0 < self.l_target < math.inf and max(abs(x - self.l_target) for x in ls) > 0.05 * self.l_target:
                out.append(f"l_n drifts away from the target {self.l_target}")
        eta = self.eta_values()
        if self.eta_target is not None and 0 < self.eta_target < math.inf and len(eta) > 1:
            if max(abs(x - self.eta_target) for x in eta) > 0.05 * self.eta_target:
                out.append(f"lambda_n k_n drifts away from eta = {self.eta_target}")
        return out


# ---------------------------------------------------------------------------
# homogenized cell problem


@dataclass
class CellProblemResult:
    z: np.ndarray
    k: int
    rho: float
    value: float
    restarts: int
    best: np.ndarray | None
    status: str = "ok"
    circle: int | None = None
    lower_bound: float = float("nan")
    average_distance: float = float("nan")
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "z": [float(x) for x in self.z],
            "k": self.k,
            "rho": self.rho,
            "value": self.value,
            "restarts": self.restarts,
            "status": self.status,
            "circle": self.circle,
            "lower_bound": self.lower_bound,
            "average_distance": self.average_distance,
        }


def disk_distance(geom: SystemGeometry, z, d: int) -> float:
    """Distance from z to the closed disk co(S_d)."""
    k = d - 1
    rel = np.asarray(z, float) - geom.centers[k]
    h = float(rel @ geom.axes[k])
    p = rel - h * geom.axes[k]
    r = float(np.linalg.norm(p))
    return math.hypot(h, max(0.0, r - geom.R))


def default_rho(k: int) -> float:
    """Diagonal schedule rho = max(0.01, 4/sqrt(k))."""
    return max(0.01, 4.0 / math.sqrt(k))


class _CellObjective:
    def __init__(self, geom, d, z, alpha, k, rho):
        self.geom, self.d, self.z, self.alpha, self.k, self.rho = geom, d, np.asarray(z, float), alpha, k, rho
        i = np.arange(k - 2)
        self.p = np.concatenate([i, i])
        self.q = np.concatenate([i + 1, i + 2])
        self.w = np.concatenate([np.full(k - 2, -alpha), np.ones(k - 2)])
        self.dd = np.full(k, d)

    def energy(self, phi):
        vals, g = _kernels.pair_sum(phi, self.dd, self.p, self.q, self.w, self.geom)
        return math.fsum(vals) / (self.k - 2), g / (self.k - 2)

    def average(self, phi):
        return embed(self.geom, self.dd, phi).mean(axis=0)

    def violation(self, phi):
        return max(0.0, float(np.linalg.norm(self.average(phi) - self.z)) - self.rho)

    def bc(self, phi):
        u = embed(self.geom, self.dd[[0, 1, -2, -1]], phi[[0, 1, -2, -1]])
        return float(u[0] @ u[1] - u[2] @ u[3])

    def penalized(self, phi, mu):
        f, g = self.energy(phi)
        u = embed(self.geom, self.dd, phi)
        du = embed_derivative(self.geom, self.dd, phi)
        diff = u.mean(axis=0) - self.z
        s = float(diff @ diff) - self.rho**2
        if s > 0:
            f += mu * s * s
            g = g + mu * 2.0 * s * 2.0 * (du @ diff) / self.k
        r = self.bc(phi)
        f += mu * r * r
        # d r / d phi at the four end sites
        gr = np.zeros_like(g)
        gr[0] += du[0] @ u[1]
        gr[1] += u[0] @ du[1]
        gr[-2] -= du[-2] @ u[-1]
        gr[-1] -= u[-2] @ du[-1]
        g = g + 2.0 * mu * r * gr
        return f, g


def _cell_starts(obj: _CellObjective, restarts: int, rng) -> list[np.ndarray]:
    geom, d, k = obj.geom, obj.d, obj.k
    i = np.arange(k)
    e1, e2 = geom.e1[d - 1], geom.e2[d - 1]
    rel = obj.z - geom.centers[d - 1]
    phase = math.atan2(float(rel @ e2), float(rel @ e1))
    starts = [np.full(k, phase)]
    if obj.alpha < 4:
        th = math.acos(obj.alpha / 4.0)
        starts.append(phase + th * (i - k / 2))
    while len(starts) < restarts:
        th = rng.uniform(-math.pi, math.pi)
        starts.append(rng.uniform(-math.pi, math.pi) + th * i + 0.1 * rng.standard_normal(k))
    return starts[:restarts]


def _polish(obj: _CellObjective, phi0):
    phi = np.array(phi0, float)
    for mu in (1e2, 1e4, 1e6, 1e8, 1e10):
        res = sp_minimize(obj.penalized, phi, args=(mu,), jac=True, method="L-BFGS-B",
                          options={"maxiter": 5000, "gtol": 1e-12, "ftol": 1e-15})
        phi = res.x
        if obj.violation(phi) < 1e-9 and abs(obj.bc(phi)) < 1e-10:
            break
    return phi


def fhom_estimate(z, params: ModelParams1D, k: int, geom: SystemGeometry, rho: float | None = None,
                  restarts: int = 8, seed: int = 0, threads: int | None = None) -> CellProblemResult:
    """Per-term infimum of E over k-site single-circle windows obeying the end
    condition, with spin average within rho of z.

    The returned value is the best found (an upper bound); ``lower_bound`` is
    the per-term bound -(1 + alpha^2/8).
    """
    z = np.asarray(z, float)
    if k < 4:
        raise ValueError("window needs at least 4 sites")
    rho = default_rho(k) if rho is None else float(rho)
    lower = -params.ground_density
    circles = [d for d in (1, 2) if disk_distance(geom, z, d) <= rho]
    if not circles:
        return CellProblemResult(z, k, rho, float("nan"), 0, None, "infeasible", None, lower)
    best = None
    history = []
    rng = np.random.default_rng(seed)
    for d in circles:
        obj = _CellObjective(geom, d, z, params.alpha, k, rho)
        starts = _cell_starts(obj, restarts, rng)
        for phi in ordered_map(lambda s: _polish(obj, s), starts, threads):
            if obj.violation(phi) > 1e-7 or abs(obj.bc(phi)) > 1e-8:
                history.append(best[0] if best else float("nan"))
                continue
            val = obj.energy(phi)[0]
            if best is None or val < best[0]:
                best = (val, phi, d, float(np.linalg.norm(obj.average(phi) - z)))
            history.append(best[0])
    if best is None:
        return CellProblemResult(z, k, rho, float("nan"), restarts, None, "not_converged", None, lower,
                                 history=history)
    val, phi, d, dist = best
    if val < lower - 1e-9:
        raise AssertionError(f"cell value {val} below the lower bound {lower}")
    return CellProblemResult(z, k, rho, val, restarts * len(circles), phi, "ok", d, lower, dist, history)


def limit_zero_order(pieces, eta: float, params: ModelParams1D, geom: SystemGeometry, k: int = 64,
                     rho: float | None = None, fhom=None, **kwargs) -> float:
    """sum |region| f_hom(value) + eta * (#circle changes) * |v1 - v2|.

    ``pieces`` lists (length, value, d). ``fhom(z, d)`` may be supplied to reuse
    cell values; by default fhom_estimate is called.
    """
    pieces = list(pieces)
    ds = [int(p[2]) for p in pieces]
    jumps = sum(1 for a, b in zip(ds, ds[1:]) if a != b)
    if math.isinf(eta) and jumps:
        raise ValueError("eta = inf admits single-circle limits only")
    total = 0.0
    for length, z, d in pieces:
        if fhom is not None:
            val = fhom(z, d)
        else:
            res = fhom_estimate(z, params, k, geom, rho, **kwargs)
            if res.status != "ok":
                raise InfeasibleError(f"cell problem at z={list(z)} is {res.status}")
            val = res.value
        total += float(length) * val
    return total + (eta * jumps * geom.axis_gap if jumps else 0.0)


# ---------------------------------------------------------------------------
# first order: junctions


def _junction_arrays(geom, left_phi, right_phi):
    left_phi = np.asarray(left_phi, float)
    right_phi = np.asarray(right_phi, float)
    if left_phi.size < 3 or right_phi.size < 3:
        raise ValueError("junction stubs need at least 3 spins each")
    d = np.concatenate([np.ones(left_phi.size, int), np.full(right_phi.size, 2)])
    phi = np.concatenate([left_phi, right_phi])
    pieces = (Piece1D(0, left_phi.size, 1), Piece1D(left_phi.size, d.size, 2))
    return d, phi, pieces


def junction_cost(params: ModelParams1D, left_config, right_config, geom: SystemGeometry, lam: float = 1.0) -> float:
    """Junction remainder divided by lambda for a left stub on S_1 followed by
    a right stub on S_2 (chart angles)."""
    d, phi, pieces = _junction_arrays(geom, left_config, right_config)
    return remainder_from_arrays(geom, d, phi, pieces, 0, lam, params.alpha) / lam


def junction_lower_bound(params: ModelParams1D) -> float:
    """Crude bound from unit dot products: -4(1 + alpha)."""
    return -4.0 * (1.0 + params.alpha)


def _min_junction(params, geom, n_left, n_right, starts, seed, warm=None):
    rng = np.random.default_rng(seed)
    lower = junction_lower_bound(params)

    def f(x):
        v = junction_cost(params, x[:n_left], x[n_left:], geom)
        if v < lower - 1e-12:
            raise AssertionError(f"junction cost {v} below {lower}")
        return v

    inits = [] if warm is None else [np.array(warm, float)]
    th = ground_turn(params, geom.R) if params.delta <= 2 * geom.R**2 else 0.0
    for s in (1, -1):
        inits.append(np.concatenate([s * th * np.arange(n_left), s * th * np.arange(n_right)]))
    while len(inits) < starts:
        inits.append(rng.uniform(-math.pi, math.pi, n_left + n_right))
    best = None
    for x0 in inits:
        res = sp_minimize(f, x0, method="Powell", options={"xtol": 1e-10, "ftol": 1e-14, "maxfev": 20000})
        val = float(res.fun)
        if best is None or val < best[0]:
            best = (val, np.array(res.x))
    return best


def estimate_R_constant(schedule: ScalingSchedule, geom: SystemGeometry, n_left: int = 3, n_right: int = 3,
                        starts: int = 16, seed: int = 0):
    """Minimize the junction cost over the free boundary spins at every
    schedule point (alpha_n from delta_n). Returns (value, rows, stable)."""
    rows = []
    warm = None
    prev = None
    for n, lam, delta, k in schedule.points:
        params = ModelParams1D(delta=delta, k=k)
        val, x = _min_junction(params, geom, n_left, n_right, starts, seed, warm)
        warm = x
        cauchy = float("nan") if prev is None else abs(val - prev) / max(abs(prev), 1e-300)
        rows.append({"n": n, "lambda": lam, "delta": delta, "l_n": lam / math.sqrt(2 * delta), "value": val,
                     "cauchy_diff": cauchy, "status": "ok"})
        prev = val
    stable = len(rows) >= 2 and rows[-1]["cauchy_diff"] < 0.01
    return rows[-1]["value"], rows, stable


# ---------------------------------------------------------------------------
# second order, one dimension


def _as_normalized(field, use_raw: bool):
    if use_raw:
        return field.raw if isinstance(field, ChiralityField1D) else field
    return normalize_chirality(field)


def limit_second_order_l0(field: ChiralityField1D, use_raw: bool = False) -> float:
    """(8/3) times the total variation of the chirality over all pieces; values must be +-1."""
    vals = field.raw if use_raw else _as_normalized(field, False).w
    keep = ~field.synthetic
    v = vals[keep]
    if v.size and np.max(np.abs(np.abs(v) - 1.0)) > VALUE_TOL:
        raise ValueError("chirality is not +-1 everywhere; use limit_second_order_finite_l for diffuse profiles")
    total = 0.0
    piece = field.piece[keep]
    for j in np.unique(piece):
        total += float(np.abs(np.diff(v[piece == j])).sum())
    return WALL_L0 * total


def modica_mortola(w, h: float, l: float) -> float:
    """(1/l) int (w^2 - 1)^2 (trapezoid) + l int w'^2 (forward differences) on a uniform grid."""
    w = np.asarray(w, float)
    if w.size < 2:
        return 0.0
    pot = (w * w - 1.0) ** 2
    bulk = h * (pot.sum() - 0.5 * (pot[0] + pot[-1]))
    grad = np.diff(w) / h
    return bulk / l + l * h * float(grad @ grad)


def limit_second_order_finite_l(w, l: float, h: float | None = None) -> float:
    """Diffuse wall functional summed over pieces.

    ``w`` is a normalized ChiralityField1D (bonds at spacing lambda) or a list
    of per-piece sample arrays with spacing ``h``.
    """
    if not 0 < l < math.inf:
        raise ValueError("l must be finite and positive")
    if isinstance(w, ChiralityField1D):
        f = normalize_chirality(w)
        h = f.lam
        samples = [f.piece_values(j) for j in f.pieces()]
    else:
        if h is None:
            raise ValueError("grid spacing h is required for raw samples")
        samples = [np.asarray(s, float) for s in w]
    total = 0.0
    for s in samples:
        if s.size and abs(abs(s[0]) - abs(s[-1])) > VALUE_TOL:
            warnings.warn("piece violates |w(a)| = |w(b)|", RuntimeWarning)
        total += modica_mortola(s, h, l)
    return total


# ---------------------------------------------------------------------------
# second order, two dimensions


def limit_2d(field: ChiralityField2D, use_raw: bool = False) -> float:
    """(4/3) sum over components of |D_1 w| + |D_2 z|; values must be +-1 and curl-free."""
    f = field if use_raw else normalize_chirality(field)
    inside = f.interior
    vals = np.concatenate([f.w[inside], f.z[inside]])
    if vals.size and np.max(np.abs(np.abs(vals) - 1.0)) > VALUE_TOL:
        raise ValueError("chirality is not +-1 on the component interiors")
    curl = discrete_curl_residual(f.w, f.z, f.lam, inside)
    if curl > VALUE_TOL:
        raise ValueError(f"curl condition violated (residual {curl:.3g}); the field is outside the domain")
    tv = directional_variation(f.w, f.labels, f.lam, 1, inside) + directional_variation(f.z, f.labels, f.lam, 2, inside)
    return WALL_2D * tv


def sharpen(field: ChiralityField2D) -> ChiralityField2D:
    """Replace normalized chirality by its sign on the interior."""
    f = normalize_chirality(field)
    w = np.where(f.interior, np.where(f.w >= 0, 1.0, -1.0), 0.0)
    z = np.where(f.interior, np.where(f.z >= 0, 1.0, -1.0), 0.0)
    return replace(f, w=w, z=z)


# ---------------------------------------------------------------------------
# measured walls


@dataclass
class WallMeasurement:
    n: int
    delta: float
    value: float
    status: str
    iterations: int
    chain: object = None

    @property
    def l(self) -> float:
        return (1.0 / self.n) / math.sqrt(2.0 * self.delta)


def wall_offset(n: int, delta: float, R: float) -> float:
    """Normalized energy of a perfect helix on a circle of radius R: sqrt(2)(1-R^2)sqrt(delta)(N-1)."""
    return math.sqrt(2.0) * (1.0 - R * R) * math.sqrt(delta) * (n - 1)


def wall_cost_measured(params: ModelParams1D, n: int, geom: SystemGeometry, options: MinimizeOptions | None = None,
                       center: float = 0.5, d: int = 1) -> WallMeasurement:
    """Minimal normalized H over single-circle chains whose first and last two
    bonds are pinned to opposite ground turns."""
    th = ground_turn(params, geom.R)
    opts = options or MinimizeOptions()
    opts = MinimizeOptions(**{**opts.__dict__, "chirality_pins": (-th, th), "keep_trace": False})
    start = build_wall_profile(n, params, d, center, geom)
    chain, rep = minimize_chain(start, params, opts)
    return WallMeasurement(n, params.delta, rep.energy, rep.status, rep.iterations, chain)


def wall_schedule(schedule: ScalingSchedule, geom: SystemGeometry, options: MinimizeOptions | None = None,
                  threads: int | None = None) -> list[dict]:
    """wall_cost_measured at every schedule point, with successive relative changes."""

    def one(pt):
        n, lam, delta, k = pt
        return wall_cost_measured(ModelParams1D(delta=delta, k=k), n, geom, options)

    meas = ordered_map(one, schedule.points, threads)
    rows, prev = [], None
    for (n, lam, delta, k), m in zip(schedule.points, meas):
        cauchy = float("nan") if prev is None else abs(m.value - prev) / abs(prev)
        rows.append({"n": n, "lambda": lam, "delta": delta, "l_n": lam / math.sqrt(2 * delta), "value": m.value,
                     "cauchy_diff": cauchy, "status": m.status})
        prev = m.value
    return rows


def wall_cost_2d(n: int, params: ModelParams2D, geom: SystemGeometry, options: MinimizeOptions | None = None,
                 rows: int | None = None):
    """Minimized n x rows field with a chirality wall forced across every row.

    Returns (energy per unit interface height, minimized field, report).
    """
    rows = n if rows is None else rows
    lam = 1.0 / n
    p1 = ModelParams1D(delta=params.delta)
    th = ground_turn(p1, geom.R)
    bonds = wall_turns(n, p1, 0.5, geom.R)
    phi_row = np.concatenate([[0.0], np.cumsum(bonds[: n - 1])])
    phi = phi_row[:, None] + th * np.arange(rows)[None, :]
    mask = np.ones((n, rows), bool)
    start = SpinField2D(lam, mask, np.ones((n, rows), int), phi, geom)
    out, rep = minimize_field2d(start, params, options, row_pins=(-th, th))
    height = rows * lam
    return energy_H2d(out, params) / height, out, rep


def extract_chirality_2d(field: SpinField2D, params: ModelParams2D) -> ChiralityField2D:
    return normalize_chirality(transform_T2d(field, params)[0])


def extract_chirality_1d(chain, params: ModelParams1D) -> ChiralityField1D:
    return normalize_chirality(transform_T1d(chain, params)[0])


# ---------------------------------------------------------------------------
# output


CONVERGENCE_COLUMNS = ["n", "lambda", "delta", "l_n", "value", "cauchy_diff", "status"]


def write_convergence_csv(rows, path, header_lines=()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        wr = csv.writer(fh)
        wr.writerow(CONVERGENCE_COLUMNS)
        for r in rows:
            wr.writerow([r["n"], *(format(float(r[c]), ".17g") for c in ("lambda", "delta", "l_n", "value", "cauchy_diff")),
                         r["status"]])
