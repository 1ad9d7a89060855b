"""Analytic configurations and deterministic local minimization over angles.

The circle assignment of every site is frozen; only the chart angles move.
The default optimizer is a damped Newton method on the sparse Hessian of the
stencil energy (Levenberg damping plus Armijo backtracking), which is what
makes chains of a few thousand sites converge to machine precision in a few
dozen steps. A diagonally preconditioned gradient descent with Armijo
backtracking is available as ``method="gradient"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .energy_1d import ModelParams1D, gradient_E
from .energy_2d import ModelParams2D, index_mask, stencil_triples
from .geometry import GeometryError, SystemGeometry, embed, project_angle, wrap_angle
from .spin_field import FieldError, SpinChain1D, SpinField2D, lattice_count


class FrustrationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# constructors


def _lam(n: int) -> float:
    return 1.0 / n


def build_ferromagnet(n: int, d: int, phi0: float, geom: SystemGeometry) -> SpinChain1D:
    """Constant chain with n + 1 sites (lambda = 1/n)."""
    return SpinChain1D(_lam(n), np.full(n + 1, d), np.full(n + 1, float(phi0)), geom)


def ground_turn(params: ModelParams1D, R: float) -> float:
    """Turn angle theta >= 0 with neighbour dot product alpha/4 on a circle of radius R."""
    c = (params.alpha / 4.0 - 1.0 + R * R) / (R * R)
    if c < -1.0 or c > 1.0 + 1e-15:
        lo = 0.0
        raise FrustrationError(
            f"no helix with neighbour dot alpha/4 at R={R}: need {lo} <= delta <= 2R^2 = {2 * R * R}, "
            f"got delta={params.delta}"
        )
    # 1 - cos(theta) = delta / R^2, written through the half angle for precision
    s = math.sqrt(max(params.delta, 0.0) / (2.0 * R * R))
    return 2.0 * math.asin(min(1.0, s))


def optimal_turn(params: ModelParams1D) -> float:
    """Turn angle of the energy-minimizing helix on any circle: cos theta = alpha/4."""
    if params.alpha >= 4.0:
        return 0.0
    return 2.0 * math.asin(math.sqrt(params.delta / 2.0))


def build_helix(n: int, theta: float, d: int, phi0: float, geom: SystemGeometry) -> SpinChain1D:
    i = np.arange(n + 1)
    return SpinChain1D(_lam(n), np.full(n + 1, d), phi0 + theta * i, geom)


def build_ground_helix(n: int, params: ModelParams1D, d: int, sign: int, phi0: float, geom: SystemGeometry) -> SpinChain1D:
    """Helix whose neighbours have dot product alpha/4 (n + 1 sites)."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    return build_helix(n, sign * ground_turn(params, geom.R), d, phi0, geom)


def wall_turns(n: int, params: ModelParams1D, center: float, R: float, width: float | None = None) -> np.ndarray:
    """Bond angles of a tanh chirality profile; bond i sits at x = lambda (i + 1/2)."""
    lam = _lam(n)
    ground_turn(params, R)
    ell = lam / math.sqrt(params.delta) if width is None else width
    x = lam * (np.arange(n) + 0.5)
    wbar = np.tanh((x - center) / ell)
    return 2.0 * np.arcsin(math.sqrt(params.delta / 2.0) * wbar / R)


def build_wall_profile(n: int, params: ModelParams1D, d: int, center: float, geom: SystemGeometry,
                       phi0: float = 0.0) -> SpinChain1D:
    """Chain whose normalized chirality follows tanh((x - center)/eps), eps = lambda/sqrt(delta)."""
    th = wall_turns(n, params, center, geom.R)
    phi = phi0 + np.concatenate([[0.0], np.cumsum(th)])
    return SpinChain1D(_lam(n), np.full(n + 1, d), phi, geom)


def build_oscillating(targets, n_oscillation: int, n: int, geom: SystemGeometry, d: int = 1) -> SpinChain1D:
    """u(t) = h(n_oscillation * t) with h taking the listed circle angles on
    consecutive fractions of each period.

    ``targets`` is a list of (angle, fraction) pairs, or of (3-vector, fraction)
    pairs which must all lie on S_d.
    """
    angles, fracs = [], []
    for point, frac in targets:
        if np.ndim(point) == 0:
            angles.append(float(point))
        else:
            try:
                angles.append(project_angle(geom, point, d))
            except GeometryError as exc:
                raise GeometryError(f"oscillation targets must all lie on S_{d}: {exc}") from exc
        fracs.append(float(frac))
    fracs = np.array(fracs)
    if np.any(fracs < 0) or abs(fracs.sum() - 1.0) > 1e-12:
        raise ValueError("fractions must be nonnegative and sum to 1")
    edges = np.cumsum(fracs)
    t = np.arange(n + 1) / n
    s = np.mod(n_oscillation * t, 1.0)
    k = np.searchsorted(edges, s, side="right")
    k = np.minimum(k, len(angles) - 1)
    return SpinChain1D(_lam(n), np.full(n + 1, d), np.array(angles)[k], geom)


def concatenate_recovery(chain1: SpinChain1D, chain2: SpinChain1D) -> SpinChain1D:
    """v(t) = chain1(2t) on [0, 1/2], chain2(2t - 1) on (1/2, 1]."""
    if chain1.lam != chain2.lam or chain1.geom != chain2.geom:
        raise FieldError("recovery pieces need equal spacing and geometry")
    N = chain1.N
    i = np.arange(N + 1)
    left = 2 * i <= N
    src = np.where(left, 2 * i, 2 * i - N)
    d = np.where(left, chain1.d[np.minimum(src, N)], chain2.d[np.clip(src, 0, N)])
    phi = np.where(left, chain1.phi[np.minimum(src, N)], chain2.phi[np.clip(src, 0, N)])
    return SpinChain1D(chain1.lam, d, phi, chain1.geom)


def glue_helices(n: int, params: ModelParams1D, geom: SystemGeometry, cuts, circles, signs,
                 phases=None) -> SpinChain1D:
    """Consecutive ground helices on the given circles, switching at the site indices ``cuts``."""
    bounds = [0, *cuts, n + 1]
    theta = ground_turn(params, geom.R)
    phases = phases if phases is not None else [0.0] * len(circles)
    d = np.empty(n + 1, int)
    phi = np.empty(n + 1)
    for (a, b), dd, sg, ph in zip(zip(bounds[:-1], bounds[1:]), circles, signs, phases):
        d[a:b] = dd
        phi[a:b] = ph + sg * theta * np.arange(b - a)
    return SpinChain1D(_lam(n), d, phi, geom)


def gradient(chain: SpinChain1D, params: ModelParams1D) -> np.ndarray:
    """dE/dphi at fixed circle assignment."""
    return gradient_E(chain, params)


# ---------------------------------------------------------------------------
# options, report


@dataclass
class MinimizeOptions:
    max_iterations: int = 100_000
    gradient_tolerance: float = 1e-10
    armijo: float = 1e-4
    shrink: float = 0.5
    method: str = "newton"
    formulation: str = "auto"
    seed: int = 0
    pinned_sites: tuple = ()
    chirality_pins: tuple | None = None
    enforce_bc: bool = False
    bc_tolerance: float = 1e-10
    keep_trace: bool = True


@dataclass
class MinimizeReport:
    status: str
    iterations: int
    gradient_norm: float
    energy: float
    energy_trace: list = field(default_factory=list)
    bc_residual: float = float("nan")
    formulation: str = "angle"
    objective: str = "normalized H"

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "energy": self.energy,
            "bc_residual": self.bc_residual,
            "formulation": self.formulation,
            "objective": self.objective,
            "energy_trace": list(self.energy_trace),
        }


# ---------------------------------------------------------------------------
# generic damped Newton / gradient descent


class _Problem:
    """Objective f(x) with gradient and sparse Hessian."""

    n: int

    def value(self, x) -> float: ...

    def grad(self, x) -> np.ndarray: ...

    def hess(self, x): ...


def _rounding_floor(f: float) -> float:
    return 1e2 * np.finfo(float).eps * max(1.0, abs(f))


def _factor_pd(A):
    """Sparse LU with symmetric pivoting, or None when A is not positive definite.

    With diagonal pivots and equal row/column permutations the pivots are the
    LDL^T diagonal, so their signs give the inertia of A.
    """
    try:
        lu = spla.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options={"SymmetricMode": True})
    except RuntimeError:
        return None
    piv = lu.U.diagonal()
    if not np.all(np.isfinite(piv)) or np.any(piv <= 0) or not np.array_equal(lu.perm_r, lu.perm_c):
        return None
    return lu


def _floor_shift(H) -> float:
    diag = np.abs(H.diagonal())
    return 1e-13 * max(1.0, float(diag.max()) if diag.size else 1.0)


def _lowest_mode(H):
    """Smallest eigenpair of the symmetric sparse matrix H."""
    n = H.shape[0]
    if n <= 2000:
        w, v = np.linalg.eigh(H.toarray())
        return float(w[0]), v[:, 0]
    w, v = spla.eigsh(H.tocsc(), k=1, which="SA", tol=1e-8, maxiter=20 * n)
    return float(w[0]), v[:, 0]


def _escape(prob: _Problem, x, f):
    """Step along a direction of negative curvature, if there is one.

    Returns (x, f) after a strictly decreasing step, or None at a local minimum.
    """
    H = prob.hess(x).tocsc()
    if H.shape[0] == 0 or _factor_pd(H + _floor_shift(H) * sp.identity(H.shape[0], format="csc")) is not None:
        return None
    lam, v = _lowest_mode(H)
    if not lam < 0:
        return None
    v = v / np.max(np.abs(v))
    t = 1.0
    while t > 1e-8:
        for sgn in (1.0, -1.0):
            xn = x + sgn * t * v
            fn = prob.value(xn)
            if fn < f:
                return xn, fn
        t *= 0.5
    return None


def _below_rounding(H, g, f, floor, big) -> bool:
    """True when the Newton decrement with the smallest positive-definite shift
    up to ``big`` is below the rounding level of f."""
    eye = sp.identity(H.shape[0], format="csc")
    mu = floor
    while mu <= big:
        lu = _factor_pd(H + mu * eye)
        if lu is not None:
            step = lu.solve(-g)
            return bool(np.all(np.isfinite(step)) and -float(g @ step) < _rounding_floor(f))
        mu *= 10.0
    return False


def _newton_polish(prob: _Problem, x, f, g, opts: MinimizeOptions, steps: int = 20):
    """Undamped Newton steps at the rounding floor of f.

    Once f can no longer decrease measurably, a step is kept when it shrinks
    the gradient and leaves f within its rounding level.
    """
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    for _ in range(steps):
        if gnorm < opts.gradient_tolerance:
            break
        H = prob.hess(x).tocsc()
        lu = _factor_pd(H + _floor_shift(H) * sp.identity(prob.n, format="csc"))
        if lu is None:
            break
        step = lu.solve(-g)
        if not np.all(np.isfinite(step)) or float(g @ step) >= 0:
            break
        xn = x + step
        fn = prob.value(xn)
        gn = prob.grad(xn)
        gn_norm = float(np.max(np.abs(gn)))
        if not (gn_norm < gnorm and fn <= f + _rounding_floor(f)):
            break
        x, f, g, gnorm = xn, fn, gn, gn_norm
    return x, f, g


def _newton(prob: _Problem, x0: np.ndarray, opts: MinimizeOptions, max_escapes: int = 200):
    """Levenberg-damped Newton: the shift mu grows until H + mu I is positive
    definite and the step passes the Armijo test. Stationary points with
    negative curvature are left along the lowest Hessian mode."""
    x = np.array(x0, dtype=float)
    f = prob.value(x)
    trace = [f] if opts.keep_trace else []
    mu = 0.0
    eye = sp.identity(prob.n, format="csc")
    status = "max_iterations"
    it = 0
    escapes = 0
    g = prob.grad(x)
    for it in range(1, opts.max_iterations + 1):
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        at_floor = gnorm < opts.gradient_tolerance
        accepted = False
        if not at_floor:
            H = prob.hess(x).tocsc()
            floor = _floor_shift(H)
            big = 1e-8 * max(1.0, float(np.abs(H.diagonal()).max()) if prob.n else 1.0)
            mu = max(mu / 10.0, floor)
            while mu < 1e20:
                lu = _factor_pd(H + mu * eye)
                if lu is None:
                    mu *= 10.0
                    continue
                step = lu.solve(-g)
                slope = float(g @ step)
                if not np.all(np.isfinite(step)) or slope >= 0:
                    mu *= 10.0
                    continue
                if mu <= big and -slope < _rounding_floor(f):
                    # the Newton decrement is below the rounding level of f
                    at_floor = True
                    break
                t = 1.0
                while t > 1e-10:
                    xn = x + t * step
                    fn = prob.value(xn)
                    if fn < f and fn <= f + opts.armijo * t * slope:
                        accepted = True
                        break
                    t *= opts.shrink
                if accepted:
                    break
                mu *= 10.0
            if not accepted and not at_floor:
                # the shift may have been carried over from earlier iterations
                at_floor = _below_rounding(H, g, f, floor, big)
        if not accepted:
            esc = _escape(prob, x, f) if escapes < max_escapes else None
            if esc is not None:
                escapes += 1
                x, f = esc
                mu = 0.0
                g = prob.grad(x)
                if opts.keep_trace:
                    trace.append(f)
                continue
            x, f, g = _newton_polish(prob, x, f, g, opts)
            status = "converged" if at_floor or float(np.max(np.abs(g))) < opts.gradient_tolerance else "stalled"
            it -= 1
            break
        x, f = xn, fn
        g = prob.grad(x)
        if opts.keep_trace:
            trace.append(f)
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    return x, f, gnorm, it, status, trace


def _gradient_descent(prob: _Problem, x0: np.ndarray, opts: MinimizeOptions):
    x = np.array(x0, dtype=float)
    f = prob.value(x)
    trace = [f] if opts.keep_trace else []
    g = prob.grad(x)
    status = "max_iterations"
    it = 0
    for it in range(1, opts.max_iterations + 1):
        gnorm = float(np.max(np.abs(g)))
        if gnorm < opts.gradient_tolerance:
            status = "converged"
            it -= 1
            break
        diag = np.abs(prob.hess(x).diagonal())
        precond = 1.0 / np.maximum(diag, 1e-12 * max(1.0, diag.max()))
        step = -precond * g
        slope = float(g @ step)
        t = 1.0
        while t > 1e-14:
            xn = x + t * step
            fn = prob.value(xn)
            if fn < f and fn <= f + opts.armijo * t * slope:
                break
            t *= opts.shrink
        else:
            status = "converged" if -slope < _rounding_floor(f) else "stalled"
            break
        x, f = xn, fn
        g = prob.grad(x)
        if opts.keep_trace:
            trace.append(f)
    gnorm = float(np.max(np.abs(g)))
    return x, f, gnorm, it, status, trace


def _projected_norm(g, a) -> float:
    """Sup norm of g with its component along a removed (stationarity on c = 0)."""
    if g.size == 0:
        return 0.0
    aa = float(a @ a)
    pg = g - (float(g @ a) / aa) * a if aa > 0 else g
    return float(np.max(np.abs(pg)))


def _sqp(prob: _Problem, x0: np.ndarray, opts: MinimizeOptions):
    """Damped Newton on the KKT system of min f subject to one equality
    constraint c(x) = 0, globalized with the merit function f + rho |c|."""
    x = np.array(x0, dtype=float)
    f = prob.value(x)
    c, a, _ = prob.constraint(x)
    nu, rho, mu = 0.0, 1.0, 0.0
    trace = [f] if opts.keep_trace else []
    status, it = "max_iterations", 0
    g = prob.grad(x)
    n = prob.n
    for it in range(1, opts.max_iterations + 1):
        kkt = _projected_norm(g, a)
        if kkt < opts.gradient_tolerance and abs(c) < opts.bc_tolerance:
            status = "converged"
            it -= 1
            break
        W = (prob.hess(x) + nu * prob.constraint(x, hess=True)[2]).tocsc()
        diag = np.abs(W.diagonal())
        floor = 1e-13 * max(1.0, float(diag.max()) if diag.size else 1.0)
        mu = max(mu / 10.0, floor)
        merit = f + rho * abs(c)
        accepted = False
        while mu < 1e20:
            K = sp.bmat([[W + mu * sp.identity(n), sp.csc_matrix(a[:, None])], [sp.csc_matrix(a[None, :]), None]],
                        format="csc")
            try:
                sol = spla.splu(K).solve(np.concatenate([-g, [-c]]))
            except RuntimeError:
                mu *= 10.0
                continue
            step, nu_new = sol[:n], sol[n]
            rho = max(rho, 2.0 * abs(nu_new))
            slope = float(g @ step) - rho * abs(c)
            if not np.all(np.isfinite(sol)) or slope >= 0:
                mu *= 10.0
                continue
            merit = f + rho * abs(c)
            t = 1.0
            while t > 1e-10:
                xn = x + t * step
                fn = prob.value(xn)
                cn = prob.constraint(xn)[0]
                if fn + rho * abs(cn) < merit and fn + rho * abs(cn) <= merit + opts.armijo * t * slope:
                    accepted = True
                    break
                t *= opts.shrink
            if accepted:
                break
            mu *= 10.0
        if not accepted:
            status = "stalled"
            break
        x, f, nu = xn, fn, nu_new
        c, a, _ = prob.constraint(x)
        g = prob.grad(x)
        if opts.keep_trace:
            trace.append(f + rho * abs(c))
    kkt = _projected_norm(g, a)
    if status == "stalled" and abs(c) < opts.bc_tolerance and kkt < max(
            opts.gradient_tolerance, 1e3 * np.finfo(float).eps * max(1.0, abs(f))):
        status = "converged"
    return x, f, kkt, it, status, trace


def _run(prob, x0, opts, constrained=False):
    if constrained:
        return _sqp(prob, x0, opts)
    if opts.method == "newton":
        return _newton(prob, x0, opts)
    if opts.method == "gradient":
        return _gradient_descent(prob, x0, opts)
    raise ValueError(f"unknown method {opts.method!r}")


# ---------------------------------------------------------------------------
# angle formulation: phi = base + P x


class _AngleProblem(_Problem):
    """Stencil energy in site angles; ``constraint`` is the end condition."""

    def __init__(self, d, triples, geom, delta, scale, P, base, bc_sites=None):
        self.d = np.asarray(d, np.int64)
        self.p, self.q, self.r = triples
        self.geom = geom
        self.delta = delta
        self.scale = scale
        self.P = P.tocsr()
        self.PT = self.P.T.tocsr()
        self.base = base
        self.n = P.shape[1]
        self.bc_sites = bc_sites

    def phi(self, x):
        return self.base + self.P @ x

    def _eval(self, x, hess=False):
        phi = self.phi(x)
        terms, g, h = _kernels.triple_terms(phi, self.d, self.p, self.q, self.r, self.geom, self.delta, want_hess=hess)
        H = None
        if hess:
            sites = np.stack([self.p, self.q, self.r], axis=1)
            rows = np.repeat(sites, 3, axis=1).ravel()
            cols = np.tile(sites, (1, 3)).ravel()
            H = sp.coo_matrix((self.scale * h.ravel(), (rows, cols)), shape=(phi.size, phi.size)).tocsr()
        return self.scale * math.fsum(terms), self.scale * g, H

    def constraint(self, x, hess=False):
        r, g, H = _bc_residual(self.geom, self.d, self.phi(x), self.bc_sites, hess)
        return r, self.PT @ g, (self.PT @ H @ self.P) if hess else None

    def value(self, x):
        return self._eval(x)[0]

    def grad(self, x):
        return self.PT @ self._eval(x)[1]

    def hess(self, x):
        H = self._eval(x, hess=True)[2]
        return (self.PT @ H @ self.P).tocsc()


def _outer_sparse(v):
    nz = np.nonzero(v)[0]
    rows = np.repeat(nz, nz.size)
    cols = np.tile(nz, nz.size)
    return sp.coo_matrix((np.outer(v[nz], v[nz]).ravel(), (rows, cols)), shape=(v.size, v.size)).tocsr()


def _bc_residual(geom, d, phi, sites, hess=False):
    """r = <u_a, u_b> - <u_c, u_e>, its gradient and (sparse) Hessian."""
    a, b, c, e = sites
    n = phi.size
    idx = np.array([a, b, c, e])
    u = embed(geom, d[idx], phi[idx])
    k = d[idx] - 1
    du = geom.R * (-np.sin(phi[idx])[:, None] * geom.e1[k] + np.cos(phi[idx])[:, None] * geom.e2[k])
    ddu = -(u - geom.centers[k])
    r = float(u[0] @ u[1] - u[2] @ u[3])
    g = np.zeros(n)
    g[a] += du[0] @ u[1]
    g[b] += u[0] @ du[1]
    g[c] -= du[2] @ u[3]
    g[e] -= u[2] @ du[3]
    H = None
    if hess:
        ab = du[0] @ du[1]
        ce = -(du[2] @ du[3])
        rows = [a, b, a, b, c, e, c, e]
        cols = [a, b, b, a, c, e, e, c]
        vals = [ddu[0] @ u[1], u[0] @ ddu[1], ab, ab, -(ddu[2] @ u[3]), -(u[2] @ ddu[3]), ce, ce]
        H = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return r, g, H


def _tie_map(n_sites, phi_start, groups, fixed):
    """Linear map phi = base + P x. ``groups`` is a list of (sites, offsets)
    moving rigidly together; ``fixed`` sites keep their start value."""
    col = -np.ones(n_sites, int)
    offset = np.zeros(n_sites)
    n_vars = 0
    for sites, offs in groups:
        sites = np.asarray(sites)
        col[sites] = n_vars
        offset[sites] = offs
        n_vars += 1
    fixed_mask = np.zeros(n_sites, bool)
    fixed_mask[list(fixed)] = True
    col[fixed_mask] = -1
    for s in np.flatnonzero((col < 0) & ~fixed_mask):
        col[s] = n_vars
        n_vars += 1
    rows = np.flatnonzero(col >= 0)
    P = sp.coo_matrix((np.ones(rows.size), (rows, col[rows])), shape=(n_sites, n_vars)).tocsr()
    base = np.where(fixed_mask, phi_start, 0.0) + offset
    x0 = np.zeros(n_vars)
    x0[col[rows]] = phi_start[rows] - offset[rows]
    return P, base, x0


def _end_sign(first: float, last: float) -> int:
    """Sign s with last = s * first (mod 2 pi) closest to the current turns."""
    return 1 if abs(wrap_angle(last - first)) <= abs(wrap_angle(last + first)) else -1


def _eliminate_row(P, base, x0, target, combo):
    """Replace row ``target`` of phi = base + P x by the linear combination
    ``combo`` = [(row, coef), ...] and drop the variable it owned."""
    P = P.tolil()
    new_row = sp.csr_matrix((1, P.shape[1]))
    new_base = 0.0
    for row, coef in combo:
        new_row = new_row + coef * P.getrow(row).tocsr()
        new_base += coef * base[row]
    own = P.rows[target][0]
    P[target, :] = new_row
    base = base.copy()
    base[target] = new_base
    keep = np.ones(P.shape[1], bool)
    keep[own] = False
    return P.tocsr()[:, keep], base, x0[keep]


def _objective_scale(lam, delta):
    if delta > 0:
        return 0.5 * lam / (math.sqrt(2.0) * lam * delta**1.5), "normalized H"
    return 0.5, "H / lambda"


def _chirality_groups(n_sites, pins):
    left, right = pins
    N = n_sites - 1
    return [
        (np.array([0, 1, 2]), np.array([0.0, left, 2.0 * left])),
        (np.array([N - 2, N - 1, N]), np.array([0.0, right, 2.0 * right])),
    ]


# ---------------------------------------------------------------------------
# bond formulation for single-circle chains


class _BondProblem(_Problem):
    """Energy in bond angles theta_i = phi_{i+1} - phi_i on one circle,
    theta = base + P x; the Hessian in theta is tridiagonal."""

    def __init__(self, P, base, R, delta, scale):
        self.P = P.tocsr()
        self.PT = self.P.T.tocsr()
        self.base = np.asarray(base, float)
        self.R = R
        self.delta = delta
        self.scale = scale
        self.n = P.shape[1]

    def theta(self, x):
        return self.base + self.P @ x

    def _parts(self, th, hess=False):
        A, B = th[:-1], th[1:]
        R2 = self.R**2
        delta = self.delta
        sa, sb = np.sin(0.5 * A), np.sin(0.5 * B)
        sinA, sinB, cosA, cosB = np.sin(A), np.sin(B), np.cos(A), np.cos(B)
        X = 2.0 * delta - 2.0 * sa * sa - 2.0 * sb * sb
        Y = sinB - sinA
        T = (1.0 - R2) * 4.0 * delta * delta + R2 * (X * X + Y * Y)
        gA = 2.0 * R2 * (-X * sinA - Y * cosA)
        gB = 2.0 * R2 * (-X * sinB + Y * cosB)
        out = [T, gA, gB]
        if hess:
            out += [
                2.0 * R2 * (1.0 - X * cosA + Y * sinA),
                -2.0 * R2 * np.cos(A + B),
                2.0 * R2 * (1.0 - X * cosB - Y * sinB),
            ]
        return out

    def value(self, x):
        return self.scale * math.fsum(self._parts(self.theta(x))[0])

    def grad(self, x):
        th = self.theta(x)
        _, gA, gB = self._parts(th)
        g = np.zeros(th.size)
        g[:-1] += gA
        g[1:] += gB
        return self.scale * (self.PT @ g)

    def hess(self, x):
        th = self.theta(x)
        _, _, _, hAA, hAB, hBB = self._parts(th, hess=True)
        main = np.zeros(th.size)
        main[:-1] += hAA
        main[1:] += hBB
        H = sp.diags([hAB, main, hAB], [-1, 0, 1], format="csr")
        return (self.scale * (self.PT @ H @ self.P)).tocsc()


def _bond_setup(phi, opts):
    theta = np.diff(phi)
    nb = theta.size
    base = np.zeros(nb)
    free = np.ones(nb, bool)
    if opts.chirality_pins is not None:
        left, right = opts.chirality_pins
        base[[0, 1]] = left
        base[[-2, -1]] = right
        free[[0, 1, -2, -1]] = False
    tie_end = opts.enforce_bc and opts.chirality_pins is None
    if tie_end:
        free[-1] = False
    idx = np.flatnonzero(free)
    rows, cols, vals = list(idx), list(range(idx.size)), [1.0] * idx.size
    if tie_end:
        # theta_last = s * theta_0
        rows.append(nb - 1)
        cols.append(0)
        vals.append(float(_end_sign(theta[0], theta[-1])))
    P = sp.coo_matrix((vals, (rows, cols)), shape=(nb, idx.size)).tocsr()
    return P, base, theta[idx].copy()


def _check_pins(opts, n_sites):
    if opts.chirality_pins is None:
        return
    if n_sites < 7:
        raise FieldError("chirality pins need at least 7 sites")
    left, right = opts.chirality_pins
    if opts.enforce_bc and abs(math.cos(left) - math.cos(right)) > opts.bc_tolerance:
        raise ValueError("chirality pins with |left| != |right| violate the end condition")


def minimize_chain(start: SpinChain1D, params: ModelParams1D, options: MinimizeOptions | None = None):
    """Local minimizer of H (equivalently E under the end condition) over angles.

    With ``enforce_bc`` the end condition <u0,u1> = <u(N-1),uN> holds exactly
    when both end pairs share a circle (the last turn is tied to the first);
    otherwise it is imposed by an augmented Lagrangian.
    """
    opts = options or MinimizeOptions()
    n = start.n_sites
    _check_pins(opts, n)
    single = bool(np.all(start.d == start.d[0]))
    form = opts.formulation
    if form == "auto":
        form = "bond" if single and not opts.pinned_sites else "angle"
    if form == "bond" and (not single or opts.pinned_sites):
        raise ValueError("bond formulation needs a single-circle chain without pinned sites")
    scale, objective = _objective_scale(start.lam, params.delta)
    phi = np.array(start.phi, float)

    if form == "bond":
        P, base, x0 = _bond_setup(phi, opts)
        prob = _BondProblem(P, base, start.geom.R, params.delta, scale)
        x, f, gnorm, it, status, trace = _run(prob, x0, opts)
        phi = phi[0] + np.concatenate([[0.0], np.cumsum(prob.theta(x))])
    else:
        groups = _chirality_groups(n, opts.chirality_pins) if opts.chirality_pins is not None else []
        P, base, x0 = _tie_map(n, phi, groups, opts.pinned_sites)
        N = n - 1
        exact = (
            opts.enforce_bc and opts.chirality_pins is None and n >= 4
            and start.d[0] == start.d[1] and start.d[N - 1] == start.d[N] and N not in opts.pinned_sites
        )
        if exact:
            s = _end_sign(phi[1] - phi[0], phi[N] - phi[N - 1])
            P, base, x0 = _eliminate_row(P, base, x0, N, [(N - 1, 1.0), (1, s), (0, -s)])
        i = np.arange(n - 2)
        prob = _AngleProblem(start.d, (i, i + 1, i + 2), start.geom, params.delta, scale, P, base,
                             bc_sites=(0, 1, N - 1, N))
        constrained = bool(opts.enforce_bc and not exact and opts.chirality_pins is None)
        x, f, gnorm, it, status, trace = _run(prob, x0, opts, constrained)
        phi = prob.phi(x)
    chain = start.with_phi(phi)
    u = chain.vectors()
    bc = abs(float(u[0] @ u[1] - u[-2] @ u[-1]))
    return chain, MinimizeReport(status, it, gnorm, f, trace, bc, form, objective)

def minimize_field2d(start: SpinField2D, params: ModelParams2D, options: MinimizeOptions | None = None,
                     row_pins: tuple | None = None):
    """Local minimizer of the normalized planar energy over angles.

    ``row_pins=(left, right)`` ties the first and last three squares of every
    row with fixed horizontal turns, forcing a chirality wall across the rows.
    """
    opts = options or MinimizeOptions()
    nx, ny = start.shape
    phi = np.array(start.phi, float).ravel()
    index = index_mask(start.mask)
    triples = stencil_triples(index)
    scale = 0.5 * start.lam**2 / params.normalization(start.lam)
    groups = []
    flat = lambda i, j: i * ny + j  # noqa: E731
    if row_pins is not None:
        left, right = row_pins
        for j in range(ny):
            if start.mask[:3, j].all():
                groups.append((flat(np.arange(3), j), np.array([0.0, left, 2 * left])))
            if start.mask[nx - 3:, j].all():
                groups.append((flat(np.arange(nx - 3, nx), j), np.array([0.0, right, 2 * right])))
    fixed = list(opts.pinned_sites) + list(np.flatnonzero(~start.mask.ravel()))
    used = np.zeros(nx * ny, bool)
    for arr in triples:
        used[arr] = True
    fixed += list(np.flatnonzero(~used & start.mask.ravel()))
    P, base, x0 = _tie_map(nx * ny, phi, groups, sorted(set(int(s) for s in fixed)))
    prob = _AngleProblem(start.d.ravel(), triples, start.geom, params.delta, scale, P, base)
    x, f, gnorm, it, status, tr = _run(prob, x0, opts)
    out = start.with_phi(prob.phi(x).reshape(nx, ny))
    return out, MinimizeReport(status, it, gnorm, f, tr, float("nan"), "angle", "normalized H2d")


def multistart_chain(params: ModelParams1D, geom: SystemGeometry, n: int, starts: int, seed: int = 0, d: int = 1,
                     options: MinimizeOptions | None = None):
    """Minimize from ``starts`` random single-circle chains with per-run seeds seed + run."""
    out = []
    for run in range(starts):
        rng = np.random.default_rng(seed + run)
        phi = rng.uniform(-math.pi, math.pi, n + 1)
        chain = SpinChain1D(_lam(n), np.full(n + 1, d), phi, geom)
        out.append(minimize_chain(chain, params, options))
    return out


def wrap_phases(chain: SpinChain1D) -> SpinChain1D:
    return chain.with_phi(wrap_angle(chain.phi))


__all__ = [
    "FrustrationError",
    "MinimizeOptions",
    "MinimizeReport",
    "build_ferromagnet",
    "build_ground_helix",
    "build_helix",
    "build_oscillating",
    "build_wall_profile",
    "concatenate_recovery",
    "glue_helices",
    "gradient",
    "ground_turn",
    "optimal_turn",
    "minimize_chain",
    "minimize_field2d",
    "multistart_chain",
    "lattice_count",
]
