"""Hot loops: stencil terms, pair sums and their angle derivatives.

Every kernel exists twice, as a numba ``@njit`` loop and as a vectorized
numpy function with the same signature. ``SPINWALL_NO_NUMBA=1`` (or a
missing numba install) selects the numpy versions.

Stencil term for a triple of sites (p, q, r) with coefficient a = 2 - 2*delta:

    T = |u_r - a u_q + u_p|^2

On a single circle it is evaluated in bond angles A = phi_q - phi_p,
B = phi_r - phi_q as

    T = (1 - R^2) (2 delta)^2 + R^2 (X^2 + Y^2)
    X = 2 delta - 2 sin^2(A/2) - 2 sin^2(B/2),   Y = sin B - sin A

which keeps full relative precision when delta and the bond angles are tiny.
Triples that straddle the two circles are evaluated in 3D.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def _env_disabled() -> bool:
    return os.environ.get("SPINWALL_NO_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = HAVE_NUMBA and not _env_disabled()
BACKEND = "numba" if USE_NUMBA else "numpy"

if not HAVE_NUMBA and not _env_disabled():
    warnings.warn("numba is not installed; falling back to the numpy kernels", RuntimeWarning)


# ---------------------------------------------------------------------------
# stencil terms


@njit(cache=True, nogil=True)
def _triple_terms_numba(phi, d, p, q, r, centers, e1, e2, R, delta, want_hess):
    nt = p.shape[0]
    terms = np.empty(nt)
    grad = np.zeros(phi.shape[0])
    hess = np.zeros((nt, 3, 3)) if want_hess else np.zeros((0, 3, 3))
    a = 2.0 - 2.0 * delta
    R2 = R * R
    off = (1.0 - R2) * 4.0 * delta * delta
    coef = np.array([1.0, -a, 1.0])
    u = np.empty((3, 3))
    du = np.empty((3, 3))
    S = np.empty(3)
    for t in range(nt):
        ip = p[t]
        iq = q[t]
        ir = r[t]
        if d[ip] == d[iq] and d[iq] == d[ir]:
            A = phi[iq] - phi[ip]
            B = phi[ir] - phi[iq]
            sa = np.sin(0.5 * A)
            sb = np.sin(0.5 * B)
            sinA = np.sin(A)
            sinB = np.sin(B)
            cosA = np.cos(A)
            cosB = np.cos(B)
            X = 2.0 * delta - 2.0 * sa * sa - 2.0 * sb * sb
            Y = sinB - sinA
            terms[t] = off + R2 * (X * X + Y * Y)
            gA = 2.0 * R2 * (-X * sinA - Y * cosA)
            gB = 2.0 * R2 * (-X * sinB + Y * cosB)
            grad[ip] -= gA
            grad[iq] += gA - gB
            grad[ir] += gB
            if want_hess:
                hAA = 2.0 * R2 * (1.0 - X * cosA + Y * sinA)
                hBB = 2.0 * R2 * (1.0 - X * cosB - Y * sinB)
                hAB = -2.0 * R2 * np.cos(A + B)
                # A = q - p, B = r - q
                hess[t, 0, 0] = hAA
                hess[t, 0, 1] = -hAA + hAB
                hess[t, 0, 2] = -hAB
                hess[t, 1, 1] = hAA - 2.0 * hAB + hBB
                hess[t, 1, 2] = hAB - hBB
                hess[t, 2, 2] = hBB
                hess[t, 1, 0] = hess[t, 0, 1]
                hess[t, 2, 0] = hess[t, 0, 2]
                hess[t, 2, 1] = hess[t, 1, 2]
        else:
            idx = (ip, iq, ir)
            S[:] = 0.0
            for m in range(3):
                s = idx[m]
                k = d[s] - 1
                c = np.cos(phi[s])
                sn = np.sin(phi[s])
                for x in range(3):
                    u[m, x] = centers[k, x] + R * (c * e1[k, x] + sn * e2[k, x])
                    du[m, x] = R * (-sn * e1[k, x] + c * e2[k, x])
                    S[x] += coef[m] * u[m, x]
            terms[t] = S[0] * S[0] + S[1] * S[1] + S[2] * S[2]
            for m in range(3):
                g = 0.0
                for x in range(3):
                    g += S[x] * du[m, x]
                grad[idx[m]] += 2.0 * coef[m] * g
            if want_hess:
                for m in range(3):
                    k = d[idx[m]] - 1
                    for n in range(3):
                        h = 0.0
                        for x in range(3):
                            h += du[m, x] * du[n, x]
                        hess[t, m, n] = 2.0 * coef[m] * coef[n] * h
                    # second derivative of u is -(u - c)
                    curv = 0.0
                    for x in range(3):
                        curv -= S[x] * (u[m, x] - centers[k, x])
                    hess[t, m, m] += 2.0 * coef[m] * curv
    return terms, grad, hess


def _triple_terms_numpy(phi, d, p, q, r, centers, e1, e2, R, delta, want_hess):
    nt = p.shape[0]
    n = phi.shape[0]
    terms = np.empty(nt)
    grad = np.zeros(n)
    hess = np.zeros((nt, 3, 3)) if want_hess else np.zeros((0, 3, 3))
    a = 2.0 - 2.0 * delta
    R2 = R * R
    same = (d[p] == d[q]) & (d[q] == d[r])

    s_idx = np.nonzero(same)[0]
    if s_idx.size:
        ps, qs, rs = p[s_idx], q[s_idx], r[s_idx]
        A = phi[qs] - phi[ps]
        B = phi[rs] - phi[qs]
        sa = np.sin(0.5 * A)
        sb = np.sin(0.5 * B)
        sinA, sinB, cosA, cosB = np.sin(A), np.sin(B), np.cos(A), np.cos(B)
        X = 2.0 * delta - 2.0 * sa * sa - 2.0 * sb * sb
        Y = sinB - sinA
        terms[s_idx] = (1.0 - R2) * 4.0 * delta * delta + R2 * (X * X + Y * Y)
        gA = 2.0 * R2 * (-X * sinA - Y * cosA)
        gB = 2.0 * R2 * (-X * sinB + Y * cosB)
        grad -= np.bincount(ps, weights=gA, minlength=n)
        grad += np.bincount(qs, weights=gA - gB, minlength=n)
        grad += np.bincount(rs, weights=gB, minlength=n)
        if want_hess:
            hAA = 2.0 * R2 * (1.0 - X * cosA + Y * sinA)
            hBB = 2.0 * R2 * (1.0 - X * cosB - Y * sinB)
            hAB = -2.0 * R2 * np.cos(A + B)
            h = np.empty((s_idx.size, 3, 3))
            h[:, 0, 0] = hAA
            h[:, 0, 1] = h[:, 1, 0] = -hAA + hAB
            h[:, 0, 2] = h[:, 2, 0] = -hAB
            h[:, 1, 1] = hAA - 2.0 * hAB + hBB
            h[:, 1, 2] = h[:, 2, 1] = hAB - hBB
            h[:, 2, 2] = hBB
            hess[s_idx] = h

    m_idx = np.nonzero(~same)[0]
    if m_idx.size:
        coef = np.array([1.0, -a, 1.0])
        sites = np.stack([p[m_idx], q[m_idx], r[m_idx]], axis=1)
        k = d[sites] - 1
        ph = phi[sites]
        c = np.cos(ph)[..., None]
        s = np.sin(ph)[..., None]
        u = centers[k] + R * (c * e1[k] + s * e2[k])
        du = R * (-s * e1[k] + c * e2[k])
        S = np.einsum("m,tmx->tx", coef, u)
        terms[m_idx] = np.einsum("tx,tx->t", S, S)
        g = 2.0 * coef[None, :] * np.einsum("tx,tmx->tm", S, du)
        grad += np.bincount(sites.ravel(), weights=g.ravel(), minlength=n)
        if want_hess:
            h = 2.0 * coef[None, :, None] * coef[None, None, :] * np.einsum("tmx,tnx->tmn", du, du)
            curv = -np.einsum("tx,tmx->tm", S, u - centers[k])
            h[:, [0, 1, 2], [0, 1, 2]] += 2.0 * coef[None, :] * curv
            hess[m_idx] = h
    return terms, grad, hess


# ---------------------------------------------------------------------------
# weighted pair sums  sum_t w_t <u_{p_t}, u_{q_t}>


@njit(cache=True, nogil=True)
def _pair_sum_numba(phi, d, p, q, w, centers, e1, e2, R):
    n = phi.shape[0]
    grad = np.zeros(n)
    u = np.empty((n, 3))
    du = np.empty((n, 3))
    for s in range(n):
        k = d[s] - 1
        c = np.cos(phi[s])
        sn = np.sin(phi[s])
        for x in range(3):
            u[s, x] = centers[k, x] + R * (c * e1[k, x] + sn * e2[k, x])
            du[s, x] = R * (-sn * e1[k, x] + c * e2[k, x])
    vals = np.empty(p.shape[0])
    for t in range(p.shape[0]):
        a = p[t]
        b = q[t]
        dot = 0.0
        ga = 0.0
        gb = 0.0
        for x in range(3):
            dot += u[a, x] * u[b, x]
            ga += du[a, x] * u[b, x]
            gb += u[a, x] * du[b, x]
        vals[t] = w[t] * dot
        grad[a] += w[t] * ga
        grad[b] += w[t] * gb
    return vals, grad


def _pair_sum_numpy(phi, d, p, q, w, centers, e1, e2, R):
    n = phi.shape[0]
    k = d - 1
    c = np.cos(phi)[:, None]
    s = np.sin(phi)[:, None]
    u = centers[k] + R * (c * e1[k] + s * e2[k])
    du = R * (-s * e1[k] + c * e2[k])
    vals = w * np.einsum("tx,tx->t", u[p], u[q])
    ga = w * np.einsum("tx,tx->t", du[p], u[q])
    gb = w * np.einsum("tx,tx->t", u[p], du[q])
    grad = np.bincount(p, weights=ga, minlength=n) + np.bincount(q, weights=gb, minlength=n)
    return vals, grad


def _prep(phi, d, *idx):
    out = [np.ascontiguousarray(phi, dtype=np.float64), np.ascontiguousarray(d, dtype=np.int64)]
    out += [np.ascontiguousarray(i, dtype=np.int64) for i in idx]
    return out


def triple_terms(phi, d, p, q, r, geom, delta, want_hess=False, backend=None):
    """Per-triple stencil terms, the gradient of their sum, and per-triple 3x3 Hessians."""
    phi, d, p, q, r = _prep(phi, d, p, q, r)
    fn = _select(backend, _triple_terms_numba, _triple_terms_numpy)
    return fn(phi, d, p, q, r, geom.centers, geom.e1, geom.e2, float(geom.R), float(delta), bool(want_hess))


def pair_sum(phi, d, p, q, w, geom, backend=None):
    """Weighted dot products w_t <u_p, u_q> and the gradient of their sum."""
    phi, d, p, q = _prep(phi, d, p, q)
    w = np.ascontiguousarray(w, dtype=np.float64)
    fn = _select(backend, _pair_sum_numba, _pair_sum_numpy)
    return fn(phi, d, p, q, w, geom.centers, geom.e1, geom.e2, float(geom.R))


def _select(backend, numba_fn, numpy_fn):
    if backend is None:
        backend = BACKEND
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        return numba_fn
    if backend == "numpy":
        return numpy_fn
    raise ValueError(f"unknown backend {backend!r}")


def fsum_sorted(values) -> float:
    """Order-independent sum used where bit-reproducibility matters."""
    import math

    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())
