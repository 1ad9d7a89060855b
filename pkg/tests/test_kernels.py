import json
import os
import subprocess
import sys

import numpy as np
import pytest

from spinwall import _kernels
from spinwall.geometry import SystemGeometry, embed

BACKENDS = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])


def _random_chain(rng, n, mixed=True):
    phi = rng.uniform(-np.pi, np.pi, n)
    d = rng.integers(1, 3, n) if mixed else np.ones(n, int)
    i = np.arange(n - 2)
    return phi, d, (i, i + 1, i + 2)


def _direct_terms(geom, phi, d, triples, delta):
    u = embed(geom, d, phi)
    p, q, r = triples
    v = u[r] - (2 - 2 * delta) * u[q] + u[p]
    return np.einsum("ij,ij->i", v, v)


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("mixed", [False, True])
def test_terms_match_3d_formula(backend, mixed, rng):
    geom = SystemGeometry(np.array([0, 0, 1.0]), np.array([0.6, 0, 0.8]), 0.3)
    phi, d, tr = _random_chain(rng, 300, mixed)
    terms, _, _ = _kernels.triple_terms(phi, d, *tr, geom, 0.07, backend=backend)
    assert np.allclose(terms, _direct_terms(geom, phi, d, tr, 0.07), rtol=1e-12, atol=1e-13)


def test_small_delta_keeps_relative_precision():
    # a helix with the ground turn: the 3D formula cancels to noise, the bond form does not
    geom = SystemGeometry.antipodal(0.9999)
    delta = 1e-12
    th = 2 * np.arcsin(np.sqrt(delta / 2) / geom.R)
    phi = th * np.arange(10)
    tr = (np.arange(8), np.arange(1, 9), np.arange(2, 10))
    terms, _, _ = _kernels.triple_terms(phi, np.ones(10, int), *tr, geom, delta)
    X = 2 * delta - 4 * np.sin(th / 2) ** 2
    expect = (1 - geom.R**2) * (2 * delta) ** 2 + geom.R**2 * X**2
    assert np.allclose(terms, expect, rtol=1e-9)


@pytest.mark.parametrize("backend", BACKENDS)
def test_gradient_and_hessian_finite_differences(backend, geom, rng):
    phi, d, tr = _random_chain(rng, 12)
    delta = 0.05
    f = lambda x: _kernels.triple_terms(x, d, *tr, geom, delta, backend=backend)[0].sum()  # noqa: E731
    _, g, hess = _kernels.triple_terms(phi, d, *tr, geom, delta, want_hess=True, backend=backend)
    h = 1e-6
    eye = np.eye(phi.size)
    fd = np.array([(f(phi + h * e) - f(phi - h * e)) / (2 * h) for e in eye])
    assert np.max(np.abs(fd - g)) < 1e-6 * max(1, np.max(np.abs(g)))
    # assemble the dense Hessian from the per-triple blocks
    H = np.zeros((phi.size, phi.size))
    idx = np.stack(tr, axis=1)
    for t in range(idx.shape[0]):
        H[np.ix_(idx[t], idx[t])] += hess[t]
    gfun = lambda x: _kernels.triple_terms(x, d, *tr, geom, delta, backend=backend)[1]  # noqa: E731
    fdH = np.array([(gfun(phi + h * e) - gfun(phi - h * e)) / (2 * h) for e in eye])
    assert np.max(np.abs(fdH - H)) < 1e-6 * max(1, np.max(np.abs(H)))


@pytest.mark.parametrize("backend", BACKENDS)
def test_pair_sum(backend, geom, rng):
    phi, d, _ = _random_chain(rng, 50)
    p, q = np.arange(49), np.arange(1, 50)
    w = rng.normal(size=49)
    vals, g = _kernels.pair_sum(phi, d, p, q, w, geom, backend=backend)
    u = embed(geom, d, phi)
    assert np.allclose(vals, w * np.einsum("ij,ij->i", u[p], u[q]), rtol=1e-13, atol=1e-14)
    h = 1e-6
    f = lambda x: _kernels.pair_sum(x, d, p, q, w, geom, backend=backend)[0].sum()  # noqa: E731
    fd = np.array([(f(phi + h * e) - f(phi - h * e)) / (2 * h) for e in np.eye(50)])
    assert np.max(np.abs(fd - g)) < 1e-7


@pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba missing")
def test_backends_agree(geom, rng):
    phi, d, tr = _random_chain(rng, 2000)
    a = _kernels.triple_terms(phi, d, *tr, geom, 0.01, True, backend="numpy")
    b = _kernels.triple_terms(phi, d, *tr, geom, 0.01, True, backend="numba")
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-12, atol=1e-13)


def test_unknown_backend(geom):
    with pytest.raises(ValueError):
        _kernels.triple_terms(np.zeros(3), np.ones(3), [0], [1], [2], geom, 0.1, backend="cuda")


def test_env_flag_selects_numpy():
    code = (
        "import json, numpy as np\n"
        "from spinwall import _kernels\n"
        "from spinwall.geometry import SystemGeometry\n"
        "from spinwall.minimize import build_ground_helix\n"
        "from spinwall.energy_1d import ModelParams1D, energy_H\n"
        "g = SystemGeometry.antipodal(0.8)\n"
        "c = build_ground_helix(100, ModelParams1D(alpha=3.9), 1, 1, 0.2, g)\n"
        "print(json.dumps([_kernels.BACKEND, energy_H(c, ModelParams1D(alpha=3.9))]))\n"
    )
    out = {}
    for flag in ("1", "0"):
        env = dict(os.environ, SPINWALL_NO_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        out[flag] = json.loads(res.stdout)
    assert out["1"][0] == "numpy"
    assert out["0"][0] == ("numba" if _kernels.HAVE_NUMBA else "numpy")
    assert out["1"][1] == pytest.approx(out["0"][1], rel=1e-12)
