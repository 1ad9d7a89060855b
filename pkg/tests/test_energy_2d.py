import math

import numpy as np
import pytest

from spinwall.energy_1d import ModelParams1D, energy_H
from spinwall.energy_2d import (ModelParams2D, discrete_partials, energy_H2d, energy_P2d, energy_record,
                                energy_script_H2d, gradient_H2d, index_mask, index_set_2d, remainder_R2d)
from spinwall.geometry import SystemGeometry
from spinwall.minimize import ground_turn
from spinwall.spin_field import SpinChain1D, SpinField2D, partition, rectangle_mask

GEOM = SystemGeometry.antipodal(0.8)
P = ModelParams2D(delta=0.02, k=3.0)


def field(d, phi, lam=None, mask=None):
    d = np.asarray(d)
    lam = 1 / d.shape[0] if lam is None else lam
    mask = np.ones(d.shape, bool) if mask is None else mask
    return SpinField2D(lam, mask, d, phi, GEOM)


def stencil_direct(u, index, alpha):
    """Sum of row and column terms over the marked base squares."""
    total = 0.0
    for i, j in zip(*np.nonzero(index)):
        for a, b in (((i + 1, j), (i + 2, j)), ((i, j + 1), (i, j + 2))):
            v = u[b] - 0.5 * alpha * u[a] + u[i, j]
            total += float(v @ v)
    return total


def test_index_set_unit_square():
    idx = index_set_2d([(0, 0, 1, 1)], 0.25)
    assert len(idx) == 9
    assert idx == [(i, j) for i in range(3) for j in range(3)]


def test_index_set_empty_when_spacing_too_large():
    assert index_set_2d([(0, 0, 0.5, 0.5)], 0.75) == []


def test_index_set_l_shape_hand_enumeration():
    lam = 1 / 6
    rects = [(0, 0, 1, 0.5), (0, 0, 0.5, 1)]

    def inside(i, j):
        x, y = (i + 0.5) * lam, (j + 0.5) * lam
        return any(x0 <= x < x1 and y0 <= y < y1 for x0, y0, x1, y1 in rects)

    expect = [(i, j) for i in range(6) for j in range(6)
              if inside(i, j) and inside(i + 1, j) and inside(i, j + 1)]
    assert index_set_2d(rects, lam) == expect
    # overlapping rectangles: the union of the per-rectangle sets misses only
    # the re-entrant corner, whose stencil uses one square from each rectangle
    per = set()
    for r in rects:
        per |= set(index_set_2d([r], lam))
    assert set(expect) == per | {(2, 2)}


def test_constant_field():
    n = 16
    f = field(np.ones((n, n), int), np.full((n, n), 0.7))
    count = int(index_mask(f.mask).sum())
    assert count == (n - 2) ** 2
    lam, dl = 1 / n, P.delta
    assert energy_H2d(f, P) == pytest.approx(2 * math.sqrt(2) * lam * math.sqrt(dl) * count, rel=1e-10)


def test_row_helix_5x5_direct(rng):
    th = ground_turn(ModelParams1D(delta=P.delta), GEOM.R)
    d = np.ones((5, 5), int)
    d[3:, 1] = 2
    phi = th * np.arange(5)[:, None] + rng.uniform(-0.3, 0.3, (5, 5))
    f = field(d, phi)
    raw = stencil_direct(f.vectors(), index_mask(f.mask), P.alpha)
    assert energy_H2d(f, P) == pytest.approx(0.5 * f.lam**2 * raw / P.normalization(f.lam), rel=1e-12)


def test_nonnegative(rng):
    for _ in range(50):
        f = field(rng.integers(1, 3, (7, 9)), rng.uniform(-4, 4, (7, 9)))
        assert energy_H2d(f, P) >= 0


def test_penalty_examples():
    n = 64
    assert energy_P2d(field(np.ones((n, n), int), np.zeros((n, n))), P) == 0
    d = np.ones((n, n), int)
    d[n // 2:, :] = 2
    lam = 1 / n
    assert energy_P2d(field(d, np.zeros((n, n))), P) == pytest.approx(lam * 3.0 * 1 * GEOM.axis_gap)
    d = np.ones((8, 8), int)
    d[4, 4] = 2
    assert energy_P2d(field(d, np.zeros((8, 8))), P) == pytest.approx(0.125 * 3.0 * 4 * 0.125 * GEOM.axis_gap)


def test_remainder_single_component_is_zero(rng):
    f = field(np.ones((8, 8), int), rng.uniform(-4, 4, (8, 8)))
    (comp,) = partition(f).pieces
    assert remainder_R2d(f, comp, P) == 0.0


def test_remainder_vertical_split_brute_force(rng):
    d = np.ones((8, 8), int)
    d[4:, :] = 2
    f = field(d, rng.uniform(-4, 4, (8, 8)))
    u = f.vectors()
    scale = 0.5 * f.lam**2 / P.normalization(f.lam)
    for comp, count in zip(partition(f).pieces, (12, 0)):
        # indices based in the component whose stencil leaves it but stays in the domain
        idx = np.zeros((8, 8), bool)
        for i in range(6):
            for j in range(6):
                sites = [(i, j), (i + 1, j), (i + 2, j), (i, j + 1), (i, j + 2)]
                idx[i, j] = comp.mask[i, j] and not all(comp.mask[s] for s in sites)
        assert idx.sum() == count
        assert remainder_R2d(f, comp, P) == pytest.approx(scale * stencil_direct(u, idx, P.alpha), rel=1e-12)


def test_remainder_single_square_component(rng):
    d = np.ones((8, 8), int)
    d[2, 3] = 2
    f = field(d, rng.uniform(-4, 4, (8, 8)))
    comp = next(c for c in partition(f).pieces if c.d == 2)
    idx = np.zeros((8, 8), bool)
    idx[2, 3] = True
    scale = 0.5 * f.lam**2 / P.normalization(f.lam)
    assert remainder_R2d(f, comp, P) == pytest.approx(scale * stencil_direct(f.vectors(), idx, P.alpha), rel=1e-12)


def test_script_h_single_component(rng):
    f = field(np.ones((9, 9), int), rng.uniform(-4, 4, (9, 9)))
    total, parts = energy_script_H2d(f, P)
    assert len(parts) == 1 and total == pytest.approx(energy_H2d(f, P), rel=1e-15)


def test_decomposition_split_helices():
    th = ground_turn(ModelParams1D(delta=P.delta), GEOM.R)
    d = np.ones((16, 16), int)
    d[8:, :] = 2
    phi = th * (np.arange(16)[:, None] + np.arange(16)[None, :])
    rec = energy_record(field(d, phi), P)
    assert abs(rec["residual"]) < 1e-12 * max(1, rec["H"])


def test_decomposition_random_rectangle_unions(rng):
    for _ in range(100):
        rects = []
        for _ in range(int(rng.integers(1, 4))):
            x0, y0 = rng.integers(0, 6, 2) / 8
            w, h = rng.integers(2, 8, 2) / 8
            rects.append((x0, y0, x0 + w, y0 + h))
        mask = rectangle_mask(rects, 1 / 8)
        f = SpinField2D(1 / 8, mask, rng.integers(1, 3, mask.shape), rng.uniform(-4, 4, mask.shape), GEOM)
        rec = energy_record(f, P)
        assert abs(rec["residual"]) < 1e-12 * max(1, abs(rec["H"]))


def test_row_separability(rng):
    nx, ny = 12, 7
    row = rng.uniform(-4, 4, nx)
    f = field(np.ones((nx, ny), int), np.repeat(row[:, None], ny, axis=1), lam=1 / 12)
    u = f.vectors()
    i, j = np.nonzero(index_mask(f.mask))
    col = u[i, j + 2] - 0.5 * P.alpha * u[i, j + 1] + u[i, j]
    assert np.allclose(np.linalg.norm(col, axis=1), 2 * P.delta, rtol=1e-12)  # |(2 - alpha/2) u| = 2 delta
    chain = SpinChain1D(1 / 11, np.ones(12, int), row, GEOM)
    h1 = energy_H(chain, ModelParams1D(delta=P.delta)) / chain.lam  # (1/2) sum over the row triples
    rows = ny - 2
    col_terms = 0.5 * rows * (nx - 2) * (2 * P.delta) ** 2
    expect = f.lam**2 * (rows * h1 + col_terms) / P.normalization(f.lam)
    assert energy_H2d(f, P) == pytest.approx(expect, rel=1e-12)


def test_normalization_scaling(rng):
    d = rng.integers(1, 3, (6, 6))
    phi = rng.uniform(-4, 4, (6, 6))
    a = energy_H2d(field(d, phi, lam=0.1), P)
    b = energy_H2d(field(d, phi, lam=0.3), P)
    assert b == pytest.approx(3 * a, rel=1e-12)


def test_gradient_matches_finite_differences(rng):
    f = field(rng.integers(1, 3, (6, 6)), rng.uniform(-4, 4, (6, 6)))
    g = gradient_H2d(f, P)
    h = 1e-6
    fd = np.zeros_like(g)
    for k in range(36):
        e = np.zeros(36)
        e[k] = h
        e = e.reshape(6, 6)
        fd.flat[k] = (energy_H2d(f.with_phi(f.phi + e), P) - energy_H2d(f.with_phi(f.phi - e), P)) / (2 * h)
    assert np.max(np.abs(fd - g)) < 1e-6 * max(1, np.max(np.abs(g)))


def test_discrete_partials():
    lam = 0.25
    i, j = np.indices((5, 6))
    d1, d2 = discrete_partials(3 * i - 2 * j, lam)
    assert np.all(d1 == 3 / lam) and np.all(d2 == -2 / lam)
    z1, z2 = discrete_partials(np.full((4, 4), 7.0), lam)
    assert not z1.any() and not z2.any()


def test_mixed_partials_commute(rng):
    v = rng.integers(-1000, 1000, (9, 11)).astype(float)
    a, b = discrete_partials(v, 1.0)
    ab = discrete_partials(a, 1.0)[1]
    ba = discrete_partials(b, 1.0)[0]
    assert np.array_equal(ab, ba)
