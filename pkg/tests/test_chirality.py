import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinwall.chirality import (ChiralityField1D, chirality_of_angle, directional_variation, discrete_curl_residual,
                                normalize_chirality, read_chirality_csv, total_variation_w, transform_T1d,
                                transform_T2d, write_chirality_csv)
from spinwall.energy_1d import ModelParams1D
from spinwall.energy_2d import ModelParams2D
from spinwall.geometry import SystemGeometry
from spinwall.minimize import build_ferromagnet, build_ground_helix, glue_helices
from spinwall.spin_field import SpinChain1D, SpinField2D

GEOM = SystemGeometry.antipodal(0.8)


def _field1d(w):
    w = np.asarray(w, float)
    n = w.size
    return ChiralityField1D(np.arange(n), np.zeros(n, int), np.ones(n, int), w, np.zeros(n, bool), 0.01, 1.0,
                            1 / n, normalized=True)


def test_ferromagnet_has_zero_chirality():
    chi, amap = transform_T1d(build_ferromagnet(50, 2, 1.3, GEOM), ModelParams1D(delta=0.02))
    assert np.all(chi.w == 0)
    assert chi.w.size == 50


@pytest.mark.parametrize("sign", [1, -1])
def test_ground_helix_chirality(sign):
    p = ModelParams1D(delta=0.02)
    chi, _ = transform_T1d(build_ground_helix(40, p, 1, sign, 0.2, GEOM), p)
    # sin^2(theta/2) = delta / (2 R^2), so raw w = 1/R = 1.25
    assert np.allclose(chi.raw, sign * 1.25, atol=1e-10)
    assert np.allclose(chi.wbar, sign, atol=1e-10)
    theta = math.acos(1 - 0.02 / 0.64)
    assert chirality_of_angle(theta, 0.02) == pytest.approx(1.25, abs=1e-12)


def test_wall_chain_changes_sign():
    p = ModelParams1D(delta=0.02)
    theta = 2 * math.asin(0.1 / 0.8)
    # the second helix starts where the first one ends, so site 30 repeats site 29
    chi, _ = transform_T1d(glue_helices(60, p, GEOM, [30], [1, 1], [1, -1], [0.0, 29 * theta]), p)
    assert np.allclose(chi.raw[:29], 1.25, atol=1e-10)
    assert chi.raw[29] == pytest.approx(0, abs=1e-12)
    assert np.allclose(chi.raw[30:], -1.25, atol=1e-10)


def test_two_pieces_and_synthetic_flag():
    p = ModelParams1D(alpha=3.9)
    chain = glue_helices(20, p, GEOM, [10], [1, 2], [1, 1])
    chi, amap = transform_T1d(chain, p)
    assert chi.pieces() == [0, 1]
    assert chi.synthetic.sum() <= 2
    assert np.all(chi.synthetic <= (np.diff(np.r_[chi.piece, -1]) != 0))


@pytest.mark.parametrize("delta", [0.001, 0.01, 0.05])
@pytest.mark.parametrize("R", [0.5, 0.8, 0.9999])
def test_ground_identity_grid(delta, R):
    g = SystemGeometry.antipodal(R)
    p = ModelParams1D(delta=delta)
    chi, _ = transform_T1d(build_ground_helix(30, p, 2, -1, 0.7, g), p)
    assert np.allclose(np.abs(chi.raw), 1 / R, atol=1e-10)
    assert np.allclose(np.abs(normalize_chirality(chi).w), 1, atol=1e-10)


def test_normalize_examples():
    p = ModelParams1D(delta=0.02)
    chi, _ = transform_T1d(build_ferromagnet(10, 1, 0, GEOM), p)
    assert np.all(normalize_chirality(chi).w == 0)
    hel, _ = transform_T1d(build_ground_helix(10, p, 1, 1, 0, GEOM), p)
    nz = normalize_chirality(hel)
    assert nz.normalized and normalize_chirality(nz) is nz
    back = nz.w * (1 / GEOM.R)
    assert np.allclose(back, hel.w, rtol=1e-15, atol=0)


def test_2d_constant_and_row_helix():
    p = ModelParams2D(delta=0.02)
    n = 8
    mask = np.ones((n, n), bool)
    const = SpinField2D(1 / n, mask, np.ones((n, n), int), np.full((n, n), 0.4), GEOM)
    chi, labels = transform_T2d(const, p)
    assert np.all(chi.w == 0) and np.all(chi.z == 0)
    assert np.all(labels == 1)
    theta = 2 * math.asin(math.sqrt(0.01) / 0.8)
    phi = np.outer(theta * np.arange(n), np.ones(n))
    row = SpinField2D(1 / n, mask, np.ones((n, n), int), phi, GEOM)
    chi, _ = transform_T2d(row, p)
    assert np.allclose(chi.w[chi.interior], 1.25, atol=1e-10)
    assert np.all(chi.z == 0)
    assert np.all(chi.w[~chi.interior] == 0)
    assert chi.interior.sum() == (n - 2) ** 2


def test_2d_checkerboard_has_no_interior():
    n = 6
    d = 1 + (np.add.outer(np.arange(n), np.arange(n)) % 2)
    f = SpinField2D(1 / n, np.ones((n, n), bool), d, np.linspace(0, 3, n * n).reshape(n, n), GEOM)
    chi, _ = transform_T2d(f, ModelParams2D(delta=0.02))
    assert not chi.interior.any()
    assert np.all(chi.w == 0) and np.all(chi.z == 0)


def test_curl_examples(rng):
    i, j = np.meshgrid(np.arange(7), np.arange(7), indexing="ij")
    assert discrete_curl_residual(np.sin(i), np.cos(j), 0.1) == 0
    f = rng.normal(size=(7, 7))
    lam = 0.1
    direct = max(abs((f[a + 1, b] - f[a, b]) - (f[a, b + 1] - f[a, b])) / lam for a in range(6) for b in range(6))
    assert discrete_curl_residual(f, f, lam) == pytest.approx(direct, rel=1e-14)
    jump = np.where(i < 3, -1.0, 1.0)
    assert discrete_curl_residual(jump, np.full((7, 7), 0.5), lam) == 0


def test_total_variation_examples():
    assert total_variation_w(_field1d([-1] * 5 + [1] * 5)) == 2
    assert total_variation_w(_field1d(np.linspace(-1, 1, 11))) == pytest.approx(2, abs=1e-15)
    n, h = 16, 10
    lam = 1 / n
    w = np.zeros((n, n))
    w[:, :h] = np.where(np.arange(n)[:, None] < 8, -1.0, 1.0)
    labels = np.ones((n, n), int)
    assert directional_variation(w, labels, lam, 1) == pytest.approx(2 * h * lam, abs=1e-15)
    assert directional_variation(w, labels, lam, 2) == pytest.approx(2 * n / 2 * lam, abs=1e-15)


def test_total_variation_excludes_other_components():
    w = np.array([[-1.0, -1.0], [1.0, 1.0]])
    labels = np.array([[1, 1], [2, 2]])
    assert directional_variation(w, labels, 0.5, 1) == 0
    assert directional_variation(w, np.ones((2, 2), int), 0.5, 1) == 2 * 2 * 0.5


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=40))
def test_telescoping(vals):
    v = np.sort(np.asarray(vals))
    assert total_variation_w(_field1d(v)) == pytest.approx(v[-1] - v[0], abs=1e-12)


@pytest.mark.filterwarnings("ignore:skipping piece")
@given(st.integers(0, 2**32 - 1), st.floats(0.001, 0.5))
def test_bound(seed, delta):
    r = np.random.default_rng(seed)
    n = int(r.integers(4, 40))
    chain = SpinChain1D.from_sites(r.integers(1, 3, n), r.uniform(-6, 6, n), GEOM)
    chi, _ = transform_T1d(chain, ModelParams1D(delta=delta))
    assert np.all(np.abs(chi.w) <= math.sqrt(2 / delta) + 1e-12)


@given(st.integers(0, 2**32 - 1), st.floats(-10, 10))
def test_rotation_invariance(seed, shift):
    r = np.random.default_rng(seed)
    n = int(r.integers(4, 40))
    p = ModelParams1D(delta=0.03)
    chain = SpinChain1D.from_sites(np.ones(n, int), r.uniform(-6, 6, n), GEOM)
    a, _ = transform_T1d(chain, p)
    b, _ = transform_T1d(chain.with_phi(chain.phi + shift), p)
    assert np.allclose(a.w, b.w, atol=1e-12)


def test_csv_round_trip_1d(tmp_path):
    p = ModelParams1D(alpha=3.9)
    chi, _ = transform_T1d(glue_helices(30, p, GEOM, [12, 20], [1, 2, 1], [1, -1, 1]), p)
    path = tmp_path / "chi.csv"
    write_chirality_csv(chi, path)
    assert path.read_text().splitlines()[0] == "i,piece,d,w,wbar,synthetic"
    back = read_chirality_csv(path, chi.delta, chi.R, chi.lam)
    assert np.array_equal(back.w, chi.wbar)
    assert np.array_equal(back.piece, chi.piece) and np.array_equal(back.synthetic, chi.synthetic)


def test_csv_round_trip_2d(tmp_path):
    n = 8
    theta = 2 * math.asin(math.sqrt(0.01) / 0.8)
    phi = np.add.outer(theta * np.arange(n), -theta * np.arange(n))
    f = SpinField2D(1 / n, np.ones((n, n), bool), np.ones((n, n), int), phi, GEOM)
    chi, _ = transform_T2d(f, ModelParams2D(delta=0.02))
    path = tmp_path / "chi2.csv"
    write_chirality_csv(chi, path)
    assert path.read_text().splitlines()[0] == "i,j,d,w,z,wbar,zbar"
    back = read_chirality_csv(path, 0.02, 0.8, 1 / n)
    k = chi.interior
    assert np.array_equal(back.w[k], chi.wbar[k]) and np.array_equal(back.z[k], chi.zbar[k])
