"""Cross-module invariants checked on generated inputs."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_bc_angles
from spinwall.chirality import total_variation_w, transform_T1d
from spinwall.energy_1d import ModelParams1D, decomposition_residual, energy_E, energy_H, ground_energy
from spinwall.energy_2d import ModelParams2D, energy_H2d, energy_record
from spinwall.geometry import SystemGeometry
from spinwall.minimize import MinimizeOptions, build_ferromagnet, minimize_chain
from spinwall.spin_field import SpinChain1D, SpinField2D, partition

GEOM = SystemGeometry.antipodal(0.8)
seeds = st.integers(0, 2**32 - 1)


@given(seeds, st.floats(3.0, 3.99))
def test_decomposition_on_bc_chains(seed, alpha):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 120))
    d, phi = random_bc_angles(rng, n)
    chain = SpinChain1D.from_sites(d, phi, GEOM)
    p = ModelParams1D(alpha=alpha)
    assert abs(decomposition_residual(chain, p)) < 1e-12 * max(1.0, abs(energy_E(chain, p)))
    assert energy_H(chain, p) >= 0


@given(seeds, st.floats(4.01, 6.0))
def test_ferromagnet_is_lowest_above_four(seed, alpha):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 80))
    d, phi = random_bc_angles(rng, n, mixed=False)
    chain = SpinChain1D.from_sites(d, phi, GEOM)
    p = ModelParams1D(alpha=alpha)
    ferro = build_ferromagnet(n - 1, 1, 0.0, GEOM)
    assert energy_E(chain, p) >= energy_E(ferro, p) - 1e-10


@given(seeds)
def test_2d_decomposition(seed):
    rng = np.random.default_rng(seed)
    nx, ny = rng.integers(3, 12, 2)
    mask = rng.random((nx, ny)) < 0.85
    f = SpinField2D(1 / 8, mask, rng.integers(1, 3, (nx, ny)), rng.uniform(-4, 4, (nx, ny)), GEOM)
    rec = energy_record(f, ModelParams2D(delta=float(rng.uniform(0.001, 0.5))))
    assert abs(rec["residual"]) < 1e-12 * max(1.0, abs(rec["H"]))
    assert rec["H"] >= 0


@given(seeds, st.integers(0, 4), st.integers(0, 4))
def test_component_count_translation_invariant(seed, di, dj):
    rng = np.random.default_rng(seed)
    n = 7
    mask = rng.random((n, n)) < 0.8
    d = rng.integers(1, 3, (n, n))
    base = SpinField2D(0.1, mask, d, np.zeros((n, n)), GEOM)
    big_mask = np.zeros((n + 4, n + 4), bool)
    big_d = np.ones((n + 4, n + 4), int)
    big_mask[di:di + n, dj:dj + n] = mask
    big_d[di:di + n, dj:dj + n] = d
    moved = SpinField2D(0.1, big_mask, big_d, np.zeros((n + 4, n + 4)), GEOM)
    assert partition(base).M == partition(moved).M


@given(seeds)
def test_2d_energy_translation_invariant(seed):
    rng = np.random.default_rng(seed)
    n = 6
    d, phi = rng.integers(1, 3, (n, n)), rng.uniform(-4, 4, (n, n))
    p = ModelParams2D(delta=0.05)
    a = energy_H2d(SpinField2D(0.1, np.ones((n, n), bool), d, phi, GEOM), p)
    pad = np.zeros((n + 2, n + 2), bool)
    pad[2:, 2:] = True
    big_d, big_phi = np.ones((n + 2, n + 2), int), np.zeros((n + 2, n + 2))
    big_d[2:, 2:], big_phi[2:, 2:] = d, phi
    b = energy_H2d(SpinField2D(0.1, pad, big_d, big_phi, GEOM), p)
    assert b == pytest.approx(a, rel=1e-13)


@settings(max_examples=15)
@given(seeds)
def test_minimizer_descends_and_is_reproducible(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, 40))
    chain = SpinChain1D.from_sites(rng.integers(1, 3, n), rng.uniform(-3, 3, n), GEOM)
    p = ModelParams1D(alpha=3.9)
    opts = MinimizeOptions(max_iterations=300)
    a, ra = minimize_chain(chain, p, opts)
    b, rb = minimize_chain(chain, p, opts)
    assert np.array_equal(a.phi, b.phi)
    tr = np.array(ra.energy_trace)
    assert np.all(np.diff(tr) <= 1e2 * np.finfo(float).eps * np.maximum(1, np.abs(tr[1:])))
    assert energy_H(a, p) <= energy_H(chain, p) + 1e-12


@given(seeds)
def test_energy_never_below_ground(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 100))
    d, phi = random_bc_angles(rng, n)
    chain = SpinChain1D.from_sites(d, phi, GEOM)
    p = ModelParams1D(alpha=3.9)
    # E + P = H + P + ground value with H >= 0
    assert energy_E(chain, p) >= ground_energy(chain.lam, p) - 1e-12


@given(seeds)
def test_chirality_variation_is_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 60))
    chain = SpinChain1D.from_sites(np.ones(n, int), rng.uniform(-3, 3, n), GEOM)
    p = ModelParams1D(delta=0.05)
    a = total_variation_w(transform_T1d(chain, p)[0])
    b = total_variation_w(transform_T1d(chain.with_phi(chain.phi + rng.uniform(-9, 9)), p)[0])
    assert b == pytest.approx(a, rel=1e-10, abs=1e-12)
