"""Chirality order parameters.

For a bond turning by the oriented angle theta the chirality is
w = sqrt(2/delta) sin(theta/2). On a helix of radius R whose neighbours have
dot product alpha/4 this gives |w| = 1/R, so the normalized value R*w is
the one that takes the values +-1.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .energy_1d import DegeneratePieceError, _tilde_from_arrays
from .energy_2d import index_mask
from .geometry import wrap_angle
from .spin_field import SpinChain1D, SpinField2D, anisotropy_map, partition


def chirality_of_angle(theta, delta: float):
    return math.sqrt(2.0 / delta) * np.sin(0.5 * np.asarray(theta, dtype=float))


@dataclass(frozen=True)
class ChiralityField1D:
    """Per-bond chirality; bond b joins site ``site[b]`` to the next value of its piece."""

    site: np.ndarray
    piece: np.ndarray
    d: np.ndarray
    w: np.ndarray
    synthetic: np.ndarray
    delta: float
    R: float
    lam: float
    normalized: bool = False
    skipped: tuple = field(default_factory=tuple)

    @property
    def wbar(self) -> np.ndarray:
        return self.w if self.normalized else self.R * self.w

    @property
    def raw(self) -> np.ndarray:
        return self.w / self.R if self.normalized else self.w

    def pieces(self):
        return [int(k) for k in np.unique(self.piece)]

    def piece_values(self, j: int, include_synthetic: bool = False) -> np.ndarray:
        sel = self.piece == j
        if not include_synthetic:
            sel &= ~self.synthetic
        return self.w[sel]


def transform_T1d(chain: SpinChain1D, params) -> tuple[ChiralityField1D, object]:
    """Chirality of every bond of every tilde-modified piece, plus the anisotropy labels."""
    pieces = partition(chain).pieces
    sites, piece_ids, ds, thetas, synth, skipped = [], [], [], [], [], []
    for j, pc in enumerate(pieces):
        try:
            seg = _tilde_from_arrays(chain.geom, chain.d, chain.phi, pieces, j)
        except DegeneratePieceError as exc:
            skipped.append({"piece": j, "reason": str(exc)})
            warnings.warn(f"skipping piece {j}: {exc}", RuntimeWarning)
            continue
        th = wrap_angle(np.diff(seg.phi))
        nb = th.size
        sites.append(np.arange(seg.start, seg.stop))
        piece_ids.append(np.full(nb, j))
        ds.append(np.full(nb, pc.d))
        thetas.append(th)
        flag = np.zeros(nb, bool)
        flag[-1] = seg.replaced
        synth.append(flag)
    cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)  # noqa: E731
    theta = cat(thetas, float)
    out = ChiralityField1D(
        site=cat(sites, int),
        piece=cat(piece_ids, int),
        d=cat(ds, int),
        w=chirality_of_angle(theta, params.delta),
        synthetic=cat(synth, bool),
        delta=params.delta,
        R=chain.geom.R,
        lam=chain.lam,
        skipped=tuple(skipped),
    )
    return out, anisotropy_map(chain)


@dataclass(frozen=True)
class ChiralityField2D:
    """Horizontal (w) and vertical (z) chirality on the squares; zero off ``interior``."""

    w: np.ndarray
    z: np.ndarray
    labels: np.ndarray
    interior: np.ndarray
    delta: float
    R: float
    lam: float
    normalized: bool = False

    @property
    def wbar(self):
        return self.w if self.normalized else self.R * self.w

    @property
    def zbar(self):
        return self.z if self.normalized else self.R * self.z


def transform_T2d(field2d: SpinField2D, params) -> tuple[ChiralityField2D, np.ndarray]:
    shape = field2d.shape
    w = np.zeros(shape)
    z = np.zeros(shape)
    interior = np.zeros(shape, bool)
    for comp in partition(field2d).pieces:
        interior |= index_mask(comp.mask)
    i, j = np.nonzero(interior)
    th_h = wrap_angle(field2d.phi[i + 1, j] - field2d.phi[i, j])
    th_v = wrap_angle(field2d.phi[i, j + 1] - field2d.phi[i, j])
    w[i, j] = chirality_of_angle(th_h, params.delta)
    z[i, j] = chirality_of_angle(th_v, params.delta)
    labels = np.where(field2d.mask, field2d.d, 0)
    return ChiralityField2D(w, z, labels, interior, params.delta, field2d.geom.R, field2d.lam), labels


def normalize_chirality(chi_field, R: float | None = None):
    """Multiply by R (the radius stored on the field unless given)."""
    R = chi_field.R if R is None else R
    if chi_field.normalized:
        return chi_field
    if isinstance(chi_field, ChiralityField1D):
        return replace(chi_field, w=chi_field.w * R, normalized=True)
    return replace(chi_field, w=chi_field.w * R, z=chi_field.z * R, normalized=True)


def discrete_curl_residual(w, z, lam: float, mask: np.ndarray | None = None) -> float:
    """max |d1 z - d2 w| over plaquettes whose four corners lie in ``mask``."""
    w = np.asarray(w, float)
    z = np.asarray(z, float)
    d1z = (z[1:, :-1] - z[:-1, :-1]) / lam
    d2w = (w[:-1, 1:] - w[:-1, :-1]) / lam
    r = np.abs(d1z - d2w)
    if mask is not None:
        m = np.asarray(mask, bool)
        ok = m[:-1, :-1] & m[1:, :-1] & m[:-1, 1:] & m[1:, 1:]
        r = r[ok]
    return float(r.max()) if r.size else 0.0


def total_variation_w(chi_field, direction: int | None = None, include_synthetic: bool = False) -> float:
    """1D: sum over pieces of sum |w^{i+1} - w^i|. 2D: length-weighted directional
    variation (direction 1 uses w, direction 2 uses z) within components."""
    if isinstance(chi_field, ChiralityField1D):
        total = 0.0
        for j in chi_field.pieces():
            v = chi_field.piece_values(j, include_synthetic)
            total += float(np.abs(np.diff(v)).sum())
        return total
    if direction is None:
        return total_variation_w(chi_field, 1) + total_variation_w(chi_field, 2)
    return directional_variation(chi_field.w if direction == 1 else chi_field.z, chi_field.labels, chi_field.lam, direction,
                                 chi_field.interior)


def directional_variation(v, labels, lam: float, direction: int, mask=None) -> float:
    """lam * sum |v(next) - v| over neighbour pairs in ``direction`` that share a label
    (and both lie in ``mask`` when given)."""
    v = np.asarray(v, float)
    labels = np.asarray(labels)
    same = labels != 0
    if mask is not None:
        same = same & np.asarray(mask, bool)
    if direction == 1:
        ok = same[1:, :] & same[:-1, :] & (labels[1:, :] == labels[:-1, :])
        diff = np.abs(v[1:, :] - v[:-1, :])
    else:
        ok = same[:, 1:] & same[:, :-1] & (labels[:, 1:] == labels[:, :-1])
        diff = np.abs(v[:, 1:] - v[:, :-1])
    return lam * float(diff[ok].sum())


def write_chirality_csv(chi_field, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        f = lambda x: format(float(x), ".17g")  # noqa: E731
        if isinstance(chi_field, ChiralityField1D):
            wr.writerow(["i", "piece", "d", "w", "wbar", "synthetic"])
            for s, p, d, w, wb, sy in zip(chi_field.site, chi_field.piece, chi_field.d, chi_field.raw, chi_field.wbar,
                                          chi_field.synthetic):
                wr.writerow([int(s), int(p), int(d), f(w), f(wb), int(sy)])
        else:
            wr.writerow(["i", "j", "d", "w", "z", "wbar", "zbar"])
            R = chi_field.R
            w_raw = chi_field.w / R if chi_field.normalized else chi_field.w
            z_raw = chi_field.z / R if chi_field.normalized else chi_field.z
            for i, j in zip(*np.nonzero(chi_field.labels)):
                wr.writerow([int(i), int(j), int(chi_field.labels[i, j]), f(w_raw[i, j]), f(z_raw[i, j]),
                             f(R * w_raw[i, j]), f(R * z_raw[i, j])])


def read_chirality_csv(path, delta: float = float("nan"), R: float = 1.0, lam: float = float("nan")):
    """Read a 1D or 2D chirality CSV back as a normalized field."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(r for r in fh if not r.startswith("#")))
    if not rows:
        raise ValueError("empty chirality file")
    if "piece" in rows[0]:
        return ChiralityField1D(
            site=np.array([int(r["i"]) for r in rows]),
            piece=np.array([int(r["piece"]) for r in rows]),
            d=np.array([int(r["d"]) for r in rows]),
            w=np.array([float(r["wbar"]) for r in rows]),
            synthetic=np.array([bool(int(r["synthetic"])) for r in rows]),
            delta=delta, R=R, lam=lam, normalized=True,
        )
    ii = np.array([int(r["i"]) for r in rows])
    jj = np.array([int(r["j"]) for r in rows])
    shape = (ii.max() + 1, jj.max() + 1)
    w = np.zeros(shape)
    z = np.zeros(shape)
    labels = np.zeros(shape, int)
    w[ii, jj] = [float(r["wbar"]) for r in rows]
    z[ii, jj] = [float(r["zbar"]) for r in rows]
    labels[ii, jj] = [int(r["d"]) for r in rows]
    interior = (w != 0) | (z != 0)
    return ChiralityField2D(w, z, labels, interior, delta, R, lam, normalized=True)
