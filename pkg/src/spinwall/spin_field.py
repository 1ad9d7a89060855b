"""Lattice spin configurations, anisotropy labels, partitions and file I/O.

A configuration stores for every site (1D) or square (2D) the index d of the
circle it lives on and a chart angle phi. Sites are numbered 0..N with
N = floor(1/lambda).
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .geometry import SystemGeometry, embed

BC_TOL = 1e-10


class FieldError(ValueError):
    pass


def lattice_count(lam: float) -> int:
    """N = floor(1/lambda), robust to 1/lambda landing a rounding error below an integer."""
    if not lam > 0:
        raise FieldError(f"lattice spacing must be positive, got {lam!r}")
    x = 1.0 / lam
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, x):
        return int(r)
    return int(math.floor(x))


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpinChain1D:
    lam: float
    d: np.ndarray
    phi: np.ndarray
    geom: SystemGeometry

    def __post_init__(self):
        d = _frozen(self.d, np.int64)
        phi = _frozen(self.phi, np.float64)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "lam", float(self.lam))
        if d.shape != phi.shape or d.ndim != 1:
            raise FieldError("d and phi must be 1D arrays of equal length")
        expected = lattice_count(self.lam) + 1
        if d.size != expected:
            raise FieldError(f"chain with lambda={self.lam!r} needs {expected} sites, got {d.size}")
        if not np.all(np.isin(d, (1, 2))):
            raise FieldError("circle indices must be 1 or 2")
        if not np.all(np.isfinite(phi)):
            raise FieldError("angles must be finite")

    @property
    def n_sites(self) -> int:
        return self.d.size

    @property
    def N(self) -> int:
        return self.d.size - 1

    def vectors(self) -> np.ndarray:
        return embed(self.geom, self.d, self.phi)

    def with_phi(self, phi) -> "SpinChain1D":
        return SpinChain1D(self.lam, self.d, phi, self.geom)

    @classmethod
    def from_sites(cls, d, phi, geom) -> "SpinChain1D":
        """Chain whose spacing is implied by the number of sites (lambda = 1/(n-1))."""
        n = len(d)
        return cls(1.0 / (n - 1), d, phi, geom)


@dataclass(frozen=True)
class SpinField2D:
    """Values on the squares Q(i, j) = lambda*([i, i+1) x [j, j+1)), i, j >= 0.

    ``mask[i, j]`` marks the squares belonging to the domain; ``d`` and ``phi``
    are stored on the full bounding grid and ignored outside the mask.
    """

    lam: float
    mask: np.ndarray
    d: np.ndarray
    phi: np.ndarray
    geom: SystemGeometry

    def __post_init__(self):
        mask = _frozen(self.mask, bool)
        d = _frozen(self.d, np.int64)
        phi = _frozen(self.phi, np.float64)
        if not (mask.shape == d.shape == phi.shape) or mask.ndim != 2:
            raise FieldError("mask, d and phi must be 2D arrays of equal shape")
        if not np.all(np.isin(d[mask], (1, 2))):
            raise FieldError("circle indices must be 1 or 2 on the domain")
        if not np.all(np.isfinite(phi[mask])):
            raise FieldError("angles must be finite on the domain")
        d = np.where(mask, d, 1)
        d.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    def vectors(self) -> np.ndarray:
        return embed(self.geom, self.d, self.phi)

    def with_phi(self, phi) -> "SpinField2D":
        # mask and d are already validated; only the new angles are checked
        phi = _frozen(phi, np.float64)
        if phi.shape != self.mask.shape:
            raise FieldError("mask, d and phi must be 2D arrays of equal shape")
        if not np.all(np.isfinite(phi[self.mask])):
            raise FieldError("angles must be finite on the domain")
        out = copy.copy(self)
        object.__setattr__(out, "phi", phi)
        return out


def rectangle_mask(rectangles, lam: float) -> np.ndarray:
    """Squares of the lambda-grid covered by a union of rectangles (x0, y0, x1, y1).

    Corners are expected on the grid; a square belongs to the domain when its
    center lies in one of the rectangles.
    """
    rects = [tuple(map(float, r)) for r in rectangles]
    if not rects:
        raise FieldError("domain must contain at least one rectangle")
    for x0, y0, x1, y1 in rects:
        if x0 < 0 or y0 < 0 or x1 <= x0 or y1 <= y0:
            raise FieldError(f"bad rectangle {(x0, y0, x1, y1)}")
    nx = int(round(max(r[2] for r in rects) / lam))
    ny = int(round(max(r[3] for r in rects) / lam))
    mask = np.zeros((nx, ny), dtype=bool)
    cx = (np.arange(nx) + 0.5) * lam
    cy = (np.arange(ny) + 0.5) * lam
    for x0, y0, x1, y1 in rects:
        mask |= ((cx >= x0) & (cx < x1))[:, None] & ((cy >= y0) & (cy < y1))[None, :]
    return mask


# ---------------------------------------------------------------------------
# anisotropy and partitions


@dataclass(frozen=True)
class AnisotropyMap:
    labels: np.ndarray
    jump_count: int
    total_variation: float
    interface_length: float | None = None


def anisotropy_map(field) -> AnisotropyMap:
    gap = field.geom.axis_gap
    if isinstance(field, SpinChain1D):
        jumps = int(np.count_nonzero(np.diff(field.d)))
        return AnisotropyMap(field.d.copy(), jumps, jumps * gap)
    edges = interface_edges(field)
    length = edges * field.lam
    return AnisotropyMap(np.where(field.mask, field.d, 0), edges, length * gap, length)


def interface_edges(field: SpinField2D) -> int:
    """Number of square edges separating in-domain squares with different labels."""
    m, d = field.mask, field.d
    horiz = m[1:, :] & m[:-1, :] & (d[1:, :] != d[:-1, :])
    vert = m[:, 1:] & m[:, :-1] & (d[:, 1:] != d[:, :-1])
    return int(horiz.sum() + vert.sum())


@dataclass(frozen=True)
class Piece1D:
    start: int
    end: int
    d: int

    @property
    def n_sites(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class Component2D:
    mask: np.ndarray
    d: int

    @property
    def size(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class Partition:
    pieces: tuple
    lam: float

    @property
    def M(self) -> int:
        return len(self.pieces)

    def lengths(self) -> list[float]:
        return [p.n_sites * self.lam for p in self.pieces]


def partition(field) -> Partition:
    """Maximal constant-label runs (1D, left to right) or 4-connected components (2D).

    1D pieces are half-open site ranges [start, end); the last one ends at N+1.
    """
    if isinstance(field, SpinChain1D):
        d = field.d
        cuts = np.nonzero(np.diff(d))[0] + 1
        starts = np.concatenate([[0], cuts])
        ends = np.concatenate([cuts, [d.size]])
        pieces = tuple(Piece1D(int(s), int(e), int(d[s])) for s, e in zip(starts, ends))
        return Partition(pieces, field.lam)
    comps = []
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    for dd in (1, 2):
        labels, count = ndimage.label(field.mask & (field.d == dd), structure=structure)
        for k in range(1, count + 1):
            comps.append((labels == k, dd))
    # deterministic order: by first square in row-major order
    comps.sort(key=lambda c: int(np.flatnonzero(c[0])[0]))
    return Partition(tuple(Component2D(_frozen(m, bool), dd) for m, dd in comps), field.lam)


def check_boundary_condition(chain: SpinChain1D) -> tuple[bool, float]:
    """Joint end condition <u^0, u^1> = <u^{N-1}, u^N>."""
    if chain.n_sites < 3:
        raise FieldError("boundary condition needs at least 3 sites")
    u = embed(chain.geom, chain.d[[0, 1, -2, -1]], chain.phi[[0, 1, -2, -1]])
    res = abs(float(u[0] @ u[1]) - float(u[2] @ u[3]))
    return res < BC_TOL, res


# ---------------------------------------------------------------------------
# text formats


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _vec(v) -> str:
    return ",".join(_fmt(x) for x in v)


def _parse_header(line: str, magic: str) -> dict:
    parts = line.split()
    if len(parts) < 2 or parts[0] != magic or parts[1] != "v1":
        raise FieldError(f"expected header '{magic} v1 ...', got {line[:60]!r}")
    out = {}
    for tok in parts[2:]:
        key, _, val = tok.partition("=")
        out[key] = val
    for key in ("lambda", "R", "v1", "v2"):
        if key not in out:
            raise FieldError(f"header is missing {key}=")
    return out


def _geom_from_header(h: dict) -> SystemGeometry:
    v1 = [float(x) for x in h["v1"].split(",")]
    v2 = [float(x) for x in h["v2"].split(",")]
    return SystemGeometry(np.array(v1), np.array(v2), float(h["R"]))


def write_chain(chain: SpinChain1D, path) -> None:
    g = chain.geom
    lines = [f"spinwall-chain v1 lambda={_fmt(chain.lam)} R={_fmt(g.R)} v1={_vec(g.v1)} v2={_vec(g.v2)}"]
    lines += [f"{i} {int(dd)} {_fmt(p)}" for i, (dd, p) in enumerate(zip(chain.d, chain.phi))]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_chain(path) -> SpinChain1D:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    h = _parse_header(text[0], "spinwall-chain")
    rows = [ln.split() for ln in text[1:] if ln.strip() and not ln.startswith("#")]
    idx = np.array([int(r[0]) for r in rows])
    if not np.array_equal(idx, np.arange(len(rows))):
        raise FieldError("site indices must run 0..N in order")
    d = np.array([int(r[1]) for r in rows])
    phi = np.array([float(r[2]) for r in rows])
    return SpinChain1D(float(h["lambda"]), d, phi, _geom_from_header(h))


def write_field(field: SpinField2D, path) -> None:
    g = field.geom
    nx, ny = field.shape
    lines = [
        f"spinwall-field v1 lambda={_fmt(field.lam)} R={_fmt(g.R)} v1={_vec(g.v1)} v2={_vec(g.v2)} "
        f"nx={nx} ny={ny}"
    ]
    for i, j in zip(*np.nonzero(field.mask)):
        lines.append(f"{i} {j} {int(field.d[i, j])} {_fmt(field.phi[i, j])}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_field(path) -> SpinField2D:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    h = _parse_header(text[0], "spinwall-field")
    rows = [ln.split() for ln in text[1:] if ln.strip() and not ln.startswith("#")]
    ii = np.array([int(r[0]) for r in rows], dtype=int)
    jj = np.array([int(r[1]) for r in rows], dtype=int)
    nx = int(h.get("nx", ii.max() + 1))
    ny = int(h.get("ny", jj.max() + 1))
    mask = np.zeros((nx, ny), bool)
    d = np.ones((nx, ny), int)
    phi = np.zeros((nx, ny))
    mask[ii, jj] = True
    d[ii, jj] = [int(r[2]) for r in rows]
    phi[ii, jj] = [float(r[3]) for r in rows]
    return SpinField2D(float(h["lambda"]), mask, d, phi, _geom_from_header(h))
