"""Planar energies on the square lattice: the normalized stencil energy, the
anisotropy penalty along label interfaces, per-component energies and the
remainders that tie them back to the energy of the whole domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .spin_field import SpinField2D, anisotropy_map, partition, rectangle_mask


@dataclass(frozen=True)
class ModelParams2D:
    delta: float
    k: float = 1.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.k > 0:
            raise ValueError("k must be positive")

    @property
    def alpha(self) -> float:
        return 4.0 * (1.0 - self.delta)

    def normalization(self, lam: float) -> float:
        return math.sqrt(2.0) * lam * self.delta**1.5

    def eps(self, lam: float) -> float:
        return lam / math.sqrt(self.delta)

    def to_dict(self) -> dict:
        return {"delta": self.delta, "alpha": self.alpha, "k": self.k}


def index_mask(mask: np.ndarray, full_stencil: bool = True) -> np.ndarray:
    """Indices (i, j) whose stencil squares all lie in ``mask``.

    With ``full_stencil=False`` only Q(i,j), Q(i+1,j), Q(i,j+1) are required;
    the energy sums use the full stencil i..i+2, j..j+2.
    """
    m = np.asarray(mask, dtype=bool)
    nx, ny = m.shape
    reach = 2 if full_stencil else 1
    out = m.copy()
    for s in range(1, reach + 1):
        shifted = np.zeros_like(m)
        shifted[: nx - s, :] = m[s:, :]
        out &= shifted
        shifted = np.zeros_like(m)
        shifted[:, : ny - s] = m[:, s:]
        out &= shifted
    return out


def index_set_2d(domain, lam: float | None = None, full_stencil: bool = False) -> list[tuple[int, int]]:
    """Sorted index list for a boolean square mask or a list of rectangles."""
    if isinstance(domain, np.ndarray) and domain.dtype == bool:
        mask = domain
    else:
        if lam is None:
            raise ValueError("lambda is required for rectangle domains")
        if lam > max(max(r[2] - r[0], r[3] - r[1]) for r in domain):
            return []
        mask = rectangle_mask(domain, lam)
    idx = index_mask(mask, full_stencil)
    return [(int(i), int(j)) for i, j in zip(*np.nonzero(idx))]


def stencil_triples(index: np.ndarray):
    """Row and column site triples (flattened indices) for the marked base squares."""
    nx, ny = index.shape
    i, j = np.nonzero(index)
    flat = lambda a, b: a * ny + b  # noqa: E731
    p = np.concatenate([flat(i, j), flat(i, j)])
    q = np.concatenate([flat(i + 1, j), flat(i, j + 1)])
    r = np.concatenate([flat(i + 2, j), flat(i, j + 2)])
    return p, q, r


def _terms(field: SpinField2D, index: np.ndarray, delta: float, want_grad=False, want_hess=False):
    p, q, r = stencil_triples(index)
    terms, grad, hess = _kernels.triple_terms(
        field.phi.ravel(), field.d.ravel(), p, q, r, field.geom, delta, want_hess=want_hess
    )
    return terms, grad, hess, (p, q, r)


def _scale(field: SpinField2D, params: ModelParams2D) -> float:
    return 0.5 * field.lam**2 / params.normalization(field.lam)


def energy_H2d(field: SpinField2D, params: ModelParams2D, region: np.ndarray | None = None) -> float:
    """Normalized stencil energy over the full-stencil indices of ``region`` (default: the domain)."""
    region = field.mask if region is None else region
    terms, _, _, _ = _terms(field, index_mask(region), params.delta)
    return _scale(field, params) * math.fsum(terms)


def gradient_H2d(field: SpinField2D, params: ModelParams2D) -> np.ndarray:
    _, grad, _, _ = _terms(field, index_mask(field.mask), params.delta, want_grad=True)
    return (_scale(field, params) * grad).reshape(field.shape)


def energy_P2d(field: SpinField2D, params: ModelParams2D) -> float:
    return field.lam * params.k * anisotropy_map(field).total_variation


def remainder_R2d(field: SpinField2D, component, params: ModelParams2D) -> float:
    """Energy of the indices based in the component that are interior to the
    domain but not to the component itself."""
    cmask = component.mask if hasattr(component, "mask") else np.asarray(component, bool)
    index = cmask & index_mask(field.mask) & ~index_mask(cmask)
    terms, _, _, _ = _terms(field, index, params.delta)
    return _scale(field, params) * math.fsum(terms)


def energy_script_H2d(field: SpinField2D, params: ModelParams2D) -> tuple[float, list[float]]:
    """Sum of per-component energies, and the list of them."""
    parts = [energy_H2d(field, params, region=c.mask) for c in partition(field).pieces]
    return math.fsum(parts), parts


def energy_record(field: SpinField2D, params: ModelParams2D) -> dict:
    H = energy_H2d(field, params)
    comps = partition(field).pieces
    script, _ = energy_script_H2d(field, params)
    rem = [remainder_R2d(field, c, params) for c in comps]
    return {
        "H": H,
        "P": energy_P2d(field, params),
        "scriptH": script,
        "R": rem,
        "residual": H - script - math.fsum(rem),
    }


def discrete_partials(v, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences (v[i+1,j]-v[i,j])/lam and (v[i,j+1]-v[i,j])/lam."""
    v = np.asarray(v, dtype=float)
    return (v[1:, :] - v[:-1, :]) / lam, (v[:, 1:] - v[:, :-1]) / lam
