"""Chain energies: the frustrated energy E, the anisotropy penalty P, the
nonnegative form H, and the per-piece splitting of H into interval energies
and junction remainders.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .geometry import embed, wrap_angle
from .spin_field import FieldError, SpinChain1D, anisotropy_map, check_boundary_condition, lattice_count, partition


class DegeneratePieceError(FieldError):
    pass


class BoundaryConditionError(FieldError):
    pass


@dataclass(frozen=True)
class ModelParams1D:
    """Frustration alpha (or alpha = 4(1 - delta)) and penalty weight k.

    When delta is given it is kept as the primary value so that tiny deltas do
    not lose precision through alpha.
    """

    alpha: float | None = None
    delta: float | None = None
    k: float = 1.0

    def __post_init__(self):
        if self.alpha is None and self.delta is None:
            raise ValueError("give alpha or delta")
        if self.delta is not None:
            a = 4.0 * (1.0 - float(self.delta))
            if self.alpha is not None and abs(float(self.alpha) - a) > 1e-14 * max(1.0, abs(a)):
                raise ValueError(f"alpha={self.alpha} inconsistent with delta={self.delta}")
            object.__setattr__(self, "delta", float(self.delta))
            object.__setattr__(self, "alpha", a)
        else:
            object.__setattr__(self, "alpha", float(self.alpha))
            object.__setattr__(self, "delta", 1.0 - float(self.alpha) / 4.0)
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.k > 0:
            raise ValueError("k must be positive")

    @property
    def ground_density(self) -> float:
        """1 + alpha^2/8."""
        return 1.0 + self.alpha**2 / 8.0

    def normalization(self, lam: float) -> float:
        """sqrt(2) lambda delta^(3/2), the wall-energy scale."""
        if not self.delta > 0:
            raise ValueError("normalization needs delta > 0")
        return math.sqrt(2.0) * lam * self.delta**1.5

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "delta": self.delta, "k": self.k}


def index_count(lam: float) -> int:
    """Size of the summation set {0, ..., N-2}."""
    return lattice_count(lam) - 1


def _check_len(chain: SpinChain1D):
    if chain.n_sites < 3:
        raise FieldError("energy needs at least 3 sites")


def _e_pairs(n_sites: int, alpha: float):
    i = np.arange(n_sites - 2)
    p = np.concatenate([i, i])
    q = np.concatenate([i + 1, i + 2])
    w = np.concatenate([np.full(i.size, -alpha), np.ones(i.size)])
    return p, q, w


def _triples(n_sites: int):
    i = np.arange(n_sites - 2)
    return i, i + 1, i + 2


def energy_E(chain: SpinChain1D, params: ModelParams1D) -> float:
    _check_len(chain)
    p, q, w = _e_pairs(chain.n_sites, params.alpha)
    vals, _ = _kernels.pair_sum(chain.phi, chain.d, p, q, w, chain.geom)
    return chain.lam * math.fsum(vals)


def gradient_E(chain: SpinChain1D, params: ModelParams1D) -> np.ndarray:
    """dE/dphi_i."""
    _check_len(chain)
    p, q, w = _e_pairs(chain.n_sites, params.alpha)
    _, g = _kernels.pair_sum(chain.phi, chain.d, p, q, w, chain.geom)
    return chain.lam * g


def energy_P(chain: SpinChain1D, params: ModelParams1D) -> float:
    return chain.lam * params.k * anisotropy_map(chain).total_variation


def energy_H(chain: SpinChain1D, params: ModelParams1D) -> float:
    _check_len(chain)
    p, q, r = _triples(chain.n_sites)
    terms, _, _ = _kernels.triple_terms(chain.phi, chain.d, p, q, r, chain.geom, params.delta)
    return 0.5 * chain.lam * math.fsum(terms)


def gradient_H(chain: SpinChain1D, params: ModelParams1D) -> np.ndarray:
    _check_len(chain)
    p, q, r = _triples(chain.n_sites)
    _, g, _ = _kernels.triple_terms(chain.phi, chain.d, p, q, r, chain.geom, params.delta)
    return 0.5 * chain.lam * g


def ground_energy(lam: float, params: ModelParams1D) -> float:
    """-lambda (1 + alpha^2/8) #I, the value of E where H vanishes."""
    return -lam * params.ground_density * index_count(lam)


def circle_ground_energy(lam: float, params: ModelParams1D, R: float) -> float:
    """Minimum of E over single-circle chains of radius R obeying the end condition.

    On a circle the energy per term is R^2(-alpha cos A + cos(A+B)) plus the
    constant (1 - alpha)(1 - R^2), so the optimal helix turns by cos A = alpha/4
    (or is ferromagnetic for alpha >= 4). For R = 1 this is ground_energy.
    """
    a = params.alpha
    if a < 4.0:
        per = (1.0 - a) * (1.0 - R * R) - R * R * params.ground_density
    else:
        per = 1.0 - a
    return lam * index_count(lam) * per


def decomposition_residual(chain: SpinChain1D, params: ModelParams1D) -> float:
    """(E + P) - (H + P + ground); needs the end condition."""
    ok, res = check_boundary_condition(chain)
    if not ok:
        raise BoundaryConditionError(f"boundary condition violated (residual {res:.3g})")
    E = energy_E(chain, params)
    P = energy_P(chain, params)
    H = energy_H(chain, params)
    return (E + P) - (H + P + ground_energy(chain.lam, params))


# ---------------------------------------------------------------------------
# piecewise splitting


@dataclass(frozen=True)
class TildeSegment:
    """Piece values on sites start..stop with the value at ``stop`` replaced by w."""

    d: int
    start: int
    stop: int
    phi: np.ndarray
    replaced: bool

    @property
    def w(self) -> float:
        return float(self.phi[-1])


def _segment_bounds(pieces, j: int, n_sites: int) -> tuple[int, int]:
    piece = pieces[j]
    if piece.n_sites < 2:
        raise DegeneratePieceError(f"piece {j} has {piece.n_sites} site(s); at least 2 are needed")
    stop = piece.end if piece.end < n_sites else n_sites - 1
    return piece.start, stop


def _tilde_from_arrays(geom, d, phi, pieces, j):
    start, stop = _segment_bounds(pieces, j, d.size)
    dd = pieces[j].d
    seg = np.array(phi[start : stop + 1], dtype=float)
    # both sites of the first bond are on S_dd, so the condition is |turn| = |first bond|
    step = abs(wrap_angle(phi[start + 1] - phi[start]))
    if d[stop] == dd:
        u_prev = embed(geom, dd, phi[stop - 1])
        target = float(embed(geom, dd, phi[start]) @ embed(geom, dd, phi[start + 1]))
        if abs(float(u_prev @ embed(geom, dd, phi[stop])) - target) <= 1e-12:
            return TildeSegment(dd, start, stop, seg, False)
    sign = 1.0
    if stop - 2 >= start:
        prev = wrap_angle(phi[stop - 1] - phi[stop - 2])
        if prev < 0:
            sign = -1.0
    seg[-1] = phi[stop - 1] + sign * step
    return TildeSegment(dd, start, stop, seg, True)


def modify_tilde(chain: SpinChain1D, piece_index: int) -> TildeSegment:
    """Restriction to a piece, with the right endpoint replaced so that the
    segment satisfies its own end condition <u~^{stop-1}, w> = <u^start, u^{start+1}>.

    Of the two solutions the one turning in the same sense as the preceding
    bond is used (positive on ties). If the original value already satisfies
    the condition it is kept.
    """
    pieces = partition(chain).pieces
    if not 0 <= piece_index < len(pieces):
        raise IndexError(f"piece index {piece_index} out of range (M={len(pieces)})")
    return _tilde_from_arrays(chain.geom, chain.d, chain.phi, pieces, piece_index)


def _segment_E(geom, seg: TildeSegment, alpha: float) -> float:
    u = embed(geom, seg.d, seg.phi)
    nn = np.einsum("ix,ix->i", u[:-2], u[1:-1])
    nnn = np.einsum("ix,ix->i", u[:-2], u[2:])
    return math.fsum(np.concatenate([-alpha * nn, nnn]))


def _mm_from_segment(geom, seg, lam, params, literal, n_index_total):
    terms = seg.stop - seg.start - 1
    if literal:
        const = lam * params.ground_density * n_index_total * lam * (seg.stop - seg.start)
    else:
        const = lam * params.ground_density * terms
    return lam * _segment_E(geom, seg, params.alpha) + const


def energy_MM(chain: SpinChain1D, piece_index: int, params: ModelParams1D, literal: bool = False) -> float:
    """Interval energy of the tilde-modified piece.

    The renormalizing constant is lambda (1 + alpha^2/8) times the number of
    terms in the piece; ``literal=True`` uses #I(I) |I_j| instead.
    """
    seg = modify_tilde(chain, piece_index)
    return _mm_from_segment(chain.geom, seg, chain.lam, params, literal, index_count(chain.lam))


def remainder_from_arrays(geom, d, phi, pieces, j: int, lam: float, alpha: float) -> float:
    """Junction remainder after piece j, evaluated on raw site arrays."""
    M = len(pieces)
    if M < 2:
        raise FieldError("no junctions: the configuration has a single piece")
    if not 0 <= j < M - 1:
        raise IndexError(f"junction index {j} out of range (M-1={M - 1})")
    N = d.size - 1
    e = pieces[j].end
    w_j = _tilde_from_arrays(geom, d, phi, pieces, j)
    w_M = _tilde_from_arrays(geom, d, phi, pieces, M - 1)
    sites = [e - 2, e - 1, e, e + 1, N - 2, N]
    u = embed(geom, d[sites], phi[sites])
    um2, um1, ue, up1, uN2, uN = u
    wj = embed(geom, w_j.d, w_j.w)
    wM = embed(geom, w_M.d, w_M.w)
    bracket = -alpha * (um1 @ ue) + (um2 @ ue) + (um1 @ up1) + (um2 @ wj)
    tail = (uN2 @ uN) - (uN2 @ wM)
    return float(-lam * bracket + lam / (M - 1) * tail)


def remainder_R(chain: SpinChain1D, piece_index: int, params: ModelParams1D) -> float:
    pieces = partition(chain).pieces
    return remainder_from_arrays(chain.geom, chain.d, chain.phi, pieces, piece_index, chain.lam, params.alpha)


@dataclass
class EnergyBreakdown:
    E: float
    P: float
    H: float
    total: float
    ground: float
    MM: list = field(default_factory=list)
    R: list = field(default_factory=list)
    split_residual: float = float("nan")
    mm_literal: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **extra) -> str:
        out = self.to_dict()
        out.update(extra)
        return json.dumps(out, indent=2)


def split_parts(chain: SpinChain1D, params: ModelParams1D, literal: bool = False) -> tuple[list, list]:
    pieces = partition(chain).pieces
    n_total = index_count(chain.lam)
    mm = [
        _mm_from_segment(
            chain.geom, _tilde_from_arrays(chain.geom, chain.d, chain.phi, pieces, j), chain.lam, params, literal, n_total
        )
        for j in range(len(pieces))
    ]
    rem = [
        remainder_from_arrays(chain.geom, chain.d, chain.phi, pieces, j, chain.lam, params.alpha)
        for j in range(len(pieces) - 1)
    ]
    return mm, rem


def split_residual(chain: SpinChain1D, params: ModelParams1D, literal: bool = False) -> float:
    """H - sum MM - sum R.

    Zero up to rounding for a single piece. With two or more pieces the
    junction terms and the modified segment endpoints do not telescope, so a
    nonzero bookkeeping residual remains; it is reported rather than absorbed.
    """
    mm, rem = split_parts(chain, params, literal)
    return energy_H(chain, params) - math.fsum(mm) - math.fsum(rem)


def breakdown(chain: SpinChain1D, params: ModelParams1D, literal: bool = False) -> EnergyBreakdown:
    E = energy_E(chain, params)
    P = energy_P(chain, params)
    H = energy_H(chain, params)
    try:
        mm, rem = split_parts(chain, params, literal)
        resid = H - math.fsum(mm) - math.fsum(rem)
    except DegeneratePieceError:
        mm, rem, resid = [], [], float("nan")
    return EnergyBreakdown(E, P, H, E + P, ground_energy(chain.lam, params), mm, rem, resid, literal)
