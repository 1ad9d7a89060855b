"""Two circles of equal radius on the unit sphere, their charts and angles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

UNIT_TOL = 1e-12
ON_CIRCLE_TOL = 1e-9
PARALLEL_TOL = 1e-14


class GeometryError(ValueError):
    """Raised for invalid axes/radius or points that are not on the expected circle."""


def wrap_angle(x):
    """Wrap angles to [-pi, pi)."""
    y = np.mod(np.asarray(x, dtype=float) + math.pi, 2.0 * math.pi) - math.pi
    if np.ndim(y) == 0:
        return float(y)
    return y


def _as_unit(v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise GeometryError(f"{name} must be a finite 3-vector")
    if abs(np.linalg.norm(a) - 1.0) > UNIT_TOL:
        raise GeometryError(f"{name} must have unit norm (|{name}| = {np.linalg.norm(a)!r})")
    return a


def r_max(v1, v2) -> float:
    """Largest radius for which the two circles around v1 and v2 stay disjoint."""
    a = _as_unit(v1, "v1")
    b = _as_unit(v2, "v2")
    return math.sqrt(max(0.0, (1.0 - float(a @ b)) / 2.0))


def _frame(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = np.array([1.0, 0.0, 0.0])
    if abs(v @ ref) > 0.9:
        ref = np.array([0.0, 1.0, 0.0])
    e1 = ref - (ref @ v) * v
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(v, e1)
    return e1, e2


@dataclass(frozen=True)
class SystemGeometry:
    """Axes v1, v2 and common radius R of the circles S_1, S_2.

    Circle d has center ``c_d = v_d * sqrt(1 - R^2)`` and the right-handed
    in-plane frame ``(e1_d, e2_d)`` with ``e1_d x e2_d = v_d``.
    """

    v1: np.ndarray
    v2: np.ndarray
    R: float
    centers: np.ndarray = field(init=False, repr=False)
    e1: np.ndarray = field(init=False, repr=False)
    e2: np.ndarray = field(init=False, repr=False)
    axes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v1 = _as_unit(self.v1, "v1")
        v2 = _as_unit(self.v2, "v2")
        if np.allclose(v1, v2, atol=UNIT_TOL):
            raise GeometryError("v1 and v2 must differ")
        R = float(self.R)
        bound = r_max(v1, v2)
        if not (0.0 < R < bound):
            raise GeometryError(f"radius R={R!r} must satisfy 0 < R < R_Max = {bound!r}")
        h = math.sqrt(1.0 - R * R)
        f1 = _frame(v1)
        f2 = _frame(v2)
        arrays = {
            "v1": v1,
            "v2": v2,
            "R": R,
            "axes": np.stack([v1, v2]),
            "centers": np.stack([v1 * h, v2 * h]),
            "e1": np.stack([f1[0], f2[0]]),
            "e2": np.stack([f1[1], f2[1]]),
        }
        for name, val in arrays.items():
            if isinstance(val, np.ndarray):
                val.setflags(write=False)
            object.__setattr__(self, name, val)

    @classmethod
    def antipodal(cls, R: float, axis=(0.0, 0.0, 1.0)) -> "SystemGeometry":
        a = np.asarray(axis, dtype=float)
        return cls(a, -a, R)

    @property
    def r_max(self) -> float:
        return r_max(self.v1, self.v2)

    @property
    def axis_gap(self) -> float:
        """|v1 - v2|, the anisotropy jump size."""
        return float(np.linalg.norm(self.v1 - self.v2))

    def center(self, d: int) -> np.ndarray:
        return self.centers[_index(d)]

    def frame(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        k = _index(d)
        return self.e1[k], self.e2[k]

    def to_dict(self) -> dict:
        return {"v1": self.v1.tolist(), "v2": self.v2.tolist(), "R": self.R}


def _index(d) -> int:
    if d not in (1, 2):
        raise GeometryError(f"circle index must be 1 or 2, got {d!r}")
    return int(d) - 1


def embed(geom: SystemGeometry, d, phi):
    """Point of S_d at chart angle phi. Vectorized over d and phi."""
    d_arr = np.asarray(d)
    phi_arr = np.asarray(phi, dtype=float)
    if d_arr.ndim == 0 and phi_arr.ndim == 0:
        k = _index(int(d_arr))
        return geom.centers[k] + geom.R * (math.cos(phi_arr) * geom.e1[k] + math.sin(phi_arr) * geom.e2[k])
    k = np.broadcast_to(d_arr, np.broadcast_shapes(d_arr.shape, phi_arr.shape)).astype(int) - 1
    if np.any((k != 0) & (k != 1)):
        raise GeometryError("circle indices must be 1 or 2")
    phi_b = np.broadcast_to(phi_arr, k.shape)
    c = np.cos(phi_b)[..., None]
    s = np.sin(phi_b)[..., None]
    return geom.centers[k] + geom.R * (c * geom.e1[k] + s * geom.e2[k])


def embed_derivative(geom: SystemGeometry, d, phi):
    """d embed / d phi."""
    k = np.asarray(d).astype(int) - 1
    phi = np.asarray(phi, dtype=float)
    return geom.R * (-np.sin(phi)[..., None] * geom.e1[k] + np.cos(phi)[..., None] * geom.e2[k])


def in_plane(geom: SystemGeometry, u, d: int) -> np.ndarray:
    """Frame coordinates of u - c_d."""
    k = _index(d)
    w = np.asarray(u, dtype=float) - geom.centers[k]
    return np.array([w @ geom.e1[k], w @ geom.e2[k]])


def circle_residual(geom: SystemGeometry, u, d: int) -> tuple[float, float]:
    """(| |pi_perp(u)| - R |, distance of u.v_d from sqrt(1-R^2))."""
    k = _index(d)
    u = np.asarray(u, dtype=float)
    axial = float(u @ geom.axes[k])
    perp = np.linalg.norm(u - axial * geom.axes[k])
    return abs(perp - geom.R), abs(axial - math.sqrt(1.0 - geom.R**2))


def _check_on_circle(geom, u, d, name="u"):
    radial, axial = circle_residual(geom, u, d)
    if radial > ON_CIRCLE_TOL:
        raise GeometryError(f"{name} is not on S_{d}: |pi_perp({name})| differs from R by {radial:.3g}")
    if axial > ON_CIRCLE_TOL:
        raise GeometryError(f"{name} is not on S_{d}: {name}.v_{d} differs from sqrt(1-R^2) by {axial:.3g}")


def project_angle(geom: SystemGeometry, u, d: int) -> float:
    """Inverse chart of embed; result in [-pi, pi)."""
    _check_on_circle(geom, u, d)
    x, y = in_plane(geom, u, d)
    return wrap_angle(math.atan2(y, x))


def chi(a, b) -> int:
    """Sign of the 2D cross product a^1 b^2 - a^2 b^1, zero below 1e-14."""
    cross = float(a[0]) * float(b[1]) - float(a[1]) * float(b[0])
    if abs(cross) < PARALLEL_TOL:
        return 0
    return 1 if cross > 0 else -1


def oriented_angle(geom: SystemGeometry, u, u2, d: int) -> float:
    """Signed angle at the circle center from u to u2, in [-pi, pi)."""
    _check_on_circle(geom, u, d, "u")
    _check_on_circle(geom, u2, d, "u2")
    a = in_plane(geom, u, d)
    b = in_plane(geom, u2, d)
    # atan2 is the numerically stable form of chi(a, b) * arccos(a.b / R^2)
    cross = a[0] * b[1] - a[1] * b[0]
    if chi(a, b) == 0:
        return 0.0 if a @ b > 0 else -math.pi
    theta = math.atan2(cross, a @ b)
    return wrap_angle(theta)


def angle_from_circle(geom: SystemGeometry, d: int, u) -> tuple[int, float]:
    """(d, phi) for a point required to be on S_d."""
    return d, project_angle(geom, u, d)


def which_circle(geom: SystemGeometry, u) -> int:
    """Circle index of a point on S_1 or S_2."""
    for d in (1, 2):
        radial, axial = circle_residual(geom, u, d)
        if radial <= ON_CIRCLE_TOL and axial <= ON_CIRCLE_TOL:
            return d
    raise GeometryError("point lies on neither circle")
