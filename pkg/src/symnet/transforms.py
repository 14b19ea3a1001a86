"""Plane and quaternion value types with reflection / rotation transforms.

Conventions
-----------
- Quaternions are stored (w, x, y, z).
- Rotations are right-handed about their axis.
- Rotational candidates act about an anchor point. The detection pipeline
  uses the shape's surface centroid; the cube center (0.5, 0.5, 0.5) is the
  default when no shape is at hand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

CUBE_CENTER = np.array([0.5, 0.5, 0.5])
DEFAULT_AXIS = (0.0, 0.0, 1.0)


class ParameterError(ValueError):
    """Raised for invalid geometric parameters (zero normals, bad quaternions, ...)."""


def _vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(3)
    return a


@dataclass(frozen=True)
class SymPlane:
    """Plane ``a*x + b*y + c*z + d = 0``."""

    n: tuple[float, float, float]
    d: float

    def __post_init__(self):
        n = tuple(float(x) for x in self.n)
        if len(n) != 3:
            raise ParameterError("plane normal must have 3 components")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "d", float(self.d))

    @property
    def normal(self) -> np.ndarray:
        return np.array(self.n)

    def as_array(self) -> np.ndarray:
        return np.array([*self.n, self.d])

    @classmethod
    def from_array(cls, a) -> "SymPlane":
        a = np.asarray(a, dtype=float).reshape(4)
        return cls(tuple(a[:3]), a[3])

    @classmethod
    def through_point(cls, normal, point) -> "SymPlane":
        n = _vec3(normal)
        return cls(tuple(n), -float(n @ _vec3(point)))

    def to_json(self) -> dict:
        return {"n": list(self.n), "d": self.d}

    @classmethod
    def from_json(cls, obj: dict) -> "SymPlane":
        try:
            return cls(tuple(obj["n"]), obj["d"])
        except (KeyError, TypeError) as exc:
            raise ParameterError(f"invalid plane JSON: {obj!r}") from exc


@dataclass(frozen=True)
class RotQuat:
    """Rotation quaternion (w, x, y, z)."""

    q: tuple[float, float, float, float]

    def __post_init__(self):
        q = tuple(float(x) for x in self.q)
        if len(q) != 4:
            raise ParameterError("quaternion must have 4 components")
        object.__setattr__(self, "q", q)

    def as_array(self) -> np.ndarray:
        return np.array(self.q)

    def normalized(self) -> "RotQuat":
        a = self.as_array()
        norm = np.linalg.norm(a)
        if norm == 0:
            raise ParameterError("zero quaternion")
        return RotQuat(tuple(a / norm))

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "RotQuat":
        v = _vec3(axis)
        nv = np.linalg.norm(v)
        if nv == 0:
            raise ParameterError("zero rotation axis")
        v = v / nv
        s = math.sin(angle / 2.0)
        return cls((math.cos(angle / 2.0), *(s * v)))


@dataclass(frozen=True)
class AxisAngle:
    axis: tuple[float, float, float]
    angle: float
    anchor: tuple[float, float, float] = field(default=(0.5, 0.5, 0.5))

    def __post_init__(self):
        axis = _vec3(self.axis)
        norm = np.linalg.norm(axis)
        if norm == 0:
            raise ParameterError("zero rotation axis")
        if abs(norm - 1.0) > 1e-9:
            axis = axis / norm
        object.__setattr__(self, "axis", tuple(float(x) for x in axis))
        object.__setattr__(self, "angle", float(self.angle))
        object.__setattr__(self, "anchor", tuple(float(x) for x in _vec3(self.anchor)))

    def to_json(self) -> dict:
        return {"axis": list(self.axis), "angle": self.angle, "anchor": list(self.anchor)}

    @classmethod
    def from_json(cls, obj: dict) -> "AxisAngle":
        try:
            return cls(tuple(obj["axis"]), obj["angle"], tuple(obj.get("anchor", CUBE_CENTER)))
        except (KeyError, TypeError) as exc:
            raise ParameterError(f"invalid axis JSON: {obj!r}") from exc


# ---------------------------------------------------------------------------
# quaternion algebra


def quat_mul(p, q) -> np.ndarray:
    """Hamilton product; broadcasts over leading axes."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pw, px, py, pz = np.moveaxis(p, -1, 0)
    qw, qx, qy, qz = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            pw * qw - px * qx - py * qy - pz * qz,
            pw * qx + px * qw + py * qz - pz * qy,
            pw * qy - px * qz + py * qw + pz * qx,
            pw * qz + px * qy - py * qx + pz * qw,
        ],
        axis=-1,
    )


def quat_conj(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_to_matrix(q) -> np.ndarray:
    """Rotation matrix of the normalized quaternion ``q``."""
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def _unit_quat(quat: RotQuat | Sequence[float]) -> np.ndarray:
    q = quat.as_array() if isinstance(quat, RotQuat) else np.asarray(quat, dtype=float)
    norm = np.linalg.norm(q)
    if abs(norm - 1.0) > 1e-3:
        raise ParameterError(f"quaternion is not unit length (|q| = {norm:.6g})")
    return q


# ---------------------------------------------------------------------------
# transforms


def reflect(plane: SymPlane, q) -> np.ndarray:
    """Mirror point(s) ``q`` across ``plane``. Accepts (3,) or (N, 3)."""
    n = plane.normal
    nn = n @ n
    if nn == 0:
        raise ParameterError("plane normal is zero")
    q = np.asarray(q, dtype=float)
    s = q @ n + plane.d
    return q - (2.0 * s / nn)[..., None] * n if q.ndim > 1 else q - 2.0 * s / nn * n


def rotate(quat: RotQuat, q, center=None) -> np.ndarray:
    """Rotate point(s) by the sandwich product ``p * (0, q) * p^-1``.

    With ``center`` given the rotation acts about that point instead of the
    origin.
    """
    p = _unit_quat(quat)
    q = np.asarray(q, dtype=float)
    c = np.zeros(3) if center is None else _vec3(center)
    v = q - c
    pure = np.concatenate([np.zeros(v.shape[:-1] + (1,)), v], axis=-1)
    # p^-1 = conj(p) / |p|^2
    out = quat_mul(quat_mul(p, pure), quat_conj(p) / (p @ p))
    return out[..., 1:] + c


def quat_to_axis_angle(quat: RotQuat, anchor=CUBE_CENTER) -> AxisAngle:
    w, x, y, z = _unit_quat(quat) / np.linalg.norm(quat.as_array())
    angle = 2.0 * math.acos(min(1.0, max(-1.0, w)))
    s = math.sqrt(max(0.0, 1.0 - w * w))
    if s < 1e-12:
        return AxisAngle(DEFAULT_AXIS, 0.0, tuple(_vec3(anchor)))
    if angle > math.pi:
        # report in (-pi, pi]: same rotation as -(2pi - angle) about the same axis
        angle -= 2.0 * math.pi
    return AxisAngle((x / s, y / s, z / s), angle, tuple(_vec3(anchor)))


def canonicalize_plane(plane: SymPlane) -> SymPlane:
    """Unit normal whose first nonzero component is positive."""
    n = plane.normal
    norm = np.linalg.norm(n)
    if norm == 0:
        raise ParameterError("plane normal is zero")
    # leave already-unit normals alone so canonicalization is bitwise idempotent
    if abs(norm - 1.0) > 4 * np.finfo(float).eps:
        n = n / norm
        d = plane.d / norm
    else:
        d = plane.d
    first = n[np.flatnonzero(n)[0]]
    if first < 0:
        n, d = -n, -d
    return SymPlane(tuple(n), d)


def transform_plane(plane: SymPlane, rot: np.ndarray | None = None, scale: float = 1.0, shift=None) -> SymPlane:
    """Plane image under ``y = scale * (rot @ x) + shift``."""
    n = plane.normal
    d = plane.d
    if rot is not None:
        n = rot @ n
    t = np.zeros(3) if shift is None else _vec3(shift)
    return SymPlane(tuple(n), scale * d - n @ t)


def transform_axis(axis: AxisAngle, rot: np.ndarray | None = None, scale: float = 1.0, shift=None) -> AxisAngle:
    v = np.array(axis.axis)
    a = np.array(axis.anchor)
    if rot is not None:
        v, a = rot @ v, rot @ a
    t = np.zeros(3) if shift is None else _vec3(shift)
    return AxisAngle(tuple(v), axis.angle, tuple(scale * a + t))


def dihedral_angle(n1, n2) -> float:
    """Angle in [0, pi/2] between the undirected lines spanned by two vectors."""
    n1 = _vec3(n1)
    n2 = _vec3(n2)
    c = abs(n1 @ n2) / (np.linalg.norm(n1) * np.linalg.norm(n2))
    return math.acos(min(1.0, c))
