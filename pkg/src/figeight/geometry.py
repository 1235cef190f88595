"""Frames, rigid transforms and the pinhole camera chain.

Frames used throughout the package:

* ``C`` camera: x right, y down, z along the optical axis.
* ``F`` follower body: x forward, y left, z up.
* ``G`` global: right-handed, z up, yaw 0 along +x.
* ``L`` lemniscate-local: x along the long axis, z normal to the curve plane.

A transform ``T_A^B`` maps coordinates expressed in ``B`` into ``A``:
``p_A = R p_B + t``.  Points are plain ``numpy`` arrays of shape ``(3,)``
(or ``(N, 3)`` for batches).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_ORTHO_TOL = 1e-9
_REPAIR_LIMIT = 1e-3


class InvalidInputError(ValueError):
    """Raised when an argument violates a documented precondition."""


def point3(x: float, y: float, z: float) -> np.ndarray:
    p = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(p)):
        raise InvalidInputError(f"non-finite point {p}")
    return p


def normalize_angle(angle: float) -> float:
    """Wrap ``angle`` into (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def rot_z(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def orthonormalize(rotation: np.ndarray) -> np.ndarray:
    """Gram-Schmidt on the columns, keeping the first column's direction."""
    x = rotation[:, 0] / np.linalg.norm(rotation[:, 0])
    y = rotation[:, 1] - np.dot(x, rotation[:, 1]) * x
    y /= np.linalg.norm(y)
    z = np.cross(x, y)
    return np.column_stack([x, y, z])


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation plus translation, ``p -> R @ p + t``.

    Construction validates the rotation.  Small drift (as accumulated over
    long composition chains) is repaired by Gram-Schmidt; anything that is
    not close to a proper rotation is rejected.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        r = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float).reshape(3)
        if r.shape != (3, 3) or not np.all(np.isfinite(r)):
            raise InvalidInputError("rotation must be a finite 3x3 matrix")
        if not np.all(np.isfinite(t)):
            raise InvalidInputError("translation must be finite")
        err = np.max(np.abs(r.T @ r - np.eye(3)))
        if err > _REPAIR_LIMIT:
            raise InvalidInputError(f"rotation is not orthonormal (error {err:.3g})")
        if err > _ORTHO_TOL:
            r = orthonormalize(r)
        if np.linalg.det(r) < 0.0:
            raise InvalidInputError("rotation has determinant -1 (reflection)")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls()

    @classmethod
    def from_yaw(cls, yaw: float, translation=(0.0, 0.0, 0.0)) -> RigidTransform:
        return cls(rot_z(yaw), np.asarray(translation, dtype=float))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> RigidTransform:
        m = np.asarray(matrix, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, p: np.ndarray) -> np.ndarray:
        """Transform a point ``(3,)`` or a batch ``(N, 3)``."""
        p = np.asarray(p, dtype=float)
        return p @ self.rotation.T + self.translation

    def inverse(self) -> RigidTransform:
        rt = self.rotation.T
        return RigidTransform(rt, -(rt @ self.translation))

    def apply_inverse(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return (p - self.translation) @ self.rotation

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        return compose(self, other)

    @property
    def yaw(self) -> float:
        """Heading of the transformed +x axis projected on the xy-plane."""
        return math.atan2(self.rotation[1, 0], self.rotation[0, 0])


def apply(t: RigidTransform, p: np.ndarray) -> np.ndarray:
    return t.apply(p)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """``compose(a, b).apply(p) == a.apply(b.apply(p))``."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def max_orthonormal_error(t: RigidTransform) -> float:
    return float(np.max(np.abs(t.rotation.T @ t.rotation - np.eye(3))))


@dataclass(frozen=True, eq=False)
class Pose:
    """Position in G plus heading; yaw is kept in (-pi, pi]."""

    position: np.ndarray
    yaw: float = 0.0

    def __post_init__(self) -> None:
        p = np.array(self.position, dtype=float).reshape(3)
        if not np.all(np.isfinite(p)) or not math.isfinite(self.yaw):
            raise InvalidInputError("pose must be finite")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "yaw", normalize_angle(float(self.yaw)))

    def transform(self) -> RigidTransform:
        """``T_G^F`` for a level vehicle at this pose."""
        return RigidTransform.from_yaw(self.yaw, self.position)

    def __repr__(self) -> str:
        x, y, z = self.position
        return f"Pose(({x:.3f}, {y:.3f}, {z:.3f}), yaw={self.yaw:.4f})"


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float = 700.0
    fy: float = 700.0
    cx: float = 640.0
    cy: float = 360.0
    width: int = 1280
    height: int = 720

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInputError("focal lengths must be positive")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise InvalidInputError("principal point must lie inside the image")

    def contains(self, u: float, v: float) -> bool:
        return 0.0 <= u <= self.width and 0.0 <= v <= self.height


def backproject(u: float, v: float, d: float, intr: CameraIntrinsics) -> np.ndarray:
    """Pixel plus depth to a point in the camera frame C."""
    if not (d > 0.0) or not math.isfinite(d):
        raise InvalidInputError(f"depth must be positive and finite, got {d}")
    if not (math.isfinite(u) and math.isfinite(v)):
        raise InvalidInputError("pixel coordinates must be finite")
    return np.array([(u - intr.cx) / intr.fx * d, (v - intr.cy) / intr.fy * d, d])


def project(p_c: np.ndarray, intr: CameraIntrinsics) -> tuple[float, float, float] | None:
    """Forward pinhole model; ``None`` for points at or behind the camera."""
    x, y, z = (float(c) for c in p_c)
    if z <= 0.0:
        return None
    return intr.fx * x / z + intr.cx, intr.fy * y / z + intr.cy, z


def camera_to_global(p_c: np.ndarray, t_fc: RigidTransform, t_gf: RigidTransform) -> np.ndarray:
    """``p^G = T_G^F T_F^C p^C``."""
    return t_gf.apply(t_fc.apply(p_c))


# Level, forward-looking camera: optical axis along follower +x,
# image x to the follower's right, image y down.
CAMERA_IN_FOLLOWER = np.array(
    [
        [0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
    ]
)


def default_camera_mount(offset=(0.0, 0.0, 0.0)) -> RigidTransform:
    """``T_F^C`` for a gimbal holding the camera level and facing forward."""
    return RigidTransform(CAMERA_IN_FOLLOWER, np.asarray(offset, dtype=float))
