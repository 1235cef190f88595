"""Bernoulli lemniscate reconstruction from 3D observations.

The curve in its own frame L is

    x = a*sqrt(2)*cos(t) / (sin(t)**2 + 1) + shift_x
    y = a*sqrt(2)*cos(t)*sin(t) / (sin(t)**2 + 1)
    z = 0

with implicit form (x**2 + y**2)**2 = 2*a**2*(x**2 - y**2) once the shift is
removed.  The pose of L in G comes from the centroid and principal axes of
the observations; ``a`` and the x-shift come from the signed radial extent
of the observations along the long axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import RigidTransform

SQRT2 = math.sqrt(2.0)


class DegenerateGeometryError(ValueError):
    """Observations do not span a plane (collinear or coincident)."""


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Time-ordered target positions in G."""

    points: np.ndarray  # (N, 3)
    times: np.ndarray  # (N,)

    def __post_init__(self) -> None:
        p = np.asarray(self.points, dtype=float).reshape(-1, 3)
        t = np.asarray(self.times, dtype=float).ravel()
        if p.shape[0] != t.size:
            raise ValueError("points and times differ in length")
        if t.size > 1 and np.any(np.diff(t) <= 0.0):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "times", t)

    @classmethod
    def from_points(cls, points, dt: float = 1.0) -> ObservationSet:
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        return cls(p, np.arange(p.shape[0]) * dt)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def span(self) -> float:
        return float(self.times[-1] - self.times[0]) if len(self) else 0.0


@dataclass(frozen=True, eq=False)
class LemniscateEstimate:
    a: float
    pose: RigidTransform  # T_G^L
    shift_x: float
    samples_L: np.ndarray  # (k, 3)
    samples_G: np.ndarray  # (k, 3)

    @property
    def k(self) -> int:
        return self.samples_G.shape[0]

    def point_L(self, t: float) -> np.ndarray:
        return lemniscate_point(self.a, t, self.shift_x)

    def point_G(self, t: float) -> np.ndarray:
        return self.pose.apply(self.point_L(t))


def lemniscate_point(a: float, t: float, shift_x: float = 0.0) -> np.ndarray:
    s, c = math.sin(t), math.cos(t)
    den = s * s + 1.0
    return np.array([a * SQRT2 * c / den + shift_x, a * SQRT2 * c * s / den, 0.0])


def lemniscate_xy(a: float, t: np.ndarray, shift_x: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    s, c = np.sin(t), np.cos(t)
    den = s * s + 1.0
    return a * SQRT2 * c / den + shift_x, a * SQRT2 * c * s / den


def sample_lemniscate(a: float, shift_x: float = 0.0, k: int = 100) -> np.ndarray:
    """``k`` points at t = 2*pi*i/k, i = 0..k-1, in frame L."""
    if not a > 0.0:
        raise ValueError("focal distance must be positive")
    if k < 4:
        raise ValueError("need at least 4 samples")
    t = 2.0 * math.pi * np.arange(k) / k
    x, y = lemniscate_xy(a, t, shift_x)
    return np.column_stack([x, y, np.zeros(k)])


def implicit_residual(points_L: np.ndarray, a: float, shift_x: float = 0.0) -> np.ndarray:
    """(x^2+y^2)^2 - 2a^2(x^2-y^2) after removing the shift."""
    p = np.atleast_2d(points_L)
    x = p[:, 0] - shift_x
    y = p[:, 1]
    r2 = x * x + y * y
    return r2 * r2 - 2.0 * a * a * (x * x - y * y)


def _points(obs) -> np.ndarray:
    return obs.points if isinstance(obs, ObservationSet) else np.asarray(obs, dtype=float).reshape(-1, 3)


def fit_pose(obs: ObservationSet | np.ndarray, rel_tol: float = 1e-10) -> RigidTransform:
    """``T_G^L`` from centroid and principal axes of the observations.

    x is the major axis, z the minor axis turned to point up, y = z cross x.
    The x sign puts the most recent observation at x >= 0 in L (ties go
    toward global +x), so refits on a growing buffer do not flip the frame.
    """
    p = _points(obs)
    if p.shape[0] < 3:
        raise DegenerateGeometryError("need at least 3 points")
    centroid = p.mean(axis=0)
    d = p - centroid
    cov = d.T @ d / p.shape[0]
    evals, evecs = np.linalg.eigh(cov)  # ascending
    if evals[2] <= 0.0 or evals[1] <= rel_tol * evals[2]:
        raise DegenerateGeometryError("observations are collinear or coincident")

    x_axis = evecs[:, 2]
    z_axis = evecs[:, 0]
    if z_axis[2] < 0.0 or (z_axis[2] == 0.0 and z_axis[1] < 0.0):
        z_axis = -z_axis
    lead = float(np.dot(d[-1], x_axis))
    if lead < 0.0 or (lead == 0.0 and x_axis[0] < 0.0):
        x_axis = -x_axis
    y_axis = np.cross(z_axis, x_axis)
    return RigidTransform(np.column_stack([x_axis, y_axis, z_axis]), centroid)


def signed_radii(points_L: np.ndarray) -> np.ndarray:
    """Distance from the origin of L, signed by the x component (0 counts as +)."""
    p = np.atleast_2d(np.asarray(points_L, dtype=float))
    r = np.linalg.norm(p, axis=1)
    return np.where(p[:, 0] < 0.0, -r, r)


def robust_extremes(r: np.ndarray, m: int) -> tuple[float, float]:
    """Median of the ``m`` largest and of the ``m`` smallest values."""
    r = np.asarray(r, dtype=float).ravel()
    if not 1 <= m <= r.size:
        raise ValueError(f"need 1 <= m <= len(r), got m={m}, len={r.size}")
    if m == 1:
        return float(r.max()), float(r.min())
    part = np.partition(r, (m - 1, r.size - m))
    low = np.sort(part[:m])
    high = np.sort(part[r.size - m :])
    return float(np.median(high)), float(np.median(low))


def default_window(n: int) -> int:
    return min(n, max(3, math.ceil(0.05 * n)))


def estimate(obs: ObservationSet | np.ndarray, k: int = 100, m: int | None = None) -> LemniscateEstimate:
    """Pose, focal distance and x-shift of the lemniscate through ``obs``."""
    p = _points(obs)
    pose = fit_pose(obs)
    p_L = pose.apply_inverse(p)
    r = signed_radii(p_L)
    r_max, r_min = robust_extremes(r, default_window(r.size) if m is None else m)
    length = r_max - r_min
    if not length > 0.0:
        raise DegenerateGeometryError("observations have no extent along the major axis")
    a = length / (2.0 * SQRT2)
    shift_x = (r_max + r_min) / 2.0
    samples_L = sample_lemniscate(a, shift_x, k)
    return LemniscateEstimate(a, pose, shift_x, samples_L, pose.apply(samples_L))
