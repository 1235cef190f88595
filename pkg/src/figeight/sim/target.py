"""Constant-speed target on a posed lemniscate.

The lemniscate perimeter has no elementary closed form, so arc length is
tabulated: 10**4 chords per period, cumulative length, then an inverse
lookup with linear interpolation in the curve parameter.  Interpolating the
parameter (not the position) keeps every simulated point exactly on the
curve.
"""

from __future__ import annotations

import functools
import math
from dataclasses import replace

import numpy as np

from ..geometry import RigidTransform
from ..lemniscate import lemniscate_xy
from .config import ArenaConfig, TargetConfig

TABLE_SIZE = 10_000


@functools.lru_cache(maxsize=32)
def _unit_table(n: int = TABLE_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """Parameter grid and cumulative chord length for a = 1."""
    t = np.linspace(0.0, 2.0 * math.pi, n + 1)
    x, y = lemniscate_xy(1.0, t)
    s = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(x), np.diff(y)))])
    return t, s


def perimeter(a: float) -> float:
    return float(_unit_table()[1][-1] * a)


class TargetPath:
    """Position of the target along its lemniscate as a function of time."""

    def __init__(self, cfg: TargetConfig):
        self.cfg = cfg
        self.a = cfg.a
        self.pose: RigidTransform = cfg.pose
        self._t, s = _unit_table()
        self._s = s * cfg.a
        self.perimeter = float(self._s[-1])
        self._sign = 1.0 if cfg.direction == "CW" else -1.0  # CW: t increasing
        self._s0 = self.arc_at(cfg.start_t % (2.0 * math.pi))

    def arc_at(self, t: float) -> float:
        return float(np.interp(t, self._t, self._s))

    def param_at(self, time: float) -> float:
        s = (self._s0 + self._sign * self.cfg.speed * time) % self.perimeter
        return float(np.interp(s, self._s, self._t))

    def position_L(self, time: float) -> np.ndarray:
        t = self.param_at(time)
        x, y = lemniscate_xy(self.a, np.array([t]))
        return np.array([x[0], y[0], 0.0])

    def position(self, time: float) -> np.ndarray:
        if time < 0.0:
            raise ValueError("time must be >= 0")
        return self.pose.apply(self.position_L(time))

    def loops(self, duration: float) -> float:
        return self.cfg.speed * duration / self.perimeter

    def dense_path_G(self) -> np.ndarray:
        x, y = lemniscate_xy(self.a, self._t[:-1])
        return self.pose.apply(np.column_stack([x, y, np.zeros_like(x)]))

    def distance_to_path(self, p: np.ndarray) -> float:
        """Distance from ``p`` to the nearest point of the true curve."""
        path = self.dense_path_G()
        d = np.linalg.norm(path - np.asarray(p, dtype=float), axis=1)
        i = int(np.argmin(d))
        # refine on the two neighbouring chords
        best = d[i]
        n = path.shape[0]
        for j in ((i - 1) % n, (i + 1) % n):
            a, b = path[i], path[j]
            ab = b - a
            u = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
            best = min(best, float(np.linalg.norm(p - (a + u * ab))))
        return float(best)


def target_position(cfg: TargetConfig, t: float) -> np.ndarray:
    return TargetPath(cfg).position(t)


def curve_extent(cfg: TargetConfig) -> np.ndarray:
    """Half-extent of the posed curve along each global axis, about its center."""
    t = np.linspace(0.0, 2.0 * math.pi, 721)
    x, y = lemniscate_xy(cfg.a, t)
    pts = np.column_stack([x, y, np.zeros_like(x)]) @ cfg.pose.rotation.T
    return np.abs(pts).max(axis=0)


def realize_target(cfg: TargetConfig, arena: ArenaConfig, rng: np.random.Generator) -> TargetConfig:
    """Draw pose, start point and direction inside the arena when ``randomize`` is set."""
    if not cfg.randomize:
        return cfg
    yaw = rng.uniform(-math.pi, math.pi)
    roll = rng.uniform(-cfg.max_tilt, cfg.max_tilt)
    pitch = rng.uniform(-cfg.max_tilt, cfg.max_tilt)
    start_t = rng.uniform(0.0, 2.0 * math.pi)
    direction = "CW" if rng.random() < 0.5 else "CCW"
    z = rng.uniform(*cfg.altitude_range)
    probe = replace(cfg, yaw=yaw, roll=roll, pitch=pitch, center=(0.0, 0.0, 0.0))
    ext = curve_extent(probe)
    hx = max(0.0, arena.length / 2.0 - ext[0])
    hy = max(0.0, arena.width / 2.0 - ext[1])
    cx = rng.uniform(-hx, hx) if hx > 0 else 0.0
    cy = rng.uniform(-hy, hy) if hy > 0 else 0.0
    return replace(
        cfg,
        center=(float(cx), float(cy), float(z)),
        yaw=float(yaw),
        roll=float(roll),
        pitch=float(pitch),
        start_t=float(start_t),
        direction=direction,
        randomize=False,
    )
