"""Follower references and the Follow-and-Intercept mode machine."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from .geometry import InvalidInputError, Pose, normalize_angle, rot_z

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ServoConfig:
    """PBVS offsets in F.

    ``x_offset`` holds the *negative* standoff: with -7 the fixed point keeps
    the target 7 m ahead of the follower along its x-axis.
    """

    x_offset: float = -7.0
    y_offset: float = 0.0
    z_offset: float = 0.0
    active_axes: tuple[bool, bool, bool] = (True, True, True)
    yaw_control: bool = True

    def __post_init__(self) -> None:
        if not all(math.isfinite(o) for o in (self.x_offset, self.y_offset, self.z_offset)):
            raise ValueError("offsets must be finite")
        if not any(self.active_axes):
            raise ValueError("at least one axis must be active")

    @property
    def offsets(self) -> np.ndarray:
        return np.array([self.x_offset, self.y_offset, self.z_offset])


def yaw_step(current_yaw: float, target_F) -> float:
    """Turn by the bearing of the target in F."""
    x, y = float(target_F[0]), float(target_F[1])
    if x == 0.0 and y == 0.0:
        raise InvalidInputError("bearing undefined for a target at the follower origin")
    return normalize_angle(current_yaw + math.atan2(y, x))


def pbvs_step(follower: Pose, target_F, cfg: ServoConfig = ServoConfig()) -> Pose:
    """Next position (and yaw) reference from the target position in F."""
    t = np.asarray(target_F, dtype=float)
    if not np.all(np.isfinite(t)):
        raise InvalidInputError("target position must be finite")
    err = t + cfg.offsets
    if cfg.yaw_control:
        # lateral error is taken care of by turning instead
        err[1] = cfg.y_offset
    err = np.where(cfg.active_axes, err, 0.0)
    position = follower.position + rot_z(follower.yaw) @ err
    yaw = follower.yaw
    if cfg.yaw_control and (t[0] != 0.0 or t[1] != 0.0):
        yaw = yaw_step(follower.yaw, t)
    return Pose(position, yaw)


class Mode(enum.Enum):
    IDLE = "IDLE"
    TAKEOFF = "TAKEOFF"
    SEARCH = "SEARCH"
    FOLLOW = "FOLLOW"
    INTERCEPT = "INTERCEPT"


class EventKind(enum.Enum):
    MISSION_START = "mission-start"
    TAKEOFF_COMPLETE = "takeoff-complete"
    TARGET_DETECTED = "target-detected"
    TARGET_LOST = "target-lost"
    ESTIMATE_CONVERGED = "estimate-converged"
    WAYPOINT_REACHED = "waypoint-reached"


@dataclass(frozen=True)
class MissionEvent:
    kind: EventKind
    timestamp: float


TRANSITIONS: dict[tuple[Mode, EventKind], Mode] = {
    (Mode.IDLE, EventKind.MISSION_START): Mode.TAKEOFF,
    (Mode.TAKEOFF, EventKind.TAKEOFF_COMPLETE): Mode.SEARCH,
    (Mode.SEARCH, EventKind.TARGET_DETECTED): Mode.FOLLOW,
    (Mode.FOLLOW, EventKind.TARGET_LOST): Mode.SEARCH,
    (Mode.FOLLOW, EventKind.ESTIMATE_CONVERGED): Mode.INTERCEPT,
}


def step_mode(mode: Mode, event: MissionEvent) -> Mode:
    """Apply one event; pairs without an edge leave the mode unchanged."""
    nxt = TRANSITIONS.get((mode, event.kind))
    if nxt is None:
        log.debug("ignoring %s in %s at t=%.2f", event.kind.value, mode.value, event.timestamp)
        return mode
    return nxt


@dataclass(frozen=True)
class ModeChange:
    timestamp: float
    old: Mode
    new: Mode
    trigger: EventKind


@dataclass(frozen=True)
class ArenaConfig:
    """Rectangular arena centred on the origin of G."""

    length: float = 100.0  # along x
    width: float = 60.0  # along y
    min_altitude: float = 2.0
    max_altitude: float = 20.0

    def __post_init__(self) -> None:
        if not (self.length > 0 and self.width > 0 and self.max_altitude > self.min_altitude):
            raise ValueError("arena dimensions must be positive")

    def contains(self, p, tol: float = 1e-9) -> bool:
        x, y = float(p[0]), float(p[1])
        return abs(x) <= self.length / 2 + tol and abs(y) <= self.width / 2 + tol


def search_waypoints(arena: ArenaConfig, spacing: float, altitude: float = 10.0) -> list[Pose]:
    """Lawnmower sweep: legs along x, stepping across y no more than ``spacing``."""
    if not spacing > 0.0:
        raise ValueError("spacing must be positive")
    hx, hy = arena.length / 2.0, arena.width / 2.0
    n_legs = max(2, math.ceil(arena.width / spacing) + 1)
    ys = np.linspace(-hy, hy, n_legs)
    waypoints = []
    for i, y in enumerate(ys):
        x0, x1 = (-hx, hx) if i % 2 == 0 else (hx, -hx)
        yaw = 0.0 if x1 > x0 else math.pi
        waypoints.append(Pose((x0, y, altitude), yaw))
        waypoints.append(Pose((x1, y, altitude), yaw))
    return waypoints
