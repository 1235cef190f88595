"""Simulation configuration.

All angles are radians.  Every field can be overridden from a YAML file
through :func:`figeight.config.load_mission_config`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..geometry import (
    CameraIntrinsics,
    InvalidInputError,
    RigidTransform,
    default_camera_mount,
    rot_x,
    rot_y,
    rot_z,
)
from ..guidance import ArenaConfig, ServoConfig
from ..interceptor import DEFAULT_THRESHOLD, Direction
from ..tracker import TrackerConfig


class ConfigError(ValueError):
    """Inconsistent or out-of-range configuration."""


@dataclass(frozen=True)
class TargetConfig:
    a: float = 20.0
    speed: float = 2.0
    center: tuple[float, float, float] = (0.0, 0.0, 10.0)
    yaw: float = 0.0
    roll: float = 0.0  # tilt about the lemniscate x-axis
    pitch: float = 0.0  # tilt about the lemniscate y-axis
    start_t: float = 0.0
    direction: str = "CW"
    # draw center/yaw/tilt/start/direction from the mission seed
    randomize: bool = True
    max_tilt: float = math.radians(10.0)
    altitude_range: tuple[float, float] = (8.0, 12.0)

    @property
    def pose(self) -> RigidTransform:
        r = rot_z(self.yaw) @ rot_y(self.pitch) @ rot_x(self.roll)
        return RigidTransform(r, self.center)

    @property
    def direction_enum(self) -> Direction:
        return Direction(self.direction)


@dataclass(frozen=True)
class SensorConfig:
    intrinsics: CameraIntrinsics = CameraIntrinsics()
    range_min: float = 2.0
    range_max: float = 15.0
    rate: float = 7.0  # detector frames per second
    detection_probability: float = 0.9
    roi_bonus: float = 0.05  # added to detection_probability inside an active RoI
    max_range: float = 35.0  # beyond this the detector never fires
    pixel_sigma: float = 2.0
    depth_sigma: float = 0.3
    outlier_fraction: float = 0.2
    false_positive_rate: float = 0.02  # expected spurious boxes per frame
    target_diagonal: float = 1.13  # m, sets the apparent box size
    fill_fraction: float = 0.25  # share of box pixels carrying a depth sample
    min_samples: int = 12
    max_samples: int = 400
    camera_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def camera_mount(self) -> RigidTransform:
        return default_camera_mount(self.camera_offset)


@dataclass(frozen=True)
class InterceptorConfig:
    max_speed: float = 4.5
    max_yaw_rate: float = 1.5
    control_rate: float = 50.0
    home: tuple[float, float, float] = (-45.0, -25.0, 0.0)


@dataclass(frozen=True)
class PipelineConfig:
    tracker: TrackerConfig = TrackerConfig()
    servo: ServoConfig = ServoConfig()
    k: int = 100
    m: int = 0  # robust-extreme window; 0 picks max(3, ceil(0.05 n))
    threshold: float = DEFAULT_THRESHOLD
    rearm_factor: float = 2.0
    min_fit_points: int = 10
    min_fit_window: float = 2.0  # s
    direction_window: int = 40  # most recent observations used for direction voting
    min_votes: int = 5
    min_area_frac: float = 0.05
    search_spacing: float = 20.0
    search_altitude: float = 10.0
    local_search: bool = True  # after a loss, watch from the middle of the observed path
    spin_rate: float = 0.8  # rad/s yaw sweep while watching
    takeoff_duration: float = 3.0
    waypoint_tol: float = 0.5
    arrival_tol: float = 0.5
    arrival_yaw_tol: float = 0.1
    intercept_timeout: float = 120.0
    max_loops: float = 3.0
    max_duration: float = 1500.0


@dataclass(frozen=True)
class MissionConfig:
    arena: ArenaConfig = field(default_factory=ArenaConfig)
    target: TargetConfig = field(default_factory=TargetConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    interceptor: InterceptorConfig = field(default_factory=InterceptorConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)

    def validate(self) -> None:
        t, s, i, p = self.target, self.sensor, self.interceptor, self.pipeline
        checks = [
            (t.a > 0, "target.a must be positive"),
            (t.speed > 0, "target.speed must be positive"),
            (t.direction in ("CW", "CCW"), "target.direction must be CW or CCW"),
            (0.0 <= t.max_tilt < math.pi / 2, "target.max_tilt must lie in [0, pi/2)"),
            (t.altitude_range[0] <= t.altitude_range[1], "target.altitude_range is reversed"),
            (0 < s.range_min < s.range_max, "sensor range must satisfy 0 < min < max"),
            (s.rate > 0, "sensor.rate must be positive"),
            (0 <= s.detection_probability <= 1, "sensor.detection_probability outside [0, 1]"),
            (0 <= s.roi_bonus <= 1, "sensor.roi_bonus outside [0, 1]"),
            (0 <= s.outlier_fraction <= 1, "sensor.outlier_fraction outside [0, 1]"),
            (s.false_positive_rate >= 0, "sensor.false_positive_rate must be >= 0"),
            (s.pixel_sigma >= 0 and s.depth_sigma >= 0, "noise sigmas must be >= 0"),
            (s.max_range > 0 and s.target_diagonal > 0, "sensor.max_range/target_diagonal must be positive"),
            (1 <= s.min_samples <= s.max_samples, "need 1 <= min_samples <= max_samples"),
            (i.max_speed > 0 and i.max_yaw_rate > 0, "interceptor limits must be positive"),
            (i.control_rate > 0, "interceptor.control_rate must be positive"),
            (i.control_rate >= s.rate, "control rate must not be below the detection rate"),
            (p.k >= 4, "pipeline.k must be >= 4"),
            (p.m >= 0, "pipeline.m must be >= 0"),
            (p.threshold > 0, "pipeline.threshold must be positive"),
            (p.rearm_factor >= 1, "pipeline.rearm_factor must be >= 1"),
            (p.min_fit_points >= 4, "pipeline.min_fit_points must be >= 4"),
            (p.search_spacing > 0, "pipeline.search_spacing must be positive"),
            (p.spin_rate > 0, "pipeline.spin_rate must be positive"),
            (p.max_loops > 0, "pipeline.max_loops must be positive"),
            (p.tracker.n_miss >= 1 and p.tracker.n_consec >= 1, "tracker counters must be >= 1"),
            (self.arena.min_altitude <= p.search_altitude <= self.arena.max_altitude,
             "search altitude outside arena altitude bounds"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        try:
            t.pose
        except InvalidInputError as exc:
            raise ConfigError(f"target pose: {exc}") from exc
