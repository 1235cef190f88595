"""Seeded mission simulator: target, synthetic sensor, kinematic follower."""

from .config import (
    ArenaConfig,
    ConfigError,
    InterceptorConfig,
    MissionConfig,
    PipelineConfig,
    SensorConfig,
    TargetConfig,
)
from .mission import MissionResult, run_mission, step_interceptor
from .sensor import false_positives, sense, sense_frame
from .target import TargetPath, perimeter, realize_target, target_position

__all__ = [
    "ArenaConfig",
    "ConfigError",
    "InterceptorConfig",
    "MissionConfig",
    "MissionResult",
    "PipelineConfig",
    "SensorConfig",
    "TargetConfig",
    "TargetPath",
    "false_positives",
    "perimeter",
    "realize_target",
    "run_mission",
    "sense",
    "sense_frame",
    "step_interceptor",
    "target_position",
]
