"""One seeded Follow-and-Intercept mission.

The world advances at the control rate.  Detector frames arrive at the
sensor rate and go through tracker -> lemniscate fit -> convergence gate;
the mode machine decides which reference the kinematic follower flies to.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import IO

import numpy as np

from ..geometry import Pose, normalize_angle
from ..guidance import (
    EventKind,
    MissionEvent,
    Mode,
    ModeChange,
    pbvs_step,
    search_waypoints,
    step_mode,
)
from ..interceptor import (
    ConvergenceReport,
    InterceptPose,
    UndecidedDirectionError,
    check_convergence,
    identify_direction,
    intercept_pose,
)
from ..lemniscate import DegenerateGeometryError, LemniscateEstimate, estimate
from ..tracker import CameraContext, TargetTracker
from .config import ConfigError, InterceptorConfig, MissionConfig
from .sensor import sense_frame
from .target import TargetPath, realize_target

log = logging.getLogger(__name__)


@dataclass
class MissionResult:
    seed: int
    success: bool = False
    converged: bool = False
    arrived: bool = False
    loops_used: float = math.nan
    intercept_error: float = math.nan
    focal_error: float = math.nan
    a_estimate: float = math.nan
    final_dH: float = math.nan
    final_ratio: float = math.nan
    n_observations: int = 0
    duration: float = 0.0
    dH_history: list[tuple[int, float]] = field(default_factory=list)
    mode_log: list[ModeChange] = field(default_factory=list)
    intercept: InterceptPose | None = None
    target: object = None  # realized TargetConfig

    def mode_sequence(self) -> list[str]:
        seq = [Mode.IDLE.value]
        seq.extend(c.new.value for c in self.mode_log)
        return seq


def step_interceptor(state: Pose, reference: Pose, cfg: InterceptorConfig, dt: float) -> Pose:
    """Fly straight toward ``reference`` under speed and yaw-rate limits."""
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    delta = reference.position - state.position
    dist = math.sqrt(float(delta @ delta))
    reach = cfg.max_speed * dt
    position = reference.position if dist <= reach else state.position + delta * (reach / dist)
    dyaw = normalize_angle(reference.yaw - state.yaw)
    turn = cfg.max_yaw_rate * dt
    yaw = reference.yaw if abs(dyaw) <= turn else state.yaw + math.copysign(turn, dyaw)
    return Pose(position, yaw)


class _Mission:
    def __init__(self, cfg: MissionConfig, seed: int, trace: IO[str] | None):
        cfg.validate()
        self.cfg = cfg
        self.seed = seed
        self.trace = trace
        scenario_seq, sensor_seq = np.random.SeedSequence(seed).spawn(2)
        scen_rng = np.random.Generator(np.random.PCG64(scenario_seq))
        self.rng = np.random.Generator(np.random.PCG64(sensor_seq))
        self.target_cfg = realize_target(cfg.target, cfg.arena, scen_rng)
        self.path = TargetPath(self.target_cfg)

        p = cfg.pipeline
        s = cfg.sensor
        tracker_cfg = replace(p.tracker, range_min=s.range_min, range_max=s.range_max)
        self.tracker = TargetTracker(tracker_cfg)
        self.t_fc = s.camera_mount
        self.dt = 1.0 / cfg.interceptor.control_rate
        self.frame_period = 1.0 / s.rate

        self.mode = Mode.IDLE
        self.result = MissionResult(seed=seed, target=self.target_cfg)
        self.follower = Pose(cfg.interceptor.home, 0.0)
        self.takeoff_started = 0.0
        self.waypoints: list[Pose] = []
        self.wp_index = 0
        self.vantage: np.ndarray | None = None

        # observation buffer; a track segment joins it once confirmed
        self.obs_points: list[np.ndarray] = []
        self.obs_times: list[float] = []
        self.pending: list[tuple[float, np.ndarray]] = []
        self.estimate: LemniscateEstimate | None = None
        self.report: ConvergenceReport | None = None
        self.history: tuple[tuple[int, float], ...] = ()
        self.intercept: InterceptPose | None = None
        self.frozen: LemniscateEstimate | None = None
        self.frozen_report: ConvergenceReport | None = None
        self.rearmed = False
        self.first_detection: float | None = None
        self.converged_at: float | None = None
        self.intercept_started: float | None = None

    # -- mode machine -------------------------------------------------
    def emit(self, kind: EventKind, now: float) -> None:
        new = step_mode(self.mode, MissionEvent(kind, now))
        if new is not self.mode:
            self.result.mode_log.append(ModeChange(now, self.mode, new, kind))
            log.debug("t=%.2f %s -> %s (%s)", now, self.mode.value, new.value, kind.value)
            self.mode = new
            self.on_enter(new, now)

    def on_enter(self, mode: Mode, now: float) -> None:
        if mode is Mode.TAKEOFF:
            self.takeoff_started = now
        elif mode is Mode.SEARCH:
            self.start_search()
        elif mode is Mode.INTERCEPT:
            self.intercept_started = now

    def start_search(self) -> None:
        p = self.cfg.pipeline
        self.tracker.reset()
        self.pending.clear()
        self.vantage = None
        if p.local_search and self.obs_points:
            # the curve crosses itself near the middle of what was seen, so
            # the target comes back past that point twice per loop
            arena = self.cfg.arena
            c = np.mean(self.obs_points, axis=0)
            hx, hy = arena.length / 2.0, arena.width / 2.0
            self.vantage = np.array([
                min(max(c[0], -hx), hx),
                min(max(c[1], -hy), hy),
                min(max(c[2], arena.min_altitude), arena.max_altitude),
            ])
            return
        lawn = search_waypoints(self.cfg.arena, p.search_spacing, p.search_altitude)
        pos = self.follower.position
        nearest = min(range(len(lawn)), key=lambda i: float(np.linalg.norm(lawn[i].position - pos)))
        route = lawn[nearest:] + lawn[:nearest]
        track = self.tracker.track
        if track is not None:
            # look where the target was last heading first
            guess = track.position + track.velocity * 1.0
            z = min(max(guess[2], self.cfg.arena.min_altitude), self.cfg.arena.max_altitude)
            route.insert(0, Pose((guess[0], guess[1], z), self.follower.yaw))
        self.waypoints = route
        self.wp_index = 0

    # -- perception ---------------------------------------------------
    def frame(self, now: float, truth: np.ndarray) -> None:
        ctx = CameraContext(self.cfg.sensor.intrinsics, self.t_fc, self.follower.transform())
        roi_box = self.tracker.roi_for_frame(ctx)
        dets = sense_frame(truth, ctx.t_gc, self.cfg.sensor, self.rng, now, roi_box)
        trk = self.tracker
        _, z = trk.step(dets, now, ctx)

        if trk.lost:
            self.pending.clear()
            if self.mode is Mode.FOLLOW:
                self.emit(EventKind.TARGET_LOST, now)
            else:
                trk.reset()
            return
        if trk.track is None:
            self.pending.clear()
            return
        # clamped depths, gated outliers and unverified depths steer the follower but never enter the fit
        if trk.last_trusted:
            self.pending.append((now, z))
        if not trk.confirmed:
            return
        if self.mode is Mode.SEARCH:
            if self.first_detection is None:
                self.first_detection = now
            self.emit(EventKind.TARGET_DETECTED, now)
        if self.mode in (Mode.FOLLOW, Mode.INTERCEPT) and self.pending:
            for t, p in self.pending:
                self.obs_times.append(t)
                self.obs_points.append(p)
            self.pending.clear()
            self.refit(now)

    def refit(self, now: float) -> None:
        p = self.cfg.pipeline
        n = len(self.obs_points)
        if n < p.min_fit_points or self.obs_times[-1] - self.obs_times[0] < p.min_fit_window:
            return
        pts = np.asarray(self.obs_points)
        try:
            est = estimate(pts, k=p.k, m=p.m or None)
        except DegenerateGeometryError:
            return
        rep = check_convergence(pts, est, p.threshold, self.history)
        self.estimate, self.report = est, rep

        if self.mode is Mode.FOLLOW:
            self.history = rep.history
            if rep.converged and self.try_intercept(est, pts, now):
                self.converged_at = now
                self.emit(EventKind.ESTIMATE_CONVERGED, now)
        elif self.mode is Mode.INTERCEPT:
            if rep.ratio > p.rearm_factor * p.threshold:
                self.rearmed = True
            elif self.rearmed and rep.converged:
                if self.try_intercept(est, pts, now):
                    self.rearmed = False

    def try_intercept(self, est: LemniscateEstimate, pts: np.ndarray, now: float) -> bool:
        p = self.cfg.pipeline
        recent_L = est.pose.apply_inverse(pts[-p.direction_window :])
        try:
            direction = identify_direction(recent_L, est.a, est.shift_x, p.min_votes, p.min_area_frac)
        except UndecidedDirectionError:
            return False
        self.intercept = intercept_pose(est, direction)
        self.frozen = est
        self.frozen_report = self.report
        return True

    # -- control ------------------------------------------------------
    def reference(self, now: float) -> Pose:
        p = self.cfg.pipeline
        arena = self.cfg.arena
        f = self.follower
        if self.mode is Mode.TAKEOFF:
            return Pose((f.position[0], f.position[1], p.search_altitude), f.yaw)
        if self.mode is Mode.SEARCH and self.vantage is not None:
            delta = self.vantage - f.position
            if float(np.linalg.norm(delta)) > p.waypoint_tol:
                return Pose(self.vantage, math.atan2(delta[1], delta[0]))
            return Pose(self.vantage, normalize_angle(f.yaw + p.spin_rate * self.dt))
        if self.mode is Mode.SEARCH:
            wp = self.waypoints[self.wp_index]
            delta = wp.position - f.position
            if float(np.linalg.norm(delta)) <= p.waypoint_tol:
                self.emit(EventKind.WAYPOINT_REACHED, now)
                self.wp_index = (self.wp_index + 1) % len(self.waypoints)
                wp = self.waypoints[self.wp_index]
                delta = wp.position - f.position
            yaw = math.atan2(delta[1], delta[0]) if np.hypot(delta[0], delta[1]) > 1e-6 else f.yaw
            return Pose(wp.position, yaw)
        if self.mode is Mode.FOLLOW and self.tracker.track is not None:
            target_F = f.transform().apply_inverse(self.tracker.track.position)
            ref = pbvs_step(f, target_F, p.servo)
            z = min(max(ref.position[2], arena.min_altitude), arena.max_altitude)
            return Pose((ref.position[0], ref.position[1], z), ref.yaw)
        if self.mode is Mode.INTERCEPT and self.intercept is not None:
            return Pose(self.intercept.position_G, self.intercept.yaw_G)
        return f

    def arrived(self) -> bool:
        ip = self.intercept
        p = self.cfg.pipeline
        return (
            float(np.linalg.norm(self.follower.position - ip.position_G)) <= p.arrival_tol
            and abs(normalize_angle(self.follower.yaw - ip.yaw_G)) <= p.arrival_yaw_tol
        )

    def write_trace(self, now: float, truth: np.ndarray) -> None:
        track = self.tracker.track
        rec = {
            "t": round(now, 6),
            "mode": self.mode.value,
            "follower": [*map(float, self.follower.position), self.follower.yaw],
            "target": [float(c) for c in truth],
            "estimate": None if track is None else [float(c) for c in track.position],
        }
        self.trace.write(json.dumps(rec) + "\n")

    # -- main loop ----------------------------------------------------
    def run(self) -> MissionResult:
        p = self.cfg.pipeline
        max_ticks = int(math.ceil(p.max_duration / self.dt))
        next_frame = self.frame_period
        self.emit(EventKind.MISSION_START, 0.0)
        now = 0.0
        for tick in range(1, max_ticks + 1):
            now = tick * self.dt
            truth = self.path.position(now)
            self.tracker.advance(now)

            if self.mode is Mode.TAKEOFF and now - self.takeoff_started >= p.takeoff_duration:
                self.emit(EventKind.TAKEOFF_COMPLETE, now)
            if now + 1e-9 >= next_frame:
                next_frame += self.frame_period
                if self.mode in (Mode.SEARCH, Mode.FOLLOW, Mode.INTERCEPT):
                    self.frame(now, truth)

            self.follower = step_interceptor(self.follower, self.reference(now), self.cfg.interceptor, self.dt)
            if self.trace is not None:
                self.write_trace(now, truth)

            if self.mode is Mode.INTERCEPT:
                if self.arrived():
                    self.result.arrived = True
                    break
                if now - self.intercept_started >= p.intercept_timeout:
                    break
            elif self.first_detection is not None:
                if self.path.loops(now - self.first_detection) > p.max_loops:
                    break
        return self.finish(now)

    def finish(self, now: float) -> MissionResult:
        r = self.result
        r.duration = now
        r.n_observations = len(self.obs_points)
        r.dH_history = list(self.history)
        true_a = self.target_cfg.a
        if self.converged_at is not None:
            r.converged = self.path.loops(self.converged_at - self.first_detection) <= self.cfg.pipeline.max_loops
            r.loops_used = self.path.loops(self.converged_at - self.first_detection)
        est = self.frozen if self.frozen is not None else self.estimate
        rep = self.frozen_report if self.frozen is not None else self.report
        if est is not None:
            r.a_estimate = est.a
            r.focal_error = abs(est.a - true_a)
        if rep is not None:
            r.final_dH = rep.d_H
            r.final_ratio = rep.ratio
        if self.intercept is not None:
            r.intercept = self.intercept
            r.intercept_error = self.path.distance_to_path(self.intercept.position_G)
        r.success = r.converged and r.arrived
        return r


def run_mission(cfg: MissionConfig, seed: int, trace: IO[str] | None = None) -> MissionResult:
    """Run one mission; identical (cfg, seed) give identical results."""
    try:
        mission = _Mission(cfg, seed, trace)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return mission.run()
