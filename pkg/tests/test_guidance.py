import itertools
import math

import numpy as np
import pytest

from figeight.geometry import InvalidInputError, Pose
from figeight.guidance import (
    ArenaConfig,
    EventKind,
    Mode,
    MissionEvent,
    ServoConfig,
    pbvs_step,
    search_waypoints,
    step_mode,
    yaw_step,
)
from figeight.sim.config import InterceptorConfig
from figeight.sim.mission import step_interceptor


class TestServo:
    def test_equilibrium(self):
        cfg = ServoConfig(x_offset=-7.0, z_offset=1.0)
        f = Pose((1, 2, 3), 0.0)
        ref = pbvs_step(f, (7.0, 0.0, -1.0), cfg)
        assert np.array_equal(ref.position, f.position) and ref.yaw == 0.0

    def test_standoff_example(self):
        ref = pbvs_step(Pose((0, 0, 0), 0.0), (10, 0, 2), ServoConfig(x_offset=-7.0))
        assert ref.position == pytest.approx([3, 0, 2])

    def test_rotated_frame(self):
        cfg = ServoConfig(x_offset=0.0, yaw_control=False)
        ref = pbvs_step(Pose((0, 0, 0), math.pi / 2), (1, 0, 0), cfg)
        assert ref.position == pytest.approx([0, 1, 0], abs=1e-12)

    def test_lateral_goes_to_yaw(self):
        ref = pbvs_step(Pose((0, 0, 0), 0.0), (7, 7, 0), ServoConfig())
        assert ref.position == pytest.approx([0, 0, 0])
        assert ref.yaw == pytest.approx(math.pi / 4)

    def test_inactive_axis_holds(self):
        cfg = ServoConfig(x_offset=-7.0, active_axes=(True, True, False))
        ref = pbvs_step(Pose((0, 0, 5), 0.0), (10, 0, 4), cfg)
        assert ref.position == pytest.approx([3, 0, 5])

    def test_fixed_point_property(self, rng):
        for i in range(1000):
            yaw_ctl = i % 2 == 1
            offs = rng.uniform(-10, 10, 3)
            if yaw_ctl:
                # lateral error is handled by turning, so only a dead-ahead target is at rest
                offs[0], offs[1] = -rng.uniform(1, 10), 0.0
            axes = tuple(bool(b) for b in rng.integers(0, 2, 3))
            if not any(axes):
                axes = (True, False, False)
            cfg = ServoConfig(*offs, active_axes=axes, yaw_control=yaw_ctl)
            f = Pose(rng.uniform(-50, 50, 3), rng.uniform(-math.pi, math.pi))
            ref = pbvs_step(f, -cfg.offsets, cfg)
            assert np.allclose(ref.position, f.position, atol=1e-12)
            assert ref.yaw == pytest.approx(f.yaw)

    def test_invalid(self):
        with pytest.raises(InvalidInputError):
            pbvs_step(Pose((0, 0, 0)), (np.nan, 0, 0))
        with pytest.raises(ValueError):
            ServoConfig(active_axes=(False, False, False))


class TestYaw:
    def test_examples(self):
        assert yaw_step(0.3, (5, 0, 0)) == pytest.approx(0.3)
        assert yaw_step(0.0, (1, 1, 0)) == pytest.approx(math.pi / 4)
        with pytest.raises(InvalidInputError):
            yaw_step(0.0, (0, 0, 4))

    def test_range(self, rng):
        for _ in range(1000):
            y = yaw_step(rng.uniform(-10, 10), rng.normal(size=3))
            assert -math.pi < y <= math.pi

    def test_closed_loop_converges(self):
        target = np.array([3.0, 8.0, 0.0])
        f = Pose((0, 0, 0), -2.5)
        cfg = InterceptorConfig()
        for _ in range(500):
            t_F = f.transform().apply_inverse(target)
            f = step_interceptor(f, Pose(f.position, yaw_step(f.yaw, t_F)), cfg, 0.02)
        t_F = f.transform().apply_inverse(target)
        assert abs(math.atan2(t_F[1], t_F[0])) < 1e-9


ALL_EDGES = {
    (Mode.IDLE, EventKind.MISSION_START): Mode.TAKEOFF,
    (Mode.TAKEOFF, EventKind.TAKEOFF_COMPLETE): Mode.SEARCH,
    (Mode.SEARCH, EventKind.TARGET_DETECTED): Mode.FOLLOW,
    (Mode.FOLLOW, EventKind.TARGET_LOST): Mode.SEARCH,
    (Mode.FOLLOW, EventKind.ESTIMATE_CONVERGED): Mode.INTERCEPT,
}


class TestModes:
    def test_examples(self):
        assert step_mode(Mode.SEARCH, MissionEvent(EventKind.TARGET_DETECTED, 1.0)) is Mode.FOLLOW
        assert step_mode(Mode.FOLLOW, MissionEvent(EventKind.TARGET_LOST, 2.0)) is Mode.SEARCH
        assert step_mode(Mode.INTERCEPT, MissionEvent(EventKind.TARGET_LOST, 3.0)) is Mode.INTERCEPT

    def test_exhaustive_table(self):
        for mode, kind in itertools.product(Mode, EventKind):
            expected = ALL_EDGES.get((mode, kind), mode)
            assert step_mode(mode, MissionEvent(kind, 0.0)) is expected, (mode, kind)

    def test_intercept_is_terminal(self):
        for kind in EventKind:
            assert step_mode(Mode.INTERCEPT, MissionEvent(kind, 0.0)) is Mode.INTERCEPT


class TestSearch:
    def test_arena_example(self):
        wps = search_waypoints(ArenaConfig(100, 60), 20.0)
        legs = len(wps) // 2
        assert legs >= 4
        ys = sorted({round(float(w.position[1]), 9) for w in wps})
        assert max(np.diff(ys)) <= 20.0 + 1e-9

    def test_wide_spacing_two_legs(self):
        assert len(search_waypoints(ArenaConfig(100, 60), 80.0)) == 4

    def test_inside_arena(self, rng):
        for _ in range(100):
            arena = ArenaConfig(rng.uniform(10, 300), rng.uniform(10, 300))
            wps = search_waypoints(arena, rng.uniform(1, 100), altitude=12.0)
            assert all(arena.contains(w.position) and w.position[2] == 12.0 for w in wps)

    def test_deterministic(self):
        a = search_waypoints(ArenaConfig(), 15.0)
        b = search_waypoints(ArenaConfig(), 15.0)
        assert all(np.array_equal(p.position, q.position) and p.yaw == q.yaw for p, q in zip(a, b))

    def test_bad_spacing(self):
        with pytest.raises(ValueError):
            search_waypoints(ArenaConfig(), 0.0)


def test_closed_loop_standoff():
    target = np.array([25.0, 12.0, 11.0])
    f = Pose((0, 0, 10), 0.0)
    cfg, servo = InterceptorConfig(), ServoConfig()
    for _ in range(int(15 / 0.02)):
        t_F = f.transform().apply_inverse(target)
        f = step_interceptor(f, pbvs_step(f, t_F, servo), cfg, 0.02)
    assert np.linalg.norm(target - f.position) == pytest.approx(7.0, abs=0.1)
