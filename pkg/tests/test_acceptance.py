"""End-to-end acceptance checks, one test per criterion.

Each test records a ``PASS``/``FAIL`` line (shown in the terminal summary)
before asserting, so a failing criterion still reports its measured value.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, random_rotation
from figeight.cli import main
from figeight.depth_filter import DepthPatch, estimate_depth, find_peaks
from figeight.experiment import ExperimentSpec, run_sweep
from figeight.geometry import CameraIntrinsics, Pose, RigidTransform, backproject, project
from figeight.guidance import ServoConfig, pbvs_step
from figeight.interceptor import hausdorff_bidirectional
from figeight.lemniscate import estimate, sample_lemniscate
from figeight.sim.mission import run_mission
from figeight.tracker import covariance_is_spd, init_track, predict, update

from test_depth_filter import brute_peaks
from test_interceptor import brute_directed

pytestmark = pytest.mark.slow

SPEEDS = (2.0, 3.0, 4.0, 5.0, 6.0)
TRIALS = 15


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[n] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="session")
def speed_sweep():
    spec = ExperimentSpec("target.speed", SPEEDS, trials=TRIALS, seed_base=0, base=({"target": {"a": 20.0}},))
    start = time.perf_counter()
    results, summary, rows = run_sweep(spec)
    elapsed = time.perf_counter() - start
    by_speed = {v: results[i * TRIALS:(i + 1) * TRIALS] for i, v in enumerate(SPEEDS)}
    return spec, by_speed, elapsed


def errors(results):
    # a trial that never produced an intercept counts as an infinite error
    return np.array([r.intercept_error if not math.isnan(r.intercept_error) else np.inf for r in results])


def rises_then_falls(history, a):
    """Some point stands clear of both the earlier minimum and the final value."""
    h = np.array([d for _, d in history])
    if h.size < 3:
        return False
    margin = 0.05 * a
    return any(h[j] - h[:j].min() >= margin and h[j] - h[-1] >= margin for j in range(1, h.size - 1))


def test_1_noise_free_identifiability():
    start = time.perf_counter()
    worst_a = worst_h = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        T = RigidTransform(random_rotation(rng), rng.uniform(-50, 50, 3))
        truth = T.apply(sample_lemniscate(20.0, 0.0, 500))
        est = estimate(truth, m=1)
        worst_a = max(worst_a, abs(est.a - 20.0))
        worst_h = max(worst_h, hausdorff_bidirectional(est.samples_G, T.apply(sample_lemniscate(20.0, 0.0, 100))))
    elapsed = time.perf_counter() - start
    ok = worst_a < 1e-6 and worst_h < 1e-6 and elapsed < 5.0
    record(1, ok, f"max |a err| {worst_a:.2e} m, max d_H {worst_h:.2e} m, {elapsed:.2f} s")


def test_2_speed_sweep_convergence(speed_sweep):
    _, by_speed, elapsed = speed_sweep
    all_r = [r for rs in by_speed.values() for r in rs]
    conv = sum(r.converged for r in all_r)
    rate = conv / len(all_r)
    per = ", ".join(f"{v:g}:{sum(r.converged for r in rs)}/{len(rs)}" for v, rs in by_speed.items())
    ok = len(all_r) == 75 and rate >= 0.90 and elapsed < 600
    record(2, ok, f"converged within 3 loops {conv}/{len(all_r)} ({rate:.0%}) [{per}], sweep {elapsed:.0f} s")


def test_3_slow_regime_accuracy(speed_sweep):
    _, by_speed, _ = speed_sweep
    med = {v: float(np.median(errors(rs))) for v, rs in by_speed.items() if v <= 4.0}
    ok = all(m < 0.5 for m in med.values())
    record(3, ok, "median intercept error " + ", ".join(f"{v:g} m/s {m:.3f} m" for v, m in med.items()))


def test_4_fast_regime_accuracy(speed_sweep):
    _, by_speed, _ = speed_sweep
    frac5 = float(np.mean(errors(by_speed[5.0]) < 1.25))
    frac6 = float(np.mean(errors(by_speed[6.0]) < 1.25))
    ok = frac5 >= 0.75 and frac6 >= 0.50
    record(4, ok, f"under 1.25 m: 5 m/s {frac5:.0%}, 6 m/s {frac6:.0%}")


def test_5_hausdorff_trend(speed_sweep):
    spec, by_speed, _ = speed_sweep
    conv = [r for r in by_speed[5.0] if r.converged]
    threshold = spec.config_for(5.0).pipeline.threshold
    bad = [r.seed for r in conv if not (rises_then_falls(r.dH_history, r.target.a) and r.final_ratio < threshold)]
    ok = len(conv) > 0 and not bad
    record(5, ok, f"{len(conv) - len(bad)}/{len(conv)} converged 5 m/s trials rise then fall below threshold"
           + (f"; off-trend seeds {bad}" if bad else ""))


def test_6_field_analog():
    spec = ExperimentSpec("target.a", (10.0,), trials=12, seed_base=0, base=({"target": {"speed": 1.0}},))
    results, _, _ = run_sweep(spec)
    focal = float(np.mean([r.focal_error for r in results]))
    inter = float(np.mean(errors(results)))
    ok = focal <= 0.6 and inter <= 1.0
    record(6, ok, f"mean |a - 10| {focal:.3f} m, mean intercept error {inter:.3f} m, "
           f"{sum(r.success for r in results)}/12 succeeded")


def test_7_depth_filter_oracle():
    rng = np.random.default_rng(7)
    width = 13.0 / 40
    hits = 0
    for _ in range(1000):
        truth = rng.uniform(2.0 + width, 15.0 - width)
        n = int(rng.integers(20, 400))
        n_in = int(math.ceil(n * rng.uniform(0.5, 1.0)))
        inl = rng.uniform(truth - width / 2, truth + width / 2, n_in)
        out = rng.uniform(2.0, 15.0, n - n_in)
        hits += abs(estimate_depth(DepthPatch(np.r_[inl, out])) - truth) <= width
    mismatches = 0
    for length in range(1, 9):
        for counts in np.ndindex(*(4,) * length):
            mismatches += find_peaks(list(counts)) != brute_peaks(counts)
    ok = hits >= 950 and mismatches == 0
    record(7, ok, f"{hits / 10:.1f}% within one bin, {mismatches} peak-scan mismatches")


def test_8_metric_and_equivariance():
    rng = np.random.default_rng(8)
    haus_bad = 0
    for _ in range(1000):
        X = rng.normal(0, 5, (int(rng.integers(1, 21)), 3))
        Y = rng.normal(0, 5, (int(rng.integers(1, 31)), 3))
        ref = max(brute_directed(X, Y), brute_directed(Y, X))
        haus_bad += hausdorff_bidirectional(X, Y) != pytest.approx(ref, rel=1e-15, abs=0)

    pts = sample_lemniscate(15.0, 0.0, 300) + rng.normal(0, 0.3, (300, 3))
    a0 = estimate(pts).a
    a_dev = max(abs(estimate(RigidTransform(random_rotation(rng), rng.uniform(-50, 50, 3)).apply(pts)).a - a0)
                for _ in range(200))

    intr = CameraIntrinsics()
    rt = 0.0
    for _ in range(1000):
        u, v, d = rng.uniform(0, intr.width), rng.uniform(0, intr.height), rng.uniform(0.5, 50)
        pu, pv, pd = project(backproject(u, v, d, intr), intr)
        rt = max(rt, abs(pu - u), abs(pv - v), abs(pd - d))

    trk = init_track(np.zeros(3), 0.0)
    spd = True
    for i in range(10_000):
        trk = predict(trk, 0.02)
        if i % 7 == 0:
            trk = update(trk, rng.normal(0, 0.3, 3))
        spd = spd and covariance_is_spd(trk.covariance)

    fp_dev = 0.0
    for _ in range(1000):
        cfg = ServoConfig(-rng.uniform(1, 10), 0.0, rng.uniform(-5, 5))
        f = Pose(rng.uniform(-50, 50, 3), rng.uniform(-math.pi, math.pi))
        ref = pbvs_step(f, -cfg.offsets, cfg)
        fp_dev = max(fp_dev, float(np.max(np.abs(ref.position - f.position))), abs(ref.yaw - f.yaw))

    ok = haus_bad == 0 and a_dev < 1e-9 and rt < 1e-9 and spd and fp_dev == 0.0
    record(8, ok, f"Hausdorff mismatches {haus_bad}, a drift {a_dev:.1e} m, round trip {rt:.1e}, "
           f"SPD {'held' if spd else 'broken'}, fixed-point drift {fp_dev:.1e}")


def test_9_determinism(tmp_path, speed_sweep):
    spec_file = tmp_path / "spec.yaml"
    spec_file.write_text("sweep: {key: target.speed, values: [3.0, 6.0]}\ntrials: 2\nseed_base: 60\n")
    outs = []
    for name, jobs in (("first", "1"), ("second", "2")):
        assert main(["sweep", str(spec_file), "--out", str(tmp_path / name), "--jobs", jobs]) == 0
        outs.append([(tmp_path / name / f).read_bytes() for f in ("trials.csv", "summary.csv")])
    csv_same = outs[0] == outs[1]

    spec, by_speed, _ = speed_sweep
    original = max(by_speed[6.0], key=lambda r: len(r.mode_log))
    replay = run_mission(spec.config_for(6.0), original.seed)
    log_same = replay.mode_log == original.mode_log
    ok = csv_same and log_same
    record(9, ok, f"sweep CSVs {'identical' if csv_same else 'differ'}, "
           f"seed {original.seed} mode log ({len(original.mode_log)} changes) {'reproduced' if log_same else 'differs'}")


def test_follow_interruptions_at_top_speed(speed_sweep):
    _, by_speed, _ = speed_sweep
    cycles = [r.seed for r in by_speed[6.0] if "FOLLOW,SEARCH,FOLLOW" in ",".join(r.mode_sequence())]
    assert cycles
