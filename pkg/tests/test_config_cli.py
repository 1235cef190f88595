import csv
import json

import numpy as np
import pytest
import yaml

from figeight.cli import main, read_point_file
from figeight.config import dump_config, load_mission_config, parse_override, to_dict
from figeight.experiment import (
    SUMMARY_COLUMNS,
    TRIAL_COLUMNS,
    ExperimentSpec,
    box_stats,
    fmt,
    replay_patches,
    run_sweep,
    write_sweep,
)
from figeight.guidance import EventKind, Mode, MissionEvent, step_mode
from figeight.lemniscate import sample_lemniscate
from figeight.sim.config import ConfigError, MissionConfig


def write(path, text):
    path.write_text(text)
    return str(path)


class TestConfig:
    def test_defaults_round_trip(self, tmp_path):
        cfg = load_mission_config([write(tmp_path / "c.yaml", dump_config(MissionConfig()))])
        assert to_dict(cfg) == to_dict(MissionConfig())

    def test_layers_and_overrides(self, tmp_path):
        a = write(tmp_path / "a.yaml", "target: {speed: 3.0, a: 15}\n")
        b = write(tmp_path / "b.yaml", "target: {speed: 4.0}\n")
        cfg = load_mission_config([a, b], ["pipeline.tracker.kalman.sigma_acc=2.5", "sensor.rate=10"])
        assert cfg.target.speed == 4.0 and cfg.target.a == 15.0
        assert cfg.pipeline.tracker.kalman.sigma_acc == 2.5
        assert cfg.sensor.rate == 10.0 and isinstance(cfg.sensor.rate, float)

    def test_parse_override(self):
        assert parse_override("a.b=3") == {"a": {"b": 3}}
        assert parse_override("x=[1, 2]") == {"x": [1, 2]}
        with pytest.raises(ConfigError):
            parse_override("novalue")

    def test_rejects_unknown_and_mistyped(self, tmp_path):
        with pytest.raises(ConfigError, match="spead"):
            load_mission_config([], ["target.spead=3"])
        with pytest.raises(ConfigError):
            load_mission_config([], ["target.speed=fast"])
        with pytest.raises(ConfigError):
            load_mission_config([], ["target.center=[1, 2]"])
        with pytest.raises(ConfigError):
            load_mission_config([write(tmp_path / "l.yaml", "- 1\n")])


class TestExperiment:
    def test_spec_validation(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentSpec("target.speed", ())
        with pytest.raises(ConfigError):
            ExperimentSpec("target.speed", (1.0,), trials=0)
        with pytest.raises(ConfigError):
            ExperimentSpec.from_yaml(write(tmp_path / "s.yaml", "sweep: {key: target.speed}\n"))

    def test_seeds_are_index_based(self):
        spec = ExperimentSpec("target.speed", (2.0, 3.0), trials=3, seed_base=100)
        assert [s for _, _, s in spec.jobs()] == list(range(100, 106))
        assert [v for _, v, _ in spec.jobs()] == [2.0] * 3 + [3.0] * 3

    def test_fmt(self):
        assert fmt(1 / 3) == "0.333333333"
        assert fmt(True) == "1" and fmt(7) == "7" and fmt(float("nan")) == "nan"

    def test_box_stats_against_brute_force(self, rng):
        for n in range(1, 40):
            x = rng.normal(size=n)
            if n > 5:
                x[0] = 40.0
            s = box_stats(x.tolist() + [float("nan")])
            srt = np.sort(x)

            def q(p):
                h = (n - 1) * p
                lo = int(np.floor(h))
                hi = min(lo + 1, n - 1)
                return srt[lo] + (h - lo) * (srt[hi] - srt[lo])

            assert s["median"] == pytest.approx(q(0.5))
            assert s["q25"] == pytest.approx(q(0.25)) and s["q75"] == pytest.approx(q(0.75))
            assert s["q25"] <= s["median"] <= s["q75"]
            iqr = q(0.75) - q(0.25)
            fence = [v for v in srt if q(0.25) - 1.5 * iqr <= v <= q(0.75) + 1.5 * iqr]
            assert s["whisker_min"] == min(fence) and s["whisker_max"] == max(fence)
            assert len(s["outliers"]) + len(fence) == n

    def test_single_trial_summary(self):
        spec = ExperimentSpec("target.speed", (3.0,), trials=1, seed_base=5)
        results, summary, rows = run_sweep(spec)
        assert len(rows) == 1 and len(summary) == 1
        r, s = results[0], summary[0]
        assert s.n_trials == 1
        assert s.success_rate == float(r.success)
        for stat in ("median", "q25", "q75", "whisker_min", "whisker_max"):
            assert s.intercept_error[stat] == pytest.approx(r.intercept_error, nan_ok=True)
            assert s.focal_error[stat] == pytest.approx(r.focal_error, nan_ok=True)

    def test_replay(self):
        lines = [
            "# header",
            json.dumps({"samples": [7.0] * 30, "truth": 7.0}),
            "{not json",
            "",
            json.dumps({"samples": [3.0, 3.0, 12.0], "truth": 3.0}),
            json.dumps({"samples": [40.0]}),
            json.dumps({"samples": [5.0, 5.0], "truth": "five"}),
        ]
        recs = replay_patches(lines)
        assert [r.line for r in recs] == [2, 3, 5, 6, 7]
        assert recs[0].error == pytest.approx(0.0)
        assert "malformed" in recs[1].message
        assert recs[2].error == pytest.approx(0.0)
        assert "no depth" in recs[3].message
        assert "malformed" in recs[4].message

    def test_replay_inlier_property(self, rng):
        width = 13.0 / 40
        lines = []
        for _ in range(1000):
            d = rng.uniform(2.5, 14.5)
            s = np.r_[rng.uniform(d - width, d + width, 100), rng.uniform(2.0, 15.0, 100)]
            lines.append(json.dumps({"samples": np.clip(s, 2, 15).tolist(), "truth": d}))
        recs = replay_patches(lines)
        assert np.mean([r.error <= width for r in recs]) >= 0.95


@pytest.fixture(scope="module")
def sweep_dirs(tmp_path_factory):
    base = tmp_path_factory.mktemp("sweep")
    spec = write(base / "spec.yaml", "sweep: {key: target.speed, values: [2.0, 4.0]}\ntrials: 3\nseed_base: 7\n")
    out = []
    for name, jobs in (("a", "1"), ("b", "2")):
        assert main(["sweep", spec, "--out", str(base / name), "--jobs", jobs]) == 0
        out.append(base / name)
    return out


class TestCli:
    def test_sweep_byte_identical(self, sweep_dirs):
        a, b = sweep_dirs
        for name in ("trials.csv", "summary.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_sweep_schema(self, sweep_dirs):
        with open(sweep_dirs[0] / "trials.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == TRIAL_COLUMNS
        assert len(rows) == 7
        assert [r[1] for r in rows[1:]] == [str(s) for s in range(7, 13)]
        with open(sweep_dirs[0] / "summary.csv") as fh:
            summ = list(csv.DictReader(fh))
        assert list(summ[0]) == SUMMARY_COLUMNS and len(summ) == 2

    def test_summary_matches_trial_csv(self, sweep_dirs):
        with open(sweep_dirs[0] / "trials.csv") as fh:
            trials = list(csv.DictReader(fh))
        with open(sweep_dirs[0] / "summary.csv") as fh:
            summ = list(csv.DictReader(fh))
        for row in summ:
            group = [t for t in trials if t["sweep_value"] == row["sweep_value"]]
            for col in ("intercept_error_m", "focal_error_m"):
                x = np.array([float(t[col]) for t in group])
                x = x[~np.isnan(x)]
                for p, stat in ((50, "median"), (25, "q25"), (75, "q75")):
                    expect = float(np.percentile(x, p)) if x.size else float("nan")
                    assert float(row[f"{col}_{stat}"]) == pytest.approx(expect, rel=1e-8, nan_ok=True)
            succ = np.mean([t["success"] == "1" for t in group])
            assert float(row["success_rate"]) == pytest.approx(succ)

    def test_write_sweep_creates_dir(self, tmp_path):
        t, s = write_sweep(tmp_path / "deep" / "dir", [], [])
        assert t.read_text().strip() == ",".join(TRIAL_COLUMNS)

    def test_simulate_outputs_and_mode_replay(self, tmp_path, capsys):
        out = tmp_path / "sim"
        assert main(["simulate", "--seed", "3", "--set", "target.speed=3", "--out", str(out), "--trace"]) == 0
        doc = json.loads((out / "result.json").read_text())
        assert doc["seed"] == 3 and doc["modes"][0] == "IDLE"
        assert (out / "trace.jsonl").read_text().count("\n") > 100
        with open(out / "mode_log.csv") as fh:
            log = list(csv.DictReader(fh))
        mode = Mode.IDLE
        for rec in log:
            assert rec["from"] == mode.value
            mode = step_mode(mode, MissionEvent(EventKind(rec["event"]), float(rec["time_s"])))
            assert rec["to"] == mode.value
        assert ["IDLE"] + [r["to"] for r in log] == doc["modes"]

    def test_print_config(self, tmp_path, capsys):
        assert main(["simulate", "--print-config", "--set", "target.a=12"]) == 0
        doc = yaml.safe_load(capsys.readouterr().out)
        assert doc["target"]["a"] == 12.0
        assert set(doc) == {"arena", "target", "sensor", "interceptor", "pipeline"}

    def test_exit_codes(self, tmp_path, capsys):
        assert main(["simulate", "--set", "target.nope=1"]) == 1
        assert main(["simulate", "--set", "target.speed=-2"]) == 1
        assert main(["simulate", "--trace"]) == 1
        assert main(["sweep", str(tmp_path / "missing.yaml")]) == 1
        assert main(["fit", str(tmp_path / "missing.txt")]) == 2
        assert main(["depth-replay", str(tmp_path / "missing.jsonl")]) == 2
        bad = write(tmp_path / "bad.txt", "0 1 2\n")
        assert main(["fit", bad]) == 2
        assert "bad.txt:1" in capsys.readouterr().err

    def test_seed_must_be_u64(self):
        with pytest.raises(SystemExit):
            main(["simulate", "--seed", "-1"])

    def test_fit(self, tmp_path, capsys):
        pts = sample_lemniscate(10.0, 0.0, 200) + [3.0, -2.0, 8.0]
        lines = ["# t x y z"] + [f"{0.1 * i:.1f} {x!r} {y!r} {z!r}" for i, (x, y, z) in enumerate(pts.tolist())]
        path = write(tmp_path / "pts.txt", "\n".join(lines) + "\n")
        obs = read_point_file(path)
        assert len(obs) == 200
        assert main(["fit", path, "--set", "pipeline.m=1", "--out", str(tmp_path / "fit")]) == 0
        doc = json.loads((tmp_path / "fit" / "fit.json").read_text())
        assert doc["a"] == pytest.approx(10.0, abs=1e-9)
        assert doc["converged"] and doc["direction"] == "CW"
        assert doc["pose"]["translation"] == pytest.approx([3.0, -2.0, 8.0], abs=1e-9)

    def test_depth_replay(self, tmp_path, capsys):
        path = write(tmp_path / "p.jsonl", '{"samples": [6, 6, 6], "truth": 6}\nbroken\n')
        assert main(["depth-replay", path]) == 0
        captured = capsys.readouterr()
        assert "line 2" in captured.err
        summary = json.loads(captured.out.strip().splitlines()[-1])
        assert summary == {"records": 2, "failed": 1, "mean_abs_error_m": 0.0, "within_one_bin": 1.0}
