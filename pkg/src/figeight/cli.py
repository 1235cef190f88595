"""Command line front end.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from .config import dump_config, load_mission_config, parse_override, read_yaml, to_dict
from .experiment import (
    ExperimentSpec,
    replay_patches,
    run_sweep,
    write_mode_log,
    write_sweep,
)
from .interceptor import UndecidedDirectionError, check_convergence, identify_direction, intercept_pose
from .lemniscate import ObservationSet, estimate
from .sim.config import ConfigError
from .sim.mission import MissionResult, run_mission

log = logging.getLogger("figeight")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", action="append", default=[], metavar="PATH",
                        help="YAML config layer; repeat to stack layers")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one key path, e.g. target.speed=5")
    common.add_argument("--out", metavar="DIR", help="directory for output files")
    common.add_argument("--print-config", action="store_true",
                        help="print the resolved configuration and exit")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="figeight", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="run one seeded mission")
    sim.add_argument("--seed", type=_u64, default=0)
    sim.add_argument("--trace", action="store_true", help="write a per-tick JSON-lines trace (needs --out)")

    sw = sub.add_parser("sweep", parents=[common], help="run an experiment spec")
    sw.add_argument("spec", help="YAML experiment spec")
    sw.add_argument("--jobs", type=int, default=1, help="missions run in parallel")

    fit = sub.add_parser("fit", parents=[common], help="fit a lemniscate to a 't x y z' point file")
    fit.add_argument("points")

    rep = sub.add_parser("depth-replay", parents=[common], help="run the depth filter over a patch file")
    rep.add_argument("patches")
    return p


def _result_summary(r: MissionResult) -> dict:
    d = {
        "seed": r.seed,
        "success": r.success,
        "converged": r.converged,
        "arrived": r.arrived,
        "loops_used": r.loops_used,
        "intercept_error_m": r.intercept_error,
        "focal_error_m": r.focal_error,
        "a_estimate_m": r.a_estimate,
        "final_dH_m": r.final_dH,
        "final_ratio": r.final_ratio,
        "n_observations": r.n_observations,
        "mission_duration_s": r.duration,
        "modes": r.mode_sequence(),
    }
    if r.intercept is not None:
        d["intercept"] = {
            "position": [float(c) for c in r.intercept.position_G],
            "yaw": r.intercept.yaw_G,
            "direction": r.intercept.direction.value,
        }
    d["target"] = to_dict(r.target)
    return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}


def cmd_simulate(args) -> int:
    cfg = load_mission_config(args.config, args.overrides)
    if args.print_config:
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    if args.trace and not args.out:
        raise ConfigError("--trace needs --out")
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    if args.trace:
        with open(out / "trace.jsonl", "w") as fh:
            result = run_mission(cfg, args.seed, fh)
    else:
        result = run_mission(cfg, args.seed)
    summary = _result_summary(result)
    text = json.dumps(summary, indent=2)
    print(text)
    if out is not None:
        (out / "result.json").write_text(text + "\n")
        write_mode_log(out / "mode_log.csv", result)
    return EXIT_OK


def cmd_sweep(args) -> int:
    layers = [read_yaml(p) for p in args.config] + [parse_override(o) for o in args.overrides]
    spec = ExperimentSpec.from_yaml(args.spec, layers)
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    if args.print_config:
        doc = {
            "sweep": {"key": spec.sweep_key, "values": list(spec.values)},
            "trials": spec.trials,
            "seed_base": spec.seed_base,
            "base": to_dict(spec.config_for(spec.values[0])),
        }
        sys.stdout.write(yaml.safe_dump(doc, sort_keys=False))
        return EXIT_OK
    # every value must resolve to a valid config before anything runs
    for v in spec.values:
        spec.config_for(v)
    _, summary, rows = run_sweep(spec, args.jobs)
    out = Path(args.out or ".")
    trials, summ = write_sweep(out, rows, summary)
    for s in summary:
        print(
            f"{spec.sweep_key}={s.sweep_value}: success {s.success_rate:.0%} "
            f"median intercept error {s.intercept_error['median']:.3f} m"
        )
    print(f"wrote {trials} and {summ}")
    return EXIT_OK


def read_point_file(path: str | Path) -> ObservationSet:
    times, pts = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            fields = text.split()
            if len(fields) != 4:
                raise ValueError(f"{path}:{lineno}: expected 't x y z', got {len(fields)} fields")
            try:
                t, x, y, z = map(float, fields)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            times.append(t)
            pts.append((x, y, z))
    return ObservationSet(np.asarray(pts, dtype=float).reshape(-1, 3), np.asarray(times, dtype=float))


def cmd_fit(args) -> int:
    cfg = load_mission_config(args.config, args.overrides)
    if args.print_config:
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    p = cfg.pipeline
    obs = read_point_file(args.points)
    est = estimate(obs, k=p.k, m=p.m or None)
    rep = check_convergence(obs.points, est, p.threshold)
    doc = {
        "n_points": int(obs.points.shape[0]),
        "a": est.a,
        "shift_x": est.shift_x,
        "pose": {
            "rotation": est.pose.rotation.tolist(),
            "translation": est.pose.translation.tolist(),
        },
        "d_H": rep.d_H,
        "ratio": rep.ratio,
        "converged": rep.converged,
        "direction": None,
        "intercept": None,
    }
    recent = est.pose.apply_inverse(obs.points[-p.direction_window :])
    try:
        direction = identify_direction(recent, est.a, est.shift_x, p.min_votes, p.min_area_frac)
    except UndecidedDirectionError as exc:
        log.warning("direction undecided: %s", exc)
    else:
        ip = intercept_pose(est, direction)
        doc["direction"] = direction.value
        doc["intercept"] = {"position": ip.position_G.tolist(), "yaw": ip.yaw_G, "t_i": ip.t_i, "t_t": ip.t_t}
    text = json.dumps(doc, indent=2)
    print(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "fit.json").write_text(text + "\n")
    return EXIT_OK


def cmd_depth_replay(args) -> int:
    cfg = load_mission_config(args.config, args.overrides)
    if args.print_config:
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    t = cfg.pipeline.tracker
    s = cfg.sensor
    with open(args.patches) as fh:
        records = replay_patches(fh, t.bin_count, s.range_min, s.range_max)
    lines = [json.dumps(r.as_dict()) for r in records]
    for r in records:
        if r.message is not None:
            print(f"line {r.line}: {r.message}", file=sys.stderr)
    errors = [r.error for r in records if r.error is not None]
    bad = sum(r.message is not None for r in records)
    summary = {"records": len(records), "failed": bad}
    if errors:
        bin_width = (s.range_max - s.range_min) / t.bin_count
        summary["mean_abs_error_m"] = float(np.mean(errors))
        summary["within_one_bin"] = float(np.mean(np.asarray(errors) <= bin_width))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "depth_report.jsonl").write_text("".join(x + "\n" for x in lines))
    else:
        for x in lines:
            print(x)
    print(json.dumps(summary))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "fit": cmd_fit,
    "depth-replay": cmd_depth_replay,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
