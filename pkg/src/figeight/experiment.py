"""Seeded parameter sweeps with CSV output and boxplot-style summaries.

Trial ``i`` of a sweep uses seed ``seed_base + i`` where trials are indexed
value-major, so results depend only on the spec and never on scheduling.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .config import mission_config_from_layers, read_yaml
from .depth_filter import DepthPatch, NoDataError, estimate_depth
from .sim.config import ConfigError, MissionConfig
from .sim.mission import MissionResult, run_mission

TRIAL_COLUMNS = [
    "sweep_value",
    "seed",
    "success",
    "loops_used",
    "intercept_error_m",
    "focal_error_m",
    "final_dH_m",
    "final_ratio",
    "n_observations",
    "mission_duration_s",
]

_STATS = ["median", "q25", "q75", "whisker_min", "whisker_max", "outliers"]
SUMMARY_COLUMNS = (
    ["sweep_value", "n_trials", "success_rate", "mean_loops_used"]
    + [f"intercept_error_m_{s}" for s in _STATS]
    + [f"focal_error_m_{s}" for s in _STATS]
)


def fmt(x: Any) -> str:
    """Fixed 9-significant-digit text so reruns are byte-identical."""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, str)):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.9g}"


@dataclass(frozen=True)
class ExperimentSpec:
    """Base configuration layers plus one swept key."""

    sweep_key: str
    values: tuple[Any, ...]
    trials: int = 15
    seed_base: int = 0
    base: tuple[dict, ...] = ()  # config layers applied before the swept key

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.values:
            raise ConfigError("sweep values must be non-empty")
        if not self.sweep_key:
            raise ConfigError("sweep key must be non-empty")

    @classmethod
    def from_yaml(cls, path: str | Path, extra_layers: Sequence[dict] = ()) -> ExperimentSpec:
        data = read_yaml(path)
        unknown = sorted(set(data) - {"base", "sweep", "trials", "seed_base"})
        if unknown:
            raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
        sweep = data.get("sweep")
        if not isinstance(sweep, dict) or "key" not in sweep or "values" not in sweep:
            raise ConfigError(f"{path}: 'sweep' needs 'key' and 'values'")
        values = sweep["values"]
        if not isinstance(values, list):
            raise ConfigError(f"{path}: sweep.values must be a list")
        base = data.get("base") or {}
        if not isinstance(base, dict):
            raise ConfigError(f"{path}: 'base' must be a mapping")
        trials, seed_base = data.get("trials", 15), data.get("seed_base", 0)
        if not isinstance(trials, int) or not isinstance(seed_base, int) or seed_base < 0:
            raise ConfigError(f"{path}: trials and seed_base must be non-negative integers")
        return cls(str(sweep["key"]), tuple(values), trials, seed_base, (*extra_layers, base))

    def config_for(self, value: Any) -> MissionConfig:
        override: Any = value
        for part in reversed(self.sweep_key.split(".")):
            override = {part: override}
        return mission_config_from_layers([*self.base, override])

    def jobs(self) -> list[tuple[int, Any, int]]:
        """(trial index, sweep value, seed) in output order."""
        out = []
        for vi, value in enumerate(self.values):
            for j in range(self.trials):
                idx = vi * self.trials + j
                out.append((idx, value, self.seed_base + idx))
        return out


@dataclass
class SummaryRow:
    sweep_value: Any
    n_trials: int
    success_rate: float
    mean_loops_used: float
    intercept_error: dict[str, Any] = field(default_factory=dict)
    focal_error: dict[str, Any] = field(default_factory=dict)

    def as_csv_row(self) -> list[str]:
        row = [fmt(self.sweep_value), str(self.n_trials), fmt(self.success_rate), fmt(self.mean_loops_used)]
        for stats in (self.intercept_error, self.focal_error):
            for s in _STATS:
                v = stats[s]
                row.append(";".join(fmt(x) for x in v) if s == "outliers" else fmt(v))
        return row


def box_stats(values: Iterable[float]) -> dict[str, Any]:
    """Median, quartiles, 1.5 IQR whiskers and outliers; NaNs are ignored."""
    x = np.sort(np.asarray([v for v in values if not math.isnan(v)], dtype=float))
    if x.size == 0:
        return {"median": math.nan, "q25": math.nan, "q75": math.nan,
                "whisker_min": math.nan, "whisker_max": math.nan, "outliers": []}
    q25, med, q75 = np.percentile(x, [25.0, 50.0, 75.0])
    iqr = q75 - q25
    lo, hi = q25 - 1.5 * iqr, q75 + 1.5 * iqr
    inside = x[(x >= lo) & (x <= hi)]
    return {
        "median": float(med),
        "q25": float(q25),
        "q75": float(q75),
        "whisker_min": float(inside.min()),
        "whisker_max": float(inside.max()),
        "outliers": [float(v) for v in x[(x < lo) | (x > hi)]],
    }


def trial_row(value: Any, r: MissionResult) -> list[str]:
    return [
        fmt(value),
        str(r.seed),
        fmt(r.success),
        fmt(r.loops_used),
        fmt(r.intercept_error),
        fmt(r.focal_error),
        fmt(r.final_dH),
        fmt(r.final_ratio),
        str(r.n_observations),
        fmt(r.duration),
    ]


def summarize(rows: Sequence[list[str]], values: Sequence[Any]) -> list[SummaryRow]:
    """Per-value summary computed from the serialized trial rows."""
    out = []
    for value in values:
        key = fmt(value)
        group = [r for r in rows if r[0] == key]
        loops = [float(r[3]) for r in group if r[2] == "1"]
        out.append(
            SummaryRow(
                value,
                len(group),
                sum(r[2] == "1" for r in group) / len(group),
                float(np.mean(loops)) if loops else math.nan,
                box_stats(float(r[4]) for r in group),
                box_stats(float(r[5]) for r in group),
            )
        )
    return out


def _run_one(args: tuple[MissionConfig, int]) -> MissionResult:
    cfg, seed = args
    return run_mission(cfg, seed)


def run_sweep(spec: ExperimentSpec, jobs: int = 1) -> tuple[list[MissionResult], list[SummaryRow], list[list[str]]]:
    """Run every trial; returns results, summaries and the trial CSV rows."""
    # build and validate every config before the first mission runs
    configs = {fmt(v): spec.config_for(v) for v in spec.values}
    work = [(configs[fmt(v)], seed) for _, v, seed in spec.jobs()]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, work))  # map keeps submission order
    else:
        results = [_run_one(w) for w in work]
    rows = [trial_row(v, r) for (_, v, _), r in zip(spec.jobs(), results)]
    return results, summarize(rows, spec.values), rows


def csv_text(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_sweep(out_dir: str | Path, rows: Sequence[list[str]], summary: Sequence[SummaryRow]) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trials = out / "trials.csv"
    summ = out / "summary.csv"
    trials.write_text(csv_text(TRIAL_COLUMNS, rows))
    summ.write_text(csv_text(SUMMARY_COLUMNS, (s.as_csv_row() for s in summary)))
    return trials, summ


def write_mode_log(path: str | Path, result: MissionResult) -> None:
    rows = [[fmt(c.timestamp), c.old.value, c.new.value, c.trigger.value] for c in result.mode_log]
    Path(path).write_text(csv_text(["time_s", "from", "to", "event"], rows))


# -- depth replay -----------------------------------------------------------

@dataclass
class ReplayRecord:
    line: int
    estimate: float | None = None
    truth: float | None = None
    error: float | None = None
    message: str | None = None

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


def replay_patches(
    lines: Iterable[str], bin_count: int = 40, range_min: float = 2.0, range_max: float = 15.0
) -> list[ReplayRecord]:
    """Depth-filter each JSON record ``{"samples": [...], "truth": d?}``.

    Blank lines and ``#`` comments are skipped.  Malformed records produce a
    record carrying a message and the line number; processing continues.
    """
    out = []
    for lineno, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        try:
            rec = json.loads(text)
            if not isinstance(rec, dict) or not isinstance(rec.get("samples"), list):
                raise ValueError("record must be an object with a 'samples' list")
            samples = np.asarray(rec["samples"], dtype=float)
            if samples.ndim != 1:
                raise ValueError("'samples' must be a flat list of numbers")
            truth = rec.get("truth")
            if truth is not None and (isinstance(truth, bool) or not isinstance(truth, (int, float))):
                raise ValueError("'truth' must be a number")
        except (ValueError, TypeError) as exc:
            out.append(ReplayRecord(lineno, message=f"malformed record: {exc}"))
            continue
        try:
            depth = estimate_depth(DepthPatch(samples, range_min, range_max), bin_count)
        except NoDataError as exc:
            out.append(ReplayRecord(lineno, truth=truth, message=f"no depth: {exc}"))
            continue
        err = abs(depth - truth) if truth is not None else None
        out.append(ReplayRecord(lineno, depth, truth, err))
    return out
