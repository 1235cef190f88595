"""Synthetic detector and stereo depth standing in for the CNN + ZED pair."""

from __future__ import annotations

import numpy as np

from ..depth_filter import DepthPatch
from ..geometry import RigidTransform, project
from ..tracker import BBox, Detection
from .config import SensorConfig


def _patch_size(side: float, cfg: SensorConfig) -> int:
    n = int(round(side * side * cfg.fill_fraction))
    return int(min(max(n, cfg.min_samples), cfg.max_samples))


def _depth_samples(depth: float, n: int, cfg: SensorConfig, rng: np.random.Generator) -> tuple[np.ndarray, bool]:
    """Inliers around ``depth`` mixed with uniform clutter over the range.

    Returns the samples and whether the true depth is outside the
    measurable range (then only clutter survives, as the stereo matcher
    yields no valid depth on the target itself).
    """
    n_out = int(rng.binomial(n, cfg.outlier_fraction)) if cfg.outlier_fraction > 0 else 0
    outliers = rng.uniform(cfg.range_min, cfg.range_max, n_out)
    if not cfg.range_min <= depth <= cfg.range_max:
        return outliers, True
    inliers = depth + rng.normal(0.0, cfg.depth_sigma, n - n_out) if cfg.depth_sigma > 0 else np.full(n - n_out, depth)
    return np.concatenate([inliers, outliers]), False


def sense(
    target_G: np.ndarray,
    t_gc: RigidTransform,
    cfg: SensorConfig,
    rng: np.random.Generator,
    timestamp: float = 0.0,
    roi: BBox | None = None,
) -> Detection | None:
    """Detection of the true target, or ``None`` when it is not seen."""
    p_c = t_gc.apply_inverse(target_G)
    proj = project(p_c, cfg.intrinsics)
    if proj is None:
        return None
    u, v, depth = proj
    intr = cfg.intrinsics
    if not intr.contains(u, v) or depth > cfg.max_range:
        return None
    p_det = cfg.detection_probability
    if roi is not None:
        if not roi.contains(u, v):
            return None  # the detector only looks inside the crop
        p_det = min(1.0, p_det + cfg.roi_bonus)
    if rng.random() >= p_det:
        return None

    side = min(max(intr.fx * cfg.target_diagonal / depth, 4.0), float(min(intr.width, intr.height)))
    if cfg.pixel_sigma > 0:
        u += rng.normal(0.0, cfg.pixel_sigma)
        v += rng.normal(0.0, cfg.pixel_sigma)
    u = min(max(u, 0.0), float(intr.width))
    v = min(max(v, 0.0), float(intr.height))
    samples, out_of_range = _depth_samples(depth, _patch_size(side, cfg), cfg, rng)
    patch = DepthPatch(samples, cfg.range_min, cfg.range_max)
    return Detection(BBox.from_center(u, v, side, side), u, v, timestamp, patch, out_of_range=out_of_range)


def false_positives(
    cfg: SensorConfig, rng: np.random.Generator, timestamp: float = 0.0, roi: BBox | None = None
) -> list[Detection]:
    """Spurious boxes with clutter-only depth, Poisson in number."""
    if cfg.false_positive_rate <= 0:
        return []
    n = int(rng.poisson(cfg.false_positive_rate))
    intr = cfg.intrinsics
    area = roi or BBox(0.0, 0.0, float(intr.width), float(intr.height))
    dets = []
    for _ in range(n):
        u = rng.uniform(area.u, area.u + area.w)
        v = rng.uniform(area.v, area.v + area.h)
        side = rng.uniform(10.0, 120.0)
        n_samples = _patch_size(side, cfg)
        samples = rng.uniform(cfg.range_min, cfg.range_max, n_samples)
        patch = DepthPatch(samples, cfg.range_min, cfg.range_max)
        dets.append(Detection(BBox.from_center(u, v, side, side), u, v, timestamp, patch, false_positive=True))
    return dets


def sense_frame(
    target_G: np.ndarray,
    t_gc: RigidTransform,
    cfg: SensorConfig,
    rng: np.random.Generator,
    timestamp: float = 0.0,
    roi: BBox | None = None,
) -> list[Detection]:
    det = sense(target_G, t_gc, cfg, rng, timestamp, roi)
    fps = false_positives(cfg, rng, timestamp, roi)
    return ([det] if det is not None else []) + fps
