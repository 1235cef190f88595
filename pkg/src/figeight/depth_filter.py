"""Robust target depth from the stereo samples inside a bounding box.

Depth samples are binned into a uniform histogram over the usable sensor
range.  Local maxima are candidates; candidates with fewer samples than the
mean candidate are dropped, and the nearest survivor's mean depth is the
estimate (nothing is assumed to sit between the sensor and the target).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_RANGE = (2.0, 15.0)
DEFAULT_BINS = 40
DEFAULT_AREA_THRESHOLD = 0.25


class NoDataError(ValueError):
    """No usable depth could be extracted."""


@dataclass(frozen=True, eq=False)
class DepthPatch:
    samples: np.ndarray
    range_min: float = DEFAULT_RANGE[0]
    range_max: float = DEFAULT_RANGE[1]

    def __post_init__(self) -> None:
        s = np.asarray(self.samples, dtype=float).ravel()
        if not 0.0 < self.range_min < self.range_max:
            raise ValueError("need 0 < range_min < range_max")
        object.__setattr__(self, "samples", s[np.isfinite(s)])

    def __len__(self) -> int:
        return self.samples.size


@dataclass(frozen=True, eq=False)
class DepthHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    bin_means: np.ndarray  # nan where a bin is empty

    @property
    def bin_count(self) -> int:
        return self.counts.size

    @property
    def bin_width(self) -> float:
        return float(self.bin_edges[1] - self.bin_edges[0])


def build_histogram(patch: DepthPatch, bin_count: int = DEFAULT_BINS) -> DepthHistogram:
    if bin_count < 3:
        raise ValueError("bin_count must be at least 3")
    if len(patch) == 0:
        raise NoDataError("empty depth patch")
    s = patch.samples
    s = s[(s >= patch.range_min) & (s <= patch.range_max)]
    if s.size == 0:
        raise NoDataError("no depth samples inside the measurable range")

    edges = np.linspace(patch.range_min, patch.range_max, bin_count + 1)
    idx = np.searchsorted(edges, s, side="right") - 1
    idx = np.clip(idx, 0, bin_count - 1)  # range_max itself lands in the last bin
    counts = np.bincount(idx, minlength=bin_count)
    sums = np.bincount(idx, weights=s, minlength=bin_count)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return DepthHistogram(edges, counts, means)


def find_peaks(counts) -> list[int]:
    """Indices strictly higher than each existing neighbour.

    Edge bins only have one neighbour to beat.  Runs of equal counts are
    never peaks.
    """
    c = np.asarray(counts.counts if isinstance(counts, DepthHistogram) else counts)
    n = c.size
    if n == 0:
        return []
    if n == 1:
        return [0] if c[0] > 0 else []
    higher_left = np.ones(n, dtype=bool)
    higher_right = np.ones(n, dtype=bool)
    higher_left[1:] = c[1:] > c[:-1]
    higher_right[:-1] = c[:-1] > c[1:]
    return [int(i) for i in np.flatnonzero(higher_left & higher_right)]


def select_depth(h: DepthHistogram) -> float:
    peaks = find_peaks(h)
    if not peaks:
        raise NoDataError("depth histogram has no peak")
    peak_counts = h.counts[peaks]
    mean_count = peak_counts.mean()
    # Peaks are ascending in index, so the first survivor is the nearest.
    for i, c in zip(peaks, peak_counts):
        if c >= mean_count:
            return float(h.bin_means[i])
    raise AssertionError("unreachable: the largest peak always survives")


def out_of_range_depth(
    bbox_area_fraction: float,
    threshold: float = DEFAULT_AREA_THRESHOLD,
    range_min: float = DEFAULT_RANGE[0],
    range_max: float = DEFAULT_RANGE[1],
) -> float:
    """Fallback when the target lies outside the measurable range.

    A box covering at least ``threshold`` of the image means the target is
    too close; otherwise it is too far.
    """
    if not 0.0 <= bbox_area_fraction <= 1.0:
        raise ValueError("bbox_area_fraction must lie in [0, 1]")
    return range_min if bbox_area_fraction >= threshold else range_max


def estimate_depth(patch: DepthPatch, bin_count: int = DEFAULT_BINS) -> float:
    return select_depth(build_histogram(patch, bin_count))
