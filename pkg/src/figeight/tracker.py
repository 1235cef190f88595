"""Single-target tracking in the global frame.

A constant-velocity Kalman filter runs at the control rate and is corrected
whenever a detection is associated.  Detections are associated by IoU with
the box predicted from the filter, their depth is extracted with the
histogram filter and the resulting pixel+depth is lifted into G.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .depth_filter import (
    DEFAULT_AREA_THRESHOLD,
    DEFAULT_BINS,
    DepthPatch,
    NoDataError,
    estimate_depth,
    out_of_range_depth,
)
from .geometry import CameraIntrinsics, RigidTransform, backproject, camera_to_global, project

log = logging.getLogger(__name__)

_I6 = np.eye(6)
_H = np.hstack([np.eye(3), np.zeros((3, 3))])


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box; (u, v) is the top-left corner in pixels."""

    u: float
    v: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box must have positive size, got {self.w}x{self.h}")

    @classmethod
    def from_center(cls, cu: float, cv: float, w: float, h: float) -> BBox:
        return cls(cu - w / 2.0, cv - h / 2.0, w, h)

    @property
    def center(self) -> tuple[float, float]:
        return self.u + self.w / 2.0, self.v + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    def contains(self, cu: float, cv: float) -> bool:
        return self.u <= cu <= self.u + self.w and self.v <= cv <= self.v + self.h


@dataclass(frozen=True, eq=False)
class Detection:
    bbox: BBox
    center_u: float
    center_v: float
    timestamp: float
    patch: DepthPatch
    out_of_range: bool = False
    false_positive: bool = False  # simulator bookkeeping only, never read by the tracker

    @classmethod
    def from_bbox(cls, bbox: BBox, timestamp: float, patch: DepthPatch, **kw) -> Detection:
        cu, cv = bbox.center
        return cls(bbox, cu, cv, timestamp, patch, **kw)


@dataclass(frozen=True, eq=False)
class TrackState:
    state: np.ndarray  # [x, y, z, vx, vy, vz] in G
    covariance: np.ndarray
    last_update: float
    consecutive_misses: int = 0

    @property
    def position(self) -> np.ndarray:
        return self.state[:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.state[3:]


@dataclass(frozen=True)
class KalmanConfig:
    sigma_meas: float = 0.3  # m
    sigma_acc: float = 3.0  # m/s^2, white-noise acceleration
    init_vel_std: float = 5.0  # m/s

    def measurement_cov(self) -> np.ndarray:
        return np.eye(3) * self.sigma_meas**2


def cv_matrices(dt: float, sigma_acc: float) -> tuple[np.ndarray, np.ndarray]:
    """Transition and process noise of the white-noise-acceleration CV model."""
    F = np.eye(6)
    F[0, 3] = F[1, 4] = F[2, 5] = dt
    G = np.vstack([np.eye(3) * (0.5 * dt * dt), np.eye(3) * dt])
    Q = G @ G.T * sigma_acc**2
    return F, Q


def init_track(z: np.ndarray, timestamp: float, cfg: KalmanConfig = KalmanConfig()) -> TrackState:
    state = np.concatenate([np.asarray(z, dtype=float), np.zeros(3)])
    cov = np.diag([cfg.sigma_meas**2] * 3 + [cfg.init_vel_std**2] * 3)
    return TrackState(state, cov, timestamp)


def predict(track: TrackState, dt: float, cfg: KalmanConfig = KalmanConfig()) -> TrackState:
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    F, Q = cv_matrices(dt, cfg.sigma_acc)
    P = F @ track.covariance @ F.T + Q
    P = 0.5 * (P + P.T)
    return replace(track, state=F @ track.state, covariance=P, last_update=track.last_update + dt)


def update(
    track: TrackState, z: np.ndarray, cfg: KalmanConfig = KalmanConfig(), R: np.ndarray | None = None
) -> TrackState:
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("measurement must be finite")
    R = cfg.measurement_cov() if R is None else R
    P = track.covariance
    S = _H @ P @ _H.T + R
    K = np.linalg.solve(S, _H @ P).T  # P H^T S^-1, S symmetric
    x = track.state + K @ (z - _H @ track.state)
    A = _I6 - K @ _H
    P = A @ P @ A.T + K @ R @ K.T  # Joseph form
    P = 0.5 * (P + P.T)
    return replace(track, state=x, covariance=P, consecutive_misses=0)


def innovation_distance(track: TrackState, z: np.ndarray, cfg: KalmanConfig = KalmanConfig()) -> float:
    """Squared Mahalanobis distance of ``z`` from the predicted position."""
    nu = np.asarray(z, dtype=float) - track.position
    S = track.covariance[:3, :3] + cfg.measurement_cov()
    return float(nu @ np.linalg.solve(S, nu))


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.u + a.w, b.u + b.w) - max(a.u, b.u)
    ih = min(a.v + a.h, b.v + b.h) - max(a.v, b.v)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def associate(detections: list[Detection], predicted_bbox: BBox) -> Detection | None:
    """Detection with the highest IoU against the prediction, if any overlaps."""
    best, best_iou = None, 0.0
    for det in detections:
        score = iou(det.bbox, predicted_bbox)
        if score > best_iou:
            best, best_iou = det, score
    return best


def roi(prev: BBox, factor: float, min_side: float, image: tuple[int, int]) -> BBox:
    """Expand ``prev`` about its centre, enforce ``min_side``, keep inside the image."""
    if factor < 1.0:
        raise ValueError("RoI factor must be >= 1")
    width, height = image
    w = min(max(prev.w * factor, min_side), width)
    h = min(max(prev.h * factor, min_side), height)
    cu, cv = prev.center
    u = min(max(cu - w / 2.0, 0.0), width - w)
    v = min(max(cv - h / 2.0, 0.0), height - h)
    return BBox(u, v, w, h)


@dataclass(frozen=True)
class TrackerConfig:
    kalman: KalmanConfig = KalmanConfig()
    bin_count: int = DEFAULT_BINS
    range_min: float = 2.0
    range_max: float = 15.0
    area_threshold: float = DEFAULT_AREA_THRESHOLD
    n_miss: int = 14
    n_consec: int = 3
    roi_factor: float = 2.0
    roi_min_side: float = 608.0
    # chi-square(3) gate flagging outlying measurements of a confirmed track
    # (they still update the filter); 0 disables
    gate: float = 11.34  # chi-square(3) at 99%
    # after a clamped depth, a measured depth is trusted only this close to the clamp
    reentry_margin: float = 2.0  # m
    # a clamped depth only bounds the range, so it updates with this depth spread
    fallback_depth_sigma: float = 3.0  # m


@dataclass
class CameraContext:
    """Everything needed to lift a pixel into G at one instant."""

    intrinsics: CameraIntrinsics
    t_fc: RigidTransform
    t_gf: RigidTransform

    @property
    def t_gc(self) -> RigidTransform:
        return self.t_gf @ self.t_fc


class TargetTracker:
    """Owns one track plus the RoI bookkeeping around it.

    ``advance`` is called at the control rate, ``step`` once per detector
    frame.  A new track is tentative until ``n_consec`` consecutive hits
    confirm it; a tentative track is dropped on its first miss, which keeps
    isolated false positives from being followed.  A confirmed track is
    ``lost`` after ``n_miss`` consecutive misses; the caller decides what
    to do then.  ``last_trusted`` marks a measurement fit for building a
    trajectory model (see ``_trusted``); every measurement still updates
    the filter.
    """

    def __init__(self, cfg: TrackerConfig = TrackerConfig()):
        self.cfg = cfg
        self.track: TrackState | None = None
        self.lost = False
        self.confirmed = False
        self.last_fallback = False
        self.last_outlier = False
        self.last_trusted = False
        self.consecutive_hits = 0
        self.roi_active = False
        self.roi_box: BBox | None = None
        self._last_bbox: BBox | None = None
        self._last_depth: float | None = None
        self._gate_armed = False
        self._has_prior = False
        self._prior_clamp: float | None = None  # depth of the previous update when it was clamped

    def reset(self) -> None:
        self.__init__(self.cfg)

    def advance(self, now: float) -> None:
        """Predict the track forward to ``now`` (no-op without a track)."""
        if self.track is not None and now > self.track.last_update:
            self.track = predict(self.track, now - self.track.last_update, self.cfg.kalman)

    def measure(self, det: Detection, ctx: CameraContext) -> tuple[np.ndarray | None, bool]:
        """Pixel + robust depth of ``det`` lifted into G.

        Returns ``(point, fallback)`` where ``fallback`` marks a depth taken
        from the out-of-range rule rather than from the histogram; ``point``
        is ``None`` when the patch yields no depth.
        """
        c = self.cfg
        fallback = det.out_of_range or len(det.patch) == 0
        if fallback:
            intr = ctx.intrinsics
            frac = min(1.0, det.bbox.area / float(intr.width * intr.height))
            depth = out_of_range_depth(frac, c.area_threshold, c.range_min, c.range_max)
        else:
            try:
                depth = estimate_depth(DepthPatch(det.patch.samples, c.range_min, c.range_max), c.bin_count)
            except NoDataError:
                return None, False
        p_c = backproject(det.center_u, det.center_v, depth, ctx.intrinsics)
        return camera_to_global(p_c, ctx.t_fc, ctx.t_gf), fallback

    def predicted_bbox(self, ctx: CameraContext) -> BBox | None:
        if self.track is None or self._last_bbox is None:
            return None
        p_c = ctx.t_gc.apply_inverse(self.track.position)
        proj = project(p_c, ctx.intrinsics)
        if proj is None:
            return None
        u, v, depth = proj
        scale = (self._last_depth / depth) if self._last_depth else 1.0
        w, h = self._last_bbox.w * scale, self._last_bbox.h * scale
        # grown by the RoI factor so a lagging prediction still overlaps
        g = self.cfg.roi_factor
        return BBox.from_center(u, v, max(w * g, 1.0), max(h * g, 1.0))

    def step(
        self, detections: list[Detection], now: float, ctx: CameraContext
    ) -> tuple[TrackState | None, np.ndarray | None]:
        self.advance(now)
        det = None
        if self.track is None:
            # no prior: take the largest box
            if detections:
                det = max(detections, key=lambda d: d.bbox.area)
        else:
            pred = self.predicted_bbox(ctx)
            if pred is not None:
                det = associate(detections, pred)

        z, self.last_fallback = self.measure(det, ctx) if det is not None else (None, False)
        self.last_outlier = bool(
            z is not None
            and self._gate_armed
            and not self.last_fallback
            and self.cfg.gate > 0
            and innovation_distance(self.track, z, self.cfg.kalman) > self.cfg.gate
        )
        self.last_trusted = self._trusted(z, ctx)
        if z is None:
            self._miss(det is not None)
            return self.track, None

        if self.track is None:
            self.track = init_track(z, now, self.cfg.kalman)
        else:
            self.track = update(self.track, z, self.cfg.kalman, self._measurement_cov(ctx))
        self._last_bbox = det.bbox
        self._last_depth = float(ctx.t_gc.apply_inverse(z)[2])
        self._gate_armed = self.confirmed
        self._has_prior = True
        self._prior_clamp = self._last_depth if self.last_fallback else None
        self.consecutive_hits += 1
        self.lost = False
        if self.consecutive_hits >= self.cfg.n_consec:
            self.confirmed = True
            self.roi_active = True
        if self.roi_active:
            intr = ctx.intrinsics
            self.roi_box = roi(det.bbox, self.cfg.roi_factor, self.cfg.roi_min_side, (intr.width, intr.height))
        return self.track, z

    def _measurement_cov(self, ctx: CameraContext) -> np.ndarray | None:
        """Default noise, widened along the viewing ray for a clamped depth."""
        if not self.last_fallback:
            return None
        sm = self.cfg.kalman.sigma_meas
        r_c = np.diag([sm * sm, sm * sm, self.cfg.fallback_depth_sigma**2])
        rot = ctx.t_gc.rotation
        return rot @ r_c @ rot.T

    def _trusted(self, z: np.ndarray | None, ctx: CameraContext) -> bool:
        """Whether ``z`` is a measured depth consistent with the track so far.

        The first point of a track has nothing to be checked against.  After
        a clamped depth the track may sit well off the target, so the gate
        says little; a target coming back into range must then show up near
        the clamp, which rejects clutter picked up in the meantime.
        """
        if z is None or self.last_fallback or self.last_outlier or not self._has_prior:
            return False
        if self._prior_clamp is None:
            return True
        depth = float(ctx.t_gc.apply_inverse(z)[2])
        return abs(depth - self._prior_clamp) <= self.cfg.reentry_margin

    def _miss(self, had_detection: bool) -> None:
        if had_detection:
            log.debug("associated detection produced no depth; counted as a miss")
        self.consecutive_hits = 0
        if self.track is None:
            return
        if not self.confirmed:
            self.track = None
            self._last_bbox = None
            self._last_depth = None
            self._has_prior = False
            self._prior_clamp = None
            return
        misses = self.track.consecutive_misses + 1
        self.track = replace(self.track, consecutive_misses=misses)
        if misses >= self.cfg.n_miss:
            self.lost = True
            self.roi_active = False
            self.roi_box = None

    def roi_for_frame(self, ctx: CameraContext) -> BBox | None:
        """RoI for the next frame: last box, or the filter's projection after a miss."""
        if not self.roi_active:
            return None
        if self.track is not None and self.track.consecutive_misses > 0:
            pred = self.predicted_bbox(ctx)
            if pred is not None:
                intr = ctx.intrinsics
                return roi(pred, 1.0, self.cfg.roi_min_side, (intr.width, intr.height))
        return self.roi_box


def covariance_is_spd(P: np.ndarray, sym_tol: float = 1e-9) -> bool:
    if np.max(np.abs(P - P.T)) > sym_tol:
        return False
    return bool(np.all(np.linalg.eigvalsh(P) > 0.0))


def position_error(track: TrackState, truth: np.ndarray) -> float:
    return float(math.dist(track.position, truth))
