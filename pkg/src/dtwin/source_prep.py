"""Frontal source-frame selection and face-mask construction."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .core import FaceMask, FrameImage, VideoClip
from .errors import BackendFailure, DegenerateContour, InvalidContour, NoDetectableFace, NoFaceDetected

log = logging.getLogger(__name__)

DILATION_FRACTION = 0.03


@dataclass(frozen=True)
class HeadPose:
    yaw: float = 0.0
    pitch: float = 0.0
    detected: bool = True

    def __post_init__(self):
        if self.detected and not (math.isfinite(self.yaw) and math.isfinite(self.pitch)):
            raise ValueError("yaw and pitch must be finite for a detected pose")

    @classmethod
    def undetected(cls) -> "HeadPose":
        return cls(float("nan"), float("nan"), detected=False)


@dataclass(frozen=True)
class SourceSelection:
    frame_index: int
    pose_scores: tuple
    num_undetected: int


@dataclass(frozen=True, eq=False)
class FaceContour:
    points: np.ndarray
    warnings: tuple = field(default=())

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
            raise InvalidContour("a contour needs at least 3 (x, y) points")
        object.__setattr__(self, "points", pts)

    def bbox(self) -> tuple[float, float, float, float]:
        x0, y0 = self.points.min(axis=0)
        x1, y1 = self.points.max(axis=0)
        return float(x0), float(y0), float(x1), float(y1)

    def bbox_area(self) -> float:
        x0, y0, x1, y1 = self.bbox()
        return (x1 - x0) * (y1 - y0)


def estimate_pose(frame: FrameImage, detector) -> HeadPose:
    try:
        result = detector.estimate(frame.pixels)
    except Exception as exc:
        raise BackendFailure(f"pose detector failed: {exc}") from exc
    if result is None:
        return HeadPose.undetected()
    yaw, pitch = result
    return HeadPose(float(yaw), float(pitch), True)


def pose_score(pose: HeadPose) -> Optional[float]:
    """yaw^2 + pitch^2, or None when no face was detected."""
    if not pose.detected:
        return None
    return pose.yaw * pose.yaw + pose.pitch * pose.pitch


def select_from_scores(scores: Sequence[Optional[float]]) -> SourceSelection:
    """First index of the minimum present score."""
    best, best_score = -1, math.inf
    for i, s in enumerate(scores):
        if s is not None and s < best_score:
            best, best_score = i, s
    if best < 0:
        raise NoDetectableFace("no frame has a detectable face")
    missing = sum(s is None for s in scores)
    return SourceSelection(best, tuple(scores), missing)


def select_source_frame(clip: VideoClip, detector) -> SourceSelection:
    scores = [pose_score(estimate_pose(f, detector)) for f in clip.frames]
    return select_from_scores(scores)


def detect_face_contour(frame: FrameImage, detector) -> FaceContour:
    """Face-oval contour; with several faces the largest bounding box wins."""
    try:
        polygons = detector.detect(frame.pixels)
    except Exception as exc:
        raise BackendFailure(f"contour detector failed: {exc}") from exc
    if not polygons:
        raise NoFaceDetected("no face found in frame")
    contours = [FaceContour(np.asarray(p, dtype=np.float64)) for p in polygons]
    # stable: first of equal areas wins
    best = max(range(len(contours)), key=lambda i: (contours[i].bbox_area(), -i))
    warnings = ()
    if len(contours) > 1:
        msg = f"{len(contours)} faces detected; using the largest (bbox area {contours[best].bbox_area():.1f})"
        log.warning(msg)
        warnings = (msg,)
    return FaceContour(contours[best].points, warnings)


def default_dilation(contour: FaceContour) -> int:
    """3% of the contour's bounding-box diagonal, rounded up."""
    x0, y0, x1, y1 = contour.bbox()
    return int(math.ceil(DILATION_FRACTION * math.hypot(x1 - x0, y1 - y0)))


def polygon_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def rasterize_polygon(points: np.ndarray, width: int, height: int) -> np.ndarray:
    """Even-odd fill sampled at integer pixel centres; centres lying exactly on
    an edge are included. Returns a bool array shaped (height, width)."""
    pts = np.asarray(points, dtype=np.float64)
    py, px = np.mgrid[0:height, 0:width].astype(np.float64)
    inside = np.zeros((height, width), dtype=bool)
    on_edge = np.zeros((height, width), dtype=bool)
    n = len(pts)
    for k in range(n):
        x1, y1 = pts[k]
        x2, y2 = pts[(k + 1) % n]
        # edge membership: collinear and within the segment's bounding box
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        scale = max(abs(x2 - x1), abs(y2 - y1), 1.0)
        on_edge |= (
            (np.abs(cross) <= 1e-9 * scale)
            & (px >= min(x1, x2) - 1e-9)
            & (px <= max(x1, x2) + 1e-9)
            & (py >= min(y1, y2) - 1e-9)
            & (py <= max(y1, y2) + 1e-9)
        )
        if y1 == y2:
            continue
        straddles = (y1 > py) != (y2 > py)
        x_cross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= straddles & (px < x_cross)
    return inside | on_edge


def dilate(bits: np.ndarray, radius: int) -> np.ndarray:
    """Grow a binary raster by a Euclidean disk of ``radius`` pixels."""
    if radius <= 0:
        return bits.copy()
    dist = ndimage.distance_transform_edt(~bits)
    return dist <= radius


def build_mask(contour: FaceContour, frame_dims: tuple[int, int], dilation_px: Optional[int] = 0) -> FaceMask:
    """Filled, dilated face mask. ``dilation_px=None`` picks the default margin."""
    width, height = frame_dims
    pts = contour.points
    if np.any(pts[:, 0] < 0) or np.any(pts[:, 0] > width - 1) or np.any(pts[:, 1] < 0) or np.any(pts[:, 1] > height - 1):
        raise InvalidContour(f"contour points fall outside a {width}x{height} frame")
    if abs(polygon_area(pts)) < 1e-12:
        raise DegenerateContour("contour encloses zero area")
    if dilation_px is None:
        dilation_px = default_dilation(contour)
    if dilation_px < 0:
        raise ValueError("dilation_px must be non-negative")
    bits = rasterize_polygon(pts, width, height)
    if not bits.any():
        raise DegenerateContour("contour covers no pixel centre")
    return FaceMask(dilate(bits, dilation_px), dilation_px)
