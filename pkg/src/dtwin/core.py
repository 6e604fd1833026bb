"""Shared domain types and the distance math all metrics are built from."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import KindMismatch, ZeroVector, ZeroVectorCosine

IDENTITY_DIM = 512
EXPRESSION_DIM = 16


class EmbeddingKind(str, enum.Enum):
    IDENTITY = "identity"
    EXPRESSION = "expression"


EMBEDDING_DIMS = {EmbeddingKind.IDENTITY: IDENTITY_DIM, EmbeddingKind.EXPRESSION: EXPRESSION_DIM}


class DistanceMetric(str, enum.Enum):
    COSINE = "cosine"
    EUCLIDEAN = "euclidean"


class CaptionSource(str, enum.Enum):
    GENERATED = "generated"
    USER_OVERRIDE = "user_override"


@dataclass(frozen=True, eq=False)
class FrameImage:
    """One H x W x 3 frame with float intensities in [0, 1]."""

    pixels: np.ndarray
    frame_index: int = 0

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @classmethod
    def from_uint8(cls, array: np.ndarray, frame_index: int = 0) -> "FrameImage":
        return cls(np.asarray(array, dtype=np.float64) / 255.0, frame_index)

    def to_uint8(self) -> np.ndarray:
        return np.clip(np.round(self.pixels * 255.0), 0, 255).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class VideoClip:
    frames: tuple
    fps: float = 25.0
    clip_id: str = "clip"

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def dims(self) -> tuple[int, int]:
        """(W, H) of the first frame."""
        f = self.frames[0]
        return f.width, f.height

    def content_digest(self) -> str:
        """sha256 over fps and every frame's pixel bytes."""
        h = hashlib.sha256()
        h.update(repr(float(self.fps)).encode())
        for f in self.frames:
            px = np.ascontiguousarray(f.pixels, dtype=np.float64)
            h.update(repr(px.shape).encode())
            h.update(px.tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class FaceMask:
    """Binary raster shaped (H, W); True marks the region to regenerate."""

    bits: np.ndarray
    dilation_px: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bits", np.asarray(self.bits, dtype=bool))
        if self.dilation_px < 0:
            raise ValueError("dilation_px must be non-negative")

    @property
    def width(self) -> int:
        return int(self.bits.shape[1])

    @property
    def height(self) -> int:
        return int(self.bits.shape[0])

    @property
    def area(self) -> int:
        return int(self.bits.sum())


@dataclass(frozen=True)
class Caption:
    text: str
    source: CaptionSource = CaptionSource.GENERATED

    def __post_init__(self):
        if not isinstance(self.text, str) or not self.text.strip():
            raise ValueError("caption text must be non-empty")
        object.__setattr__(self, "source", CaptionSource(self.source))


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    kind: EmbeddingKind
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        kind = EmbeddingKind(self.kind)
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if values.size != EMBEDDING_DIMS[kind]:
            raise ValueError(f"{kind.value} embedding must have {EMBEDDING_DIMS[kind]} entries, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise ValueError("embedding values must be finite")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return int(self.values.size)


VectorLike = Union[EmbeddingVector, Sequence[float], np.ndarray]


def validate_clip(clip: VideoClip) -> list[str]:
    """Return the list of violated clip invariants; an empty list means ok."""
    problems = []
    if len(clip.frames) == 0:
        problems.append("empty clip")
    try:
        fps_ok = float(clip.fps) > 0 and np.isfinite(float(clip.fps))
    except (TypeError, ValueError):
        fps_ok = False
    if not fps_ok:
        problems.append("non-positive fps")
    shapes = set()
    for i, frame in enumerate(clip.frames):
        px = np.asarray(frame.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            problems.append(f"frame {i}: expected H x W x 3 pixels, got shape {px.shape}")
            continue
        if px.shape[0] < 1 or px.shape[1] < 1:
            problems.append(f"frame {i}: zero-sized frame")
        if not np.all(np.isfinite(px)) or px.min(initial=0.0) < 0.0 or px.max(initial=0.0) > 1.0:
            problems.append(f"frame {i}: pixel values outside [0, 1]")
        if frame.frame_index < 0:
            problems.append(f"frame {i}: negative frame_index")
        shapes.add(px.shape[:2])
    if len(shapes) > 1:
        problems.append("inconsistent frame dimensions")
    return problems


def _as_array(v: VectorLike) -> np.ndarray:
    if isinstance(v, EmbeddingVector):
        return v.values
    return np.asarray(v, dtype=np.float64).reshape(-1)


def embedding_distance(a: VectorLike, b: VectorLike, metric: DistanceMetric | str) -> float:
    """Cosine distance (1 - cosine similarity, in [0, 2]) or Euclidean distance."""
    metric = DistanceMetric(metric)
    if isinstance(a, EmbeddingVector) and isinstance(b, EmbeddingVector) and a.kind != b.kind:
        raise KindMismatch(f"cannot compare {a.kind.value} with {b.kind.value} embeddings")
    x, y = _as_array(a), _as_array(b)
    if x.shape != y.shape:
        raise KindMismatch(f"dimension mismatch: {x.size} vs {y.size}")
    if metric is DistanceMetric.EUCLIDEAN:
        return float(np.linalg.norm(x - y))
    if not (np.any(x) and np.any(y)):
        raise ZeroVectorCosine("cosine distance is undefined for an all-zero vector")
    # 1 - cos = |x^ - y^|^2 / 2; exactly 0 for equal inputs, unlike 1 - dot
    u, v = _unit(x), _unit(y)
    return float(min(2.0, 0.5 * float(np.sum((u - v) ** 2))))


def _unit(x: np.ndarray) -> np.ndarray:
    # rescale by the largest entry first so tiny vectors do not underflow
    x = x / np.max(np.abs(x))
    return x / np.linalg.norm(x)


def l2_normalize(v: VectorLike):
    """Scale to unit L2 norm. Returns the same type that was passed in."""
    x = _as_array(v)
    if not np.any(x):
        raise ZeroVector("cannot normalize an all-zero vector")
    x = x / np.max(np.abs(x))
    out = x / np.linalg.norm(x)
    # a second pass removes the last-ulp drift so normalization is idempotent
    out = out / np.linalg.norm(out)
    if isinstance(v, EmbeddingVector):
        return EmbeddingVector(v.kind, out)
    return out
