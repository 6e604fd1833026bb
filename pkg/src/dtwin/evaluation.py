"""Per-frame de-identification metrics and their per-video / dataset summaries.

Three criteria, each under cosine and Euclidean distance:

* de-identification level: source vs de-identified identity embedding (higher is better)
* identity consistency: de-identified identity vs the first evaluable
  de-identified frame (lower is better)
* expression preservation: source vs de-identified expression embedding (lower is better)
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import DistanceMetric, EmbeddingKind, EmbeddingVector, VideoClip, embedding_distance, l2_normalize
from .errors import AllFramesSkipped, BackendFailure, EmptyInput, LengthMismatch, NoEvaluableFrames


class MetricKind(str, enum.Enum):
    DEID_LEVEL = "deid_level"
    IDENTITY_CONSISTENCY = "identity_consistency"
    EXPRESSION_PRESERVATION = "expression_preservation"


class SkipReason(str, enum.Enum):
    NO_FACE_SOURCE = "no_face_source"
    NO_FACE_DEID = "no_face_deid"


METRIC_KINDS = tuple(MetricKind)
DISTANCES = (DistanceMetric.COSINE, DistanceMetric.EUCLIDEAN)
CELLS = tuple((k, d) for k in METRIC_KINDS for d in DISTANCES)

LABELS = {
    MetricKind.DEID_LEVEL: "De-identification Level",
    MetricKind.IDENTITY_CONSISTENCY: "Identity Consistency",
    MetricKind.EXPRESSION_PRESERVATION: "Expression Preservation",
}
HIGHER_IS_BETTER = {
    MetricKind.DEID_LEVEL: True,
    MetricKind.IDENTITY_CONSISTENCY: False,
    MetricKind.EXPRESSION_PRESERVATION: False,
}


@dataclass(frozen=True, eq=False)
class FramePairObservation:
    frame_index: int
    source_identity: Optional[EmbeddingVector] = None
    deid_identity: Optional[EmbeddingVector] = None
    source_expression: Optional[EmbeddingVector] = None
    deid_expression: Optional[EmbeddingVector] = None
    skip_reason: Optional[SkipReason] = None

    def __post_init__(self):
        present = [self.source_identity, self.deid_identity, self.source_expression, self.deid_expression]
        if self.skip_reason is None and any(e is None for e in present):
            raise ValueError("embeddings are required unless the frame is skipped")
        if self.skip_reason is not None and any(e is not None for e in present):
            raise ValueError("a skipped frame carries no embeddings")

    @property
    def skipped(self) -> bool:
        return self.skip_reason is not None


@dataclass(frozen=True)
class MetricTimeline:
    metric_kind: MetricKind
    distance: DistanceMetric
    values: tuple

    def __len__(self):
        return len(self.values)

    def present(self) -> list[float]:
        return [v for v in self.values if v is not None]


@dataclass(frozen=True)
class VideoSummary:
    cells: dict  # (MetricKind, DistanceMetric) -> (mean, variance)
    frames_evaluated: int
    frames_skipped: int

    def mean(self, kind, distance) -> float:
        return self.cells[(MetricKind(kind), DistanceMetric(distance))][0]

    def variance(self, kind, distance) -> float:
        return self.cells[(MetricKind(kind), DistanceMetric(distance))][1]


@dataclass(frozen=True)
class DatasetSummary:
    cells: dict  # (MetricKind, DistanceMetric) -> (mean of means, mean of variances)
    num_videos: int

    def mean(self, kind, distance) -> float:
        return self.cells[(MetricKind(kind), DistanceMetric(distance))][0]

    def variance(self, kind, distance) -> float:
        return self.cells[(MetricKind(kind), DistanceMetric(distance))][1]


def _embed(embedder, crop, kind: EmbeddingKind) -> EmbeddingVector:
    try:
        values = embedder.embed(crop)
        return EmbeddingVector(kind, values)
    except BackendFailure:
        raise
    except Exception as exc:
        raise BackendFailure(f"{kind.value} embedder failed: {exc}") from exc


def extract_observations(
    source: VideoClip, deid: VideoClip, cropper, id_embedder, expr_embedder
) -> list[FramePairObservation]:
    """Crop and embed every temporally paired frame."""
    if len(source.frames) != len(deid.frames):
        raise LengthMismatch(f"source has {len(source.frames)} frames, de-identified clip has {len(deid.frames)}")
    out = []
    for t, (s, d) in enumerate(zip(source.frames, deid.frames)):
        try:
            s_crop = cropper.crop(s.pixels)
            d_crop = cropper.crop(d.pixels) if s_crop is not None else None
        except Exception as exc:
            raise BackendFailure(f"face cropper failed on frame {t}: {exc}") from exc
        if s_crop is None:
            out.append(FramePairObservation(t, skip_reason=SkipReason.NO_FACE_SOURCE))
            continue
        if d_crop is None:
            out.append(FramePairObservation(t, skip_reason=SkipReason.NO_FACE_DEID))
            continue
        out.append(
            FramePairObservation(
                t,
                source_identity=_embed(id_embedder, s_crop, EmbeddingKind.IDENTITY),
                deid_identity=_embed(id_embedder, d_crop, EmbeddingKind.IDENTITY),
                source_expression=_embed(expr_embedder, s_crop, EmbeddingKind.EXPRESSION),
                deid_expression=_embed(expr_embedder, d_crop, EmbeddingKind.EXPRESSION),
            )
        )
    return out


def _identity_distance(a, b, distance: DistanceMetric, normalize: bool) -> float:
    # identity embeddings are compared as unit vectors under Euclidean distance
    if normalize and distance is DistanceMetric.EUCLIDEAN:
        a, b = l2_normalize(a), l2_normalize(b)
    return embedding_distance(a, b, distance)


def deid_level_series(obs: Sequence[FramePairObservation], distance, normalize_identity: bool = True) -> MetricTimeline:
    distance = DistanceMetric(distance)
    values = tuple(
        None if o.skipped else _identity_distance(o.source_identity, o.deid_identity, distance, normalize_identity)
        for o in obs
    )
    return MetricTimeline(MetricKind.DEID_LEVEL, distance, values)


def identity_consistency_series(
    obs: Sequence[FramePairObservation], distance, normalize_identity: bool = True
) -> MetricTimeline:
    distance = DistanceMetric(distance)
    ref = next((o.deid_identity for o in obs if not o.skipped), None)
    if ref is None:
        raise AllFramesSkipped("no evaluable frame to use as the identity reference")
    values = tuple(
        None if o.skipped else _identity_distance(o.deid_identity, ref, distance, normalize_identity) for o in obs
    )
    return MetricTimeline(MetricKind.IDENTITY_CONSISTENCY, distance, values)


def expression_preservation_series(obs: Sequence[FramePairObservation], distance) -> MetricTimeline:
    distance = DistanceMetric(distance)
    values = tuple(
        None if o.skipped else embedding_distance(o.source_expression, o.deid_expression, distance) for o in obs
    )
    return MetricTimeline(MetricKind.EXPRESSION_PRESERVATION, distance, values)


def all_timelines(obs: Sequence[FramePairObservation], normalize_identity: bool = True) -> list[MetricTimeline]:
    """The six timelines in (criterion, distance) order of ``CELLS``."""
    out = []
    for kind, distance in CELLS:
        if kind is MetricKind.DEID_LEVEL:
            out.append(deid_level_series(obs, distance, normalize_identity))
        elif kind is MetricKind.IDENTITY_CONSISTENCY:
            out.append(identity_consistency_series(obs, distance, normalize_identity))
        else:
            out.append(expression_preservation_series(obs, distance))
    return out


def mean_and_variance(values: Sequence[float]) -> tuple[float, float]:
    """Mean and population variance."""
    x = np.asarray(values, dtype=np.float64)
    mean = float(np.mean(x))
    return mean, float(np.mean((x - mean) ** 2))


def summarize_video(timelines: Sequence[MetricTimeline]) -> VideoSummary:
    if not timelines:
        raise EmptyInput("no timelines to summarize")
    pattern = [v is None for v in timelines[0].values]
    for tl in timelines[1:]:
        if [v is None for v in tl.values] != pattern:
            raise ValueError("timelines do not share a skip pattern")
    skipped = sum(pattern)
    evaluated = len(pattern) - skipped
    if evaluated == 0:
        raise NoEvaluableFrames("every frame was skipped")
    cells = {(tl.metric_kind, tl.distance): mean_and_variance(tl.present()) for tl in timelines}
    return VideoSummary(cells, evaluated, skipped)


def summarize_dataset(summaries: Sequence[VideoSummary]) -> DatasetSummary:
    """Unweighted mean over videos of each per-video mean and variance."""
    if not summaries:
        raise EmptyInput("no video summaries to aggregate")
    keys = summaries[0].cells.keys()
    cells = {}
    for key in keys:
        means = [s.cells[key][0] for s in summaries]
        variances = [s.cells[key][1] for s in summaries]
        cells[key] = (float(np.mean(means)), float(np.mean(variances)))
    return DatasetSummary(cells, len(summaries))


def evaluate_pair(source: VideoClip, deid: VideoClip, backends, normalize_identity: bool = True):
    """(observations, six timelines, VideoSummary) for one source/de-identified pair."""
    obs = extract_observations(
        source, deid, backends.face_cropper, backends.identity_embedder, backends.expression_embedder
    )
    timelines = all_timelines(obs, normalize_identity)
    return obs, timelines, summarize_video(timelines)
