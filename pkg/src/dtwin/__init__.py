"""Video face de-identification by re-enacting an inpainted twin.

One frontal frame of the source clip gets its face regenerated under a new
identity (the D-Twin); the D-Twin is then animated with the source clip's
motion, so only pose and expression flow from source to output.
"""

from .core import (
    Caption,
    DistanceMetric,
    EmbeddingKind,
    EmbeddingVector,
    FaceMask,
    FrameImage,
    VideoClip,
    embedding_distance,
    l2_normalize,
    validate_clip,
)
from .generation import DTwin, GenerationParams, generate_dtwin, inpaint_face, reenact
from .pipeline import PipelineConfig, RunRecord, run_batch, run_clip

__version__ = "0.1.0"

__all__ = [
    "Caption",
    "DTwin",
    "DistanceMetric",
    "EmbeddingKind",
    "EmbeddingVector",
    "FaceMask",
    "FrameImage",
    "GenerationParams",
    "PipelineConfig",
    "RunRecord",
    "VideoClip",
    "embedding_distance",
    "generate_dtwin",
    "inpaint_face",
    "l2_normalize",
    "reenact",
    "run_batch",
    "run_clip",
    "validate_clip",
]
