"""Captioning, masked inpainting of the D-Twin, and re-enactment."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from .core import Caption, CaptionSource, FaceMask, FrameImage, VideoClip, validate_clip
from .errors import BackendFailure, EmptyCaption, EmptyDriving, MaskMismatch
from .source_prep import SourceSelection, build_mask, detect_face_contour, select_source_frame

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenerationParams:
    seed: int = 0
    prompt_prefix: Optional[str] = None
    max_retries: int = 2

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True, eq=False)
class DTwin:
    image: FrameImage
    seed: int
    caption_used: Caption
    source_frame_index: int


def caption_image(frame: FrameImage, captioner) -> Caption:
    try:
        text = captioner.caption(frame.pixels)
    except Exception as exc:
        raise BackendFailure(f"captioner failed: {exc}") from exc
    if not isinstance(text, str) or not text.strip():
        raise EmptyCaption("captioner returned an empty caption")
    return Caption(text.strip(), CaptionSource.GENERATED)


def _prompt(caption: Caption, prefix: Optional[str]) -> Caption:
    if not prefix:
        return caption
    return Caption(f"{prefix.strip()} {caption.text}", caption.source)


def composite(generated: np.ndarray, source: np.ndarray, mask: FaceMask) -> np.ndarray:
    """generated * mask + source * (1 - mask) with a binary mask."""
    return np.where(mask.bits[..., None], generated, source)


def inpaint_face(frame: FrameImage, mask: FaceMask, caption: Caption, params: GenerationParams, inpainter) -> DTwin:
    """Regenerate the masked face. Attempt k uses seed + k; pixels outside the
    mask are copied from ``frame`` whatever the backend returns."""
    if mask.bits.shape != frame.pixels.shape[:2]:
        raise MaskMismatch(f"mask is {mask.width}x{mask.height}, frame is {frame.width}x{frame.height}")
    if not mask.bits.any():
        raise MaskMismatch("mask selects no pixels")
    prompt = _prompt(caption, params.prompt_prefix)
    last_error = None
    for attempt in range(params.max_retries + 1):
        seed = params.seed + attempt
        try:
            out = np.asarray(inpainter.inpaint(frame.pixels, mask.bits, prompt.text, seed), dtype=np.float64)
            if out.shape != frame.pixels.shape:
                raise BackendFailure(f"inpainter returned shape {out.shape}, expected {frame.pixels.shape}")
            if not np.all(np.isfinite(out)):
                raise BackendFailure("inpainter returned non-finite pixels")
        except Exception as exc:
            last_error = exc
            log.warning("inpaint attempt %d (seed %d) failed: %s", attempt, seed, exc)
            continue
        pixels = composite(np.clip(out, 0.0, 1.0), frame.pixels, mask)
        return DTwin(FrameImage(pixels, frame.frame_index), seed, prompt, frame.frame_index)
    raise BackendFailure(f"inpainting failed after {params.max_retries + 1} attempts: {last_error}") from last_error


def reenact(dtwin: DTwin, driving: VideoClip, reenactor) -> VideoClip:
    """Animate the D-Twin with the driving clip's motion; same T and fps."""
    if len(driving.frames) == 0:
        raise EmptyDriving("driving clip has no frames")
    try:
        frames = reenactor.reenact(dtwin.image.pixels, [f.pixels for f in driving.frames])
    except Exception as exc:
        raise BackendFailure(f"reenactor failed: {exc}") from exc
    if len(frames) != len(driving.frames):
        raise BackendFailure(f"reenactor returned {len(frames)} frames for {len(driving.frames)} driving frames")
    out = VideoClip(
        tuple(FrameImage(np.clip(np.asarray(f, dtype=np.float64), 0.0, 1.0), i) for i, f in enumerate(frames)),
        fps=driving.fps,
        clip_id=driving.clip_id,
    )
    problems = validate_clip(out)
    if problems:
        raise BackendFailure("reenactor output invalid: " + "; ".join(problems))
    return out


class DTwinResult(NamedTuple):
    dtwin: DTwin
    selection: SourceSelection
    mask: FaceMask
    caption: Caption
    warnings: tuple = ()


def generate_dtwin(
    clip: VideoClip,
    params: GenerationParams,
    backends,
    dilation_px: Optional[int] = None,
    caption_override: Optional[str] = None,
) -> DTwinResult:
    """Source-frame selection, contour, mask, caption and inpainting in order."""
    selection = select_source_frame(clip, backends.pose_detector)
    frame = clip.frames[selection.frame_index]
    contour = detect_face_contour(frame, backends.contour_detector)
    mask = build_mask(contour, (frame.width, frame.height), dilation_px)
    if caption_override:
        caption = Caption(caption_override.strip(), CaptionSource.USER_OVERRIDE)
    else:
        caption = caption_image(frame, backends.captioner)
    dtwin = inpaint_face(frame, mask, caption, params, backends.inpainter)
    dtwin = replace(dtwin, source_frame_index=selection.frame_index)
    return DTwinResult(dtwin, selection, mask, caption, contour.warnings)
