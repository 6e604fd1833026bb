"""End-to-end de-identification of single clips and whole manifests.

Every stage output is cached under a digest of the config fields that can
influence it (plus the input clip's content), so changing e.g. the inpainting
seed re-runs only inpainting and re-enactment.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .backends import CATEGORIES, BackendRegistry, Backends, default_registry, resolve_backends
from .core import Caption, CaptionSource, FaceMask, FrameImage, VideoClip, validate_clip
from .errors import ConfigError, DTwinError, StorageFailure
from .generation import DTwin, GenerationParams, caption_image, inpaint_face, reenact
from .media_io import ArtifactCache, ArtifactKey, DatasetManifest, Stage, load_clip, save_clip
from .source_prep import SourceSelection, build_mask, detect_face_contour, select_source_frame

log = logging.getLogger(__name__)

CACHE_ENV = "DTWIN_CACHE_DIR"
STAGES = ("load", "source_prep", "mask", "caption", "inpaint", "reenact")
STAGE_ARTIFACT = {
    "source_prep": Stage.SOURCE_FRAME,
    "mask": Stage.MASK,
    "caption": Stage.CAPTION,
    "inpaint": Stage.DTWIN,
    "reenact": Stage.DEID_VIDEO,
}

# config fields each cached artifact depends on, directly or through its inputs
_STAGE_FIELDS = {
    Stage.SOURCE_FRAME: ("pose_detector",),
    Stage.MASK: ("pose_detector", "contour_detector", "dilation_px"),
    Stage.CAPTION: ("pose_detector", "captioner", "caption_override"),
}
_STAGE_FIELDS[Stage.DTWIN] = tuple(
    dict.fromkeys(
        _STAGE_FIELDS[Stage.MASK]
        + _STAGE_FIELDS[Stage.CAPTION]
        + ("inpainter", "seed", "prompt_prefix", "max_retries")
    )
)
_STAGE_FIELDS[Stage.DEID_VIDEO] = _STAGE_FIELDS[Stage.DTWIN] + ("reenactor",)
_STAGE_FIELDS[Stage.METRICS] = _STAGE_FIELDS[Stage.DEID_VIDEO] + (
    "face_cropper",
    "identity_embedder",
    "expression_embedder",
    "normalize_identity",
)


@dataclass(frozen=True)
class PipelineConfig:
    captioner: str = "synthetic"
    inpainter: str = "synthetic"
    reenactor: str = "synthetic"
    pose_detector: str = "synthetic"
    contour_detector: str = "synthetic"
    face_cropper: str = "synthetic"
    identity_embedder: str = "synthetic"
    expression_embedder: str = "synthetic"
    seed: int = 0
    prompt_prefix: Optional[str] = None
    max_retries: int = 2
    dilation_px: Optional[int] = None  # None: 3% of the face bbox diagonal
    caption_override: Optional[str] = None
    normalize_identity: bool = True
    cache_dir: Optional[str] = None  # location only, excluded from digests

    def __post_init__(self):
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.dilation_px is not None and self.dilation_px < 0:
            raise ConfigError("dilation_px must be >= 0")

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        """Load a flat JSON object whose keys are PipelineConfig fields."""
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict) or any(isinstance(v, (dict, list)) for v in data.values()):
            raise ConfigError("config must be a flat JSON object")
        return cls.from_dict(data)

    def with_overrides(self, **overrides) -> "PipelineConfig":
        merged = asdict(self)
        merged.update({k: v for k, v in overrides.items() if v is not None})
        return PipelineConfig.from_dict(merged)

    def backend_names(self) -> dict[str, str]:
        return {c: getattr(self, c) for c in CATEGORIES}

    def generation_params(self) -> GenerationParams:
        return GenerationParams(self.seed, self.prompt_prefix, self.max_retries)

    def _hash(self, names, extra: str = "") -> str:
        payload = json.dumps({n: getattr(self, n) for n in names}, sort_keys=True) + extra
        return hashlib.sha256(payload.encode()).hexdigest()[:24]

    def digest(self) -> str:
        return self._hash([f.name for f in fields(self) if f.name != "cache_dir"])

    def stage_digest(self, stage: Stage, input_digest: str = "") -> str:
        return self._hash(_STAGE_FIELDS[Stage(stage)], input_digest)

    def check(self, registry: BackendRegistry) -> None:
        for category, name in self.backend_names().items():
            registry.check(category, name)


@dataclass
class StageRecord:
    status: str = "pending"  # ok | failed | skipped
    error: Optional[str] = None
    cached: bool = False
    artifact: Optional[str] = None


@dataclass
class RunRecord:
    clip_id: str
    config_digest: str
    stages: dict = field(default_factory=lambda: {s: StageRecord() for s in STAGES})
    timings: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    output: Optional[str] = None

    @property
    def ok(self) -> bool:
        return all(s.status == "ok" for s in self.stages.values())

    @property
    def failed_stage(self) -> Optional[str]:
        return next((n for n, s in self.stages.items() if s.status == "failed"), None)

    def fail(self, stage: str, exc: BaseException) -> None:
        self.stages[stage].status = "failed"
        self.stages[stage].error = f"{type(exc).__name__}: {exc}"
        later = STAGES[STAGES.index(stage) + 1:]
        for name in later:
            self.stages[name].status = "skipped"

    def to_dict(self, include_timings: bool = False) -> dict:
        d = {
            "clip_id": self.clip_id,
            "config_digest": self.config_digest,
            "status": "ok" if self.ok else "failed",
            "stages": {n: asdict(s) for n, s in self.stages.items()},
            "warnings": list(self.warnings),
            "metadata": dict(self.metadata),
            "output": self.output,
        }
        if include_timings:
            d["timings"] = dict(self.timings)
        return d


# ------------------------------------------------------------ payloads


def pack(meta: dict, arrays: Optional[dict] = None) -> bytes:
    """JSON header line followed by raw .npy blobs; byte-deterministic."""
    blobs = []
    for name, arr in (arrays or {}).items():
        buf = io.BytesIO()
        np.save(buf, np.ascontiguousarray(arr), allow_pickle=False)
        blobs.append((name, buf.getvalue()))
    header = {"meta": meta, "arrays": [[n, len(b)] for n, b in blobs]}
    return json.dumps(header, sort_keys=True).encode() + b"\n" + b"".join(b for _, b in blobs)


def unpack(payload: bytes) -> tuple[dict, dict]:
    head, _, rest = payload.partition(b"\n")
    header = json.loads(head)
    arrays, offset = {}, 0
    for name, n in header["arrays"]:
        arrays[name] = np.load(io.BytesIO(rest[offset: offset + n]), allow_pickle=False)
        offset += n
    return header["meta"], arrays


def _selection_payload(sel: SourceSelection) -> bytes:
    return pack({"frame_index": sel.frame_index, "pose_scores": list(sel.pose_scores), "num_undetected": sel.num_undetected})


def _selection_from(payload: bytes) -> SourceSelection:
    m, _ = unpack(payload)
    return SourceSelection(m["frame_index"], tuple(m["pose_scores"]), m["num_undetected"])


def _mask_payload(mask: FaceMask, warnings) -> bytes:
    return pack({"dilation_px": mask.dilation_px, "warnings": list(warnings)}, {"bits": mask.bits})


def _mask_from(payload: bytes):
    m, a = unpack(payload)
    return FaceMask(a["bits"], m["dilation_px"]), tuple(m["warnings"])


def _caption_payload(c: Caption) -> bytes:
    return pack({"text": c.text, "source": c.source.value})


def _caption_from(payload: bytes) -> Caption:
    m, _ = unpack(payload)
    return Caption(m["text"], CaptionSource(m["source"]))


def _dtwin_payload(d: DTwin) -> bytes:
    meta = {"seed": d.seed, "caption": d.caption_used.text, "caption_source": d.caption_used.source.value,
            "source_frame_index": d.source_frame_index}
    return pack(meta, {"image": d.image.pixels})


def _dtwin_from(payload: bytes) -> DTwin:
    m, a = unpack(payload)
    caption = Caption(m["caption"], CaptionSource(m["caption_source"]))
    return DTwin(FrameImage(a["image"], m["source_frame_index"]), m["seed"], caption, m["source_frame_index"])


def _video_payload(clip: VideoClip) -> bytes:
    return pack({"fps": clip.fps, "clip_id": clip.clip_id}, {"frames": np.stack([f.pixels for f in clip.frames])})


def _video_from(payload: bytes) -> VideoClip:
    m, a = unpack(payload)
    return VideoClip(tuple(FrameImage(f, i) for i, f in enumerate(a["frames"])), m["fps"], m["clip_id"])


# ------------------------------------------------------------ execution


class _Runner:
    def __init__(self, clip, config, backends, cache, record):
        self.clip, self.config, self.backends = clip, config, backends
        self.cache, self.record = cache, record
        self.input_digest = clip.content_digest()

    def stage(self, name, compute, encode, decode):
        """Serve ``name`` from cache or compute and store it."""
        rec = self.record.stages[name]
        start = time.perf_counter()
        key = None
        if self.cache is not None:
            key = ArtifactKey(STAGE_ARTIFACT[name], self.clip.clip_id,
                              self.config.stage_digest(STAGE_ARTIFACT[name], self.input_digest))
            rec.artifact = key.relpath()
            payload = self.cache.fetch(key)
            if payload is not None:
                rec.status, rec.cached = "ok", True
                self.record.timings[name] = time.perf_counter() - start
                return decode(payload)
        value = compute()
        if key is not None:
            self.cache.store(key, encode(value))
        rec.status = "ok"
        self.record.timings[name] = time.perf_counter() - start
        return value


def run_clip(
    clip: VideoClip,
    config: PipelineConfig,
    cache: Optional[ArtifactCache] = None,
    backends: Optional[Backends] = None,
    registry: Optional[BackendRegistry] = None,
) -> tuple[Optional[VideoClip], RunRecord]:
    """De-identify one clip: frontal frame, mask, caption, inpaint, re-enact.

    Stage errors are captured in the returned record (the video is then
    None); only cache storage errors propagate.
    """
    record = RunRecord(clip.clip_id, config.digest())
    problems = validate_clip(clip)
    if problems:
        record.fail("load", ValueError("; ".join(problems)))
        return None, record
    record.stages["load"].status = "ok"
    if backends is None:
        backends = resolve_backends(registry or default_registry(), config.backend_names())
    r = _Runner(clip, config, backends, cache, record)
    params = config.generation_params()
    current = "source_prep"
    try:
        selection = r.stage("source_prep", lambda: select_source_frame(clip, backends.pose_detector),
                            _selection_payload, _selection_from)
        record.metadata["source_frame_index"] = selection.frame_index
        record.metadata["frames_without_face"] = selection.num_undetected
        frame = clip.frames[selection.frame_index]

        current = "mask"

        def make_mask():
            contour = detect_face_contour(frame, backends.contour_detector)
            return build_mask(contour, (frame.width, frame.height), config.dilation_px), contour.warnings

        mask, warnings = r.stage("mask", make_mask, lambda v: _mask_payload(*v), _mask_from)
        record.warnings.extend(warnings)
        record.metadata["mask_dilation_px"] = mask.dilation_px
        record.metadata["mask_area"] = mask.area

        current = "caption"

        def make_caption():
            if config.caption_override:
                return Caption(config.caption_override.strip(), CaptionSource.USER_OVERRIDE)
            return caption_image(frame, backends.captioner)

        caption = r.stage("caption", make_caption, _caption_payload, _caption_from)

        current = "inpaint"

        def make_dtwin():
            d = inpaint_face(frame, mask, caption, params, backends.inpainter)
            return DTwin(d.image, d.seed, d.caption_used, selection.frame_index)

        dtwin = r.stage("inpaint", make_dtwin, _dtwin_payload, _dtwin_from)
        record.metadata["dtwin_seed"] = dtwin.seed
        record.metadata["prompt"] = dtwin.caption_used.text

        current = "reenact"
        video = r.stage("reenact", lambda: reenact(dtwin, clip, backends.reenactor), _video_payload, _video_from)
        w, h = video.dims
        record.metadata["reenact_resolution"] = [w, h]
    except StorageFailure:
        raise
    except Exception as exc:  # stage failures are data, not exceptions
        if not isinstance(exc, DTwinError):
            log.exception("unexpected error in stage %s of %s", current, clip.clip_id)
        record.fail(current, exc)
        return None, record
    return video, record


def run_batch(
    manifest: DatasetManifest,
    config: PipelineConfig,
    cache: Optional[ArtifactCache] = None,
    output_dir=None,
    registry: Optional[BackendRegistry] = None,
    workers: int = 1,
) -> list[RunRecord]:
    """Run every manifest entry; one record per entry, in manifest order.

    A failing clip never stops the others. With ``output_dir`` set, each
    de-identified clip is written as a PNG sequence under
    ``output_dir/videos/<clip_id>``.
    """
    registry = registry or default_registry()
    config.check(registry)
    local = threading.local()

    def handles():
        if not hasattr(local, "backends"):
            local.backends = resolve_backends(registry, config.backend_names())
        return local.backends

    def one(entry):
        try:
            src = load_clip(manifest.resolve(entry))
        except Exception as exc:
            record = RunRecord(entry.clip_id, config.digest())
            record.fail("load", exc)
            return record
        clip = VideoClip(src.frames, src.fps, entry.clip_id)
        video, record = run_clip(clip, config, cache, handles())
        if video is not None and output_dir is not None:
            rel = Path("videos") / entry.clip_id
            save_clip(video, Path(output_dir) / rel)
            record.output = rel.as_posix()
        return record

    if workers <= 1:
        return [one(e) for e in manifest.entries]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, manifest.entries))


def resolve_cache(config: PipelineConfig, default=None) -> Optional[ArtifactCache]:
    """Cache root from the config, then the environment, then ``default``."""
    root = config.cache_dir or os.environ.get(CACHE_ENV) or default
    return ArtifactCache(root) if root else None
