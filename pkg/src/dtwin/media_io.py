"""Clip decode/encode, dataset manifests and the on-disk artifact cache."""

from __future__ import annotations

import csv
import enum
import io
import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from .core import FrameImage, VideoClip, validate_clip
from .errors import (
    DecodeFailure,
    DuplicateClipId,
    EmptyMedia,
    MediaNotFound,
    ParseFailure,
    StorageFailure,
    WriteFailure,
)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}
VIDEO_SUFFIXES = {".mp4", ".avi", ".mov", ".mkv", ".webm"}
CLIP_META = "clip.json"
DEFAULT_FPS = 25.0
MANIFEST_HEADER = ["clip_id", "media_path", "subject_id", "behavior_tag"]


class BehaviorTag(str, enum.Enum):
    GAZE_VARIATION = "gaze_variation"
    EXPRESSION_VARIATION = "expression_variation"
    SPEECH_HEAD_MOTION = "speech_head_motion"
    RAPID_POSE_CHANGE = "rapid_pose_change"
    UNSPECIFIED = "unspecified"


BEHAVIORS = [b for b in BehaviorTag if b is not BehaviorTag.UNSPECIFIED]


class Stage(str, enum.Enum):
    SOURCE_FRAME = "source_frame"
    MASK = "mask"
    CAPTION = "caption"
    DTWIN = "dtwin"
    DEID_VIDEO = "deid_video"
    METRICS = "metrics"


# ---------------------------------------------------------------- clips


def _natural_key(path: Path):
    return [int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", path.name)]


def _load_image_dir(path: Path, max_frames):
    files = sorted((p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES), key=_natural_key)
    if max_frames is not None:
        files = files[:max_frames]
    frames = []
    for i, f in enumerate(files):
        try:
            with Image.open(f) as im:
                arr = np.asarray(im.convert("RGB"))
        except (UnidentifiedImageError, OSError) as exc:
            raise DecodeFailure(f"cannot decode {f}: {exc}") from exc
        frames.append(FrameImage.from_uint8(arr, i))
    fps, clip_id = DEFAULT_FPS, path.name
    meta = path / CLIP_META
    if meta.exists():
        try:
            info = json.loads(meta.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DecodeFailure(f"bad clip metadata in {meta}: {exc}") from exc
        fps = float(info.get("fps", fps))
        clip_id = str(info.get("clip_id", clip_id))
    return frames, fps, clip_id


def _load_video_file(path: Path, max_frames):
    import cv2

    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise DecodeFailure(f"cannot open video {path}")
    fps = cap.get(cv2.CAP_PROP_FPS) or DEFAULT_FPS
    frames = []
    try:
        while max_frames is None or len(frames) < max_frames:
            ok, bgr = cap.read()
            if not ok:
                break
            frames.append(FrameImage.from_uint8(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB), len(frames)))
    finally:
        cap.release()
    return frames, float(fps), path.stem


def load_clip(path, max_frames: Optional[int] = None) -> VideoClip:
    """Load a video file or a directory of numbered images.

    Image sequences may carry a ``clip.json`` sidecar holding fps and clip_id.
    8-bit intensities are divided by 255.
    """
    path = Path(path)
    if not path.exists():
        raise MediaNotFound(f"no such media: {path}")
    if max_frames is not None and max_frames < 1:
        raise ValueError("max_frames must be >= 1")
    if path.is_dir():
        frames, fps, clip_id = _load_image_dir(path, max_frames)
    elif path.suffix.lower() in IMAGE_SUFFIXES:
        frames, fps, clip_id = _load_image_dir_single(path)
    else:
        frames, fps, clip_id = _load_video_file(path, max_frames)
    if not frames:
        raise EmptyMedia(f"no frames in {path}")
    clip = VideoClip(tuple(frames), fps=fps, clip_id=clip_id)
    problems = validate_clip(clip)
    if problems:
        raise DecodeFailure(f"{path}: " + "; ".join(problems))
    return clip


def _load_image_dir_single(path: Path):
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"))
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeFailure(f"cannot decode {path}: {exc}") from exc
    return [FrameImage.from_uint8(arr, 0)], DEFAULT_FPS, path.stem


def save_clip(clip: VideoClip, path) -> None:
    """Write ``clip`` as a PNG sequence directory, or as a container video
    when ``path`` has a video suffix (lossy, best effort).

    The PNG path is exact for clips whose intensities lie on the 8-bit grid.
    """
    problems = validate_clip(clip)
    if problems:
        raise ValueError("invalid clip: " + "; ".join(problems))
    path = Path(path)
    try:
        if path.suffix.lower() in VIDEO_SUFFIXES:
            _save_video_file(clip, path)
            return
        path.mkdir(parents=True, exist_ok=True)
        for old in path.glob("frame_*.png"):
            old.unlink()
        for i, frame in enumerate(clip.frames):
            Image.fromarray(frame.to_uint8(), mode="RGB").save(path / f"frame_{i:05d}.png", optimize=False)
        meta = {"clip_id": clip.clip_id, "fps": float(clip.fps), "num_frames": len(clip.frames)}
        (path / CLIP_META).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise WriteFailure(f"cannot write clip to {path}: {exc}") from exc


def _save_video_file(clip: VideoClip, path: Path) -> None:
    import cv2

    path.parent.mkdir(parents=True, exist_ok=True)
    w, h = clip.dims
    writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"mp4v"), float(clip.fps), (w, h))
    if not writer.isOpened():
        raise WriteFailure(f"cannot open video writer for {path}")
    try:
        for frame in clip.frames:
            writer.write(cv2.cvtColor(frame.to_uint8(), cv2.COLOR_RGB2BGR))
    finally:
        writer.release()


# ------------------------------------------------------------- manifests


@dataclass(frozen=True)
class ManifestEntry:
    clip_id: str
    media_path: str
    subject_id: str
    behavior_tag: BehaviorTag = BehaviorTag.UNSPECIFIED

    def __post_init__(self):
        if not self.media_path:
            raise ValueError("media_path must be non-empty")
        object.__setattr__(self, "behavior_tag", BehaviorTag(self.behavior_tag))


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple
    dataset_name: str = "dataset"
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        seen = set()
        for e in self.entries:
            if e.clip_id in seen:
                raise DuplicateClipId(f"duplicate clip_id {e.clip_id!r}")
            seen.add(e.clip_id)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.media_path)
        return p if p.is_absolute() else Path(self.base_dir) / p


def load_manifest(path) -> DatasetManifest:
    """Parse a tab-separated manifest with header
    ``clip_id  media_path  subject_id  behavior_tag``."""
    path = Path(path)
    if not path.exists():
        raise MediaNotFound(f"no such manifest: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseFailure(f"manifest is not UTF-8: {exc}") from exc
    rows = csv.reader(io.StringIO(text), delimiter="\t", quoting=csv.QUOTE_NONE)
    entries, seen = [], {}
    header_seen = False
    for lineno, row in enumerate(rows, start=1):
        if not row or (len(row) == 1 and not row[0].strip()) or row[0].startswith("#"):
            continue
        if not header_seen:
            if [c.strip() for c in row] != MANIFEST_HEADER:
                raise ParseFailure(f"expected header {'<TAB>'.join(MANIFEST_HEADER)}", line=lineno)
            header_seen = True
            continue
        if len(row) == 3:
            row = row + [""]
        if len(row) != 4:
            raise ParseFailure(f"expected 4 tab-separated fields, got {len(row)}", line=lineno)
        clip_id, media_path, subject_id, tag = (c.strip() for c in row)
        if not clip_id or not media_path:
            raise ParseFailure("clip_id and media_path must be non-empty", line=lineno)
        try:
            behavior = BehaviorTag(tag) if tag else BehaviorTag.UNSPECIFIED
        except ValueError:
            raise ParseFailure(f"unknown behavior tag {tag!r}", line=lineno) from None
        if clip_id in seen:
            raise DuplicateClipId(f"line {lineno}: clip_id {clip_id!r} already used on line {seen[clip_id]}")
        seen[clip_id] = lineno
        entries.append(ManifestEntry(clip_id, media_path, subject_id, behavior))
    if not header_seen:
        raise ParseFailure("missing header line", line=1)
    return DatasetManifest(tuple(entries), dataset_name=path.stem, base_dir=path.parent)


def write_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n", quoting=csv.QUOTE_NONE)
            w.writerow(MANIFEST_HEADER)
            for e in manifest.entries:
                w.writerow([e.clip_id, e.media_path, e.subject_id, e.behavior_tag.value])
    except OSError as exc:
        raise WriteFailure(f"cannot write manifest {path}: {exc}") from exc


# ----------------------------------------------------------------- cache


@dataclass(frozen=True)
class ArtifactKey:
    stage: Stage
    clip_id: str
    config_digest: str

    def __post_init__(self):
        object.__setattr__(self, "stage", Stage(self.stage))
        for part in (self.clip_id, self.config_digest):
            if not part or "/" in part or "\\" in part or part in (".", ".."):
                raise ValueError(f"invalid artifact key component {part!r}")

    def relpath(self) -> str:
        return f"{self.stage.value}/{self.clip_id}/{self.config_digest}"


class ArtifactCache:
    """One file per artifact at ``root/stage/clip_id/config_digest``.

    Writes go through a temp file and ``os.replace``; concurrent writers to
    the same key are last-writer-wins.
    """

    def __init__(self, root):
        self.root = Path(root)

    def path(self, key: ArtifactKey) -> Path:
        return self.root / key.relpath()

    def store(self, key: ArtifactKey, payload: bytes) -> Path:
        target = self.path(key)
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=".tmp-")
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, target)
        except OSError as exc:
            raise StorageFailure(f"cannot store {key.relpath()}: {exc}") from exc
        return target

    def fetch(self, key: ArtifactKey) -> Optional[bytes]:
        target = self.path(key)
        try:
            return target.read_bytes()
        except FileNotFoundError:
            return None
        except OSError as exc:
            raise StorageFailure(f"cannot read {key.relpath()}: {exc}") from exc


def store_artifact(cache: ArtifactCache, key: ArtifactKey, payload: bytes) -> Path:
    return cache.store(key, payload)


def fetch_artifact(cache: ArtifactCache, key: ArtifactKey) -> Optional[bytes]:
    return cache.fetch(key)
