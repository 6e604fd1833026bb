import numpy as np
import pytest
from PIL import Image

from dtwin.core import FrameImage, VideoClip
from dtwin.errors import DuplicateClipId, EmptyMedia, MediaNotFound, ParseFailure, StorageFailure, WriteFailure
from dtwin.media_io import (
    ArtifactCache,
    ArtifactKey,
    BehaviorTag,
    DatasetManifest,
    ManifestEntry,
    fetch_artifact,
    load_clip,
    load_manifest,
    save_clip,
    store_artifact,
    write_manifest,
)
from dtwin.pipeline import PipelineConfig

HEADER = "clip_id\tmedia_path\tsubject_id\tbehavior_tag\n"


def grid_clip(n, h=16, w=24, fps=25.0, seed=0):
    rng = np.random.default_rng(seed)
    frames = [FrameImage(rng.integers(0, 256, (h, w, 3)) / 255.0, i) for i in range(n)]
    return VideoClip(frames, fps=fps, clip_id="grid")


def test_numbered_image_directory(tmp_path):
    # 10 sorts before 2 lexically; the loader must use numeric order
    for i in (0, 1, 2, 10, 3):
        Image.fromarray(np.full((8, 8, 3), i * 20, np.uint8)).save(tmp_path / f"img{i}.png")
    clip = load_clip(tmp_path)
    assert len(clip) == 5
    assert [f.frame_index for f in clip.frames] == [0, 1, 2, 3, 4]
    assert [round(f.pixels[0, 0, 0] * 255) for f in clip.frames] == [0, 20, 40, 60, 200]


def test_max_frames_on_video(tmp_path):
    clip = grid_clip(10, 32, 32)
    path = tmp_path / "v.mp4"
    save_clip(clip, path)
    short = load_clip(path, max_frames=3)
    assert len(short) == 3
    full = load_clip(path)
    assert len(full) == 10
    for a, b in zip(short.frames, full.frames[:3]):
        assert np.array_equal(a.pixels, b.pixels)


def test_max_frames_on_directory(tmp_path):
    save_clip(grid_clip(6), tmp_path / "c")
    clip = load_clip(tmp_path / "c", max_frames=2)
    assert len(clip) == 2


def test_missing_media(tmp_path):
    with pytest.raises(MediaNotFound):
        load_clip(tmp_path / "nope")


def test_empty_directory(tmp_path):
    with pytest.raises(EmptyMedia):
        load_clip(tmp_path)


def test_lossless_round_trip(tmp_path):
    clip = grid_clip(2)
    save_clip(clip, tmp_path / "rt")
    back = load_clip(tmp_path / "rt")
    assert len(back) == 2
    for a, b in zip(clip.frames, back.frames):
        assert np.array_equal(a.pixels, b.pixels)


def test_write_failure(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(WriteFailure):
        save_clip(grid_clip(1), blocker / "sub")


def test_metadata_preserved(tmp_path):
    clip = VideoClip(grid_clip(3, 64, 64).frames, fps=25.0, clip_id="meta")
    save_clip(clip, tmp_path / "m")
    back = load_clip(tmp_path / "m")
    assert back.dims == (64, 64)
    assert back.fps == 25.0
    assert back.clip_id == "meta"


def test_manifest_three_entries(tmp_path):
    p = tmp_path / "m.tsv"
    p.write_text(
        HEADER
        + "a\tclips/a\ts1\tgaze_variation\n"
        + "b\tclips/b\ts1\trapid_pose_change\n"
        + "c\tclips/c\ts2\texpression_variation\n"
    )
    m = load_manifest(p)
    assert [e.clip_id for e in m.entries] == ["a", "b", "c"]
    assert m.entries[1].behavior_tag is BehaviorTag.RAPID_POSE_CHANGE
    assert m.resolve(m.entries[0]) == tmp_path / "clips/a"


def test_manifest_unknown_tag(tmp_path):
    p = tmp_path / "m.tsv"
    p.write_text(HEADER + "a\tx\ts\tjuggling\n")
    with pytest.raises(ParseFailure) as info:
        load_manifest(p)
    assert "juggling" in str(info.value)
    assert info.value.line == 2


def test_manifest_duplicate(tmp_path):
    p = tmp_path / "m.tsv"
    p.write_text(HEADER + "a\tx\ts\t\na\ty\ts\t\n")
    with pytest.raises(DuplicateClipId):
        load_manifest(p)


def test_manifest_bad_header(tmp_path):
    p = tmp_path / "m.tsv"
    p.write_text("id\tpath\n")
    with pytest.raises(ParseFailure):
        load_manifest(p)


def test_manifest_write_read(tmp_path):
    entries = [ManifestEntry("a", "x", "s", "speech_head_motion"), ManifestEntry("b", "y", "t")]
    write_manifest(DatasetManifest(entries), tmp_path / "m.tsv")
    m = load_manifest(tmp_path / "m.tsv")
    assert [(e.clip_id, e.behavior_tag) for e in m] == [
        ("a", BehaviorTag.SPEECH_HEAD_MOTION),
        ("b", BehaviorTag.UNSPECIFIED),
    ]


def test_cache_round_trip(tmp_path):
    cache = ArtifactCache(tmp_path)
    key = ArtifactKey("mask", "clip1", PipelineConfig().digest())
    payload = bytes(range(256)) * 3
    store_artifact(cache, key, payload)
    assert fetch_artifact(cache, key) == payload
    assert (tmp_path / "mask" / "clip1" / key.config_digest).is_file()


def test_cache_keyed_by_config(tmp_path):
    cache = ArtifactCache(tmp_path)
    store_artifact(cache, ArtifactKey("dtwin", "c", PipelineConfig(seed=1).digest()), b"one")
    assert fetch_artifact(cache, ArtifactKey("dtwin", "c", PipelineConfig(seed=2).digest())) is None


def test_cache_overwrite(tmp_path):
    cache = ArtifactCache(tmp_path)
    key = ArtifactKey("caption", "c", "d")
    store_artifact(cache, key, b"first")
    store_artifact(cache, key, b"second")
    assert fetch_artifact(cache, key) == b"second"


def test_cache_storage_failure(tmp_path):
    blocker = tmp_path / "f"
    blocker.write_text("")
    with pytest.raises(StorageFailure):
        store_artifact(ArtifactCache(blocker), ArtifactKey("mask", "c", "d"), b"x")


def test_artifact_key_rejects_paths():
    with pytest.raises(ValueError):
        ArtifactKey("mask", "../escape", "d")
