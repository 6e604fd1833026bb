import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtwin import synthworld as sw
from dtwin.core import DistanceMetric, EmbeddingVector, FrameImage, VideoClip
from dtwin.errors import AllFramesSkipped, EmptyInput, LengthMismatch, NoEvaluableFrames
from dtwin.evaluation import (
    CELLS,
    FramePairObservation,
    MetricKind,
    MetricTimeline,
    SkipReason,
    all_timelines,
    deid_level_series,
    evaluate_pair,
    expression_preservation_series,
    extract_observations,
    identity_consistency_series,
    mean_and_variance,
    summarize_dataset,
    summarize_video,
)

COS, EUC = DistanceMetric.COSINE, DistanceMetric.EUCLIDEAN


def observe(src, deid, backends):
    return extract_observations(src, deid, backends.face_cropper, backends.identity_embedder,
                                backends.expression_embedder)


def retarget(traj, identity):
    return sw.AvatarTrajectory(identity, traj.motion, traj.appearance_attrs)


def test_faces_everywhere(gaze_clip, backends):
    obs = observe(gaze_clip, gaze_clip, backends)
    assert len(obs) == len(gaze_clip)
    assert not any(o.skipped for o in obs)


def test_blank_deid_frame(gaze_clip, backends):
    frames = list(gaze_clip.frames)
    frames[3] = FrameImage(np.zeros_like(frames[3].pixels), 3)
    obs = observe(gaze_clip, VideoClip(frames, gaze_clip.fps), backends)
    assert obs[3].skip_reason is SkipReason.NO_FACE_DEID
    assert sum(o.skipped for o in obs) == 1
    timelines = all_timelines(obs)
    assert all(tl.values[3] is None for tl in timelines)
    assert summarize_video(timelines).frames_skipped == 1


def test_blank_source_frame(gaze_clip, backends):
    frames = list(gaze_clip.frames)
    frames[0] = FrameImage(np.zeros_like(frames[0].pixels), 0)
    obs = observe(VideoClip(frames, gaze_clip.fps), gaze_clip, backends)
    assert obs[0].skip_reason is SkipReason.NO_FACE_SOURCE
    # reference moves to the first evaluable frame
    assert identity_consistency_series(obs, COS).values[1] == 0.0


def test_length_mismatch(gaze_clip, backends):
    short = VideoClip(gaze_clip.frames[:4], gaze_clip.fps)
    with pytest.raises(LengthMismatch):
        observe(VideoClip(gaze_clip.frames[:5], gaze_clip.fps), short, backends)


def test_observation_invariant():
    with pytest.raises(ValueError):
        FramePairObservation(0)
    with pytest.raises(ValueError):
        FramePairObservation(0, source_identity=EmbeddingVector("identity", np.ones(512)),
                             skip_reason=SkipReason.NO_FACE_DEID)


@pytest.mark.parametrize("distance", [COS, EUC])
def test_self_pair_is_zero(gaze_clip, backends, distance):
    obs = observe(gaze_clip, gaze_clip, backends)
    assert deid_level_series(obs, distance).values == (0.0,) * len(obs)
    assert expression_preservation_series(obs, distance).values == (0.0,) * len(obs)


def test_deid_level_matches_latents(gaze_traj, backends):
    other = sw.make_identity(77)
    src = sw.trajectory_clip(gaze_traj, (64, 64))
    deid = sw.trajectory_clip(retarget(gaze_traj, other), (64, 64))
    obs = observe(src, deid, backends)
    expected = np.linalg.norm(sw.pad(gaze_traj.identity.z, 512) - sw.pad(other.z, 512))
    raw = deid_level_series(obs, EUC, normalize_identity=False).values
    assert max(abs(v - expected) for v in raw) < 1e-12
    unit = lambda v: v / np.linalg.norm(v)
    expected_unit = np.linalg.norm(unit(gaze_traj.identity.z) - unit(other.z))
    assert max(abs(v - expected_unit) for v in deid_level_series(obs, EUC).values) < 1e-12


def test_consistency_zero_for_single_identity(gaze_clip, backends):
    obs = observe(gaze_clip, gaze_clip, backends)
    for d in (COS, EUC):
        tl = identity_consistency_series(obs, d)
        assert tl.values[0] == 0.0
        assert set(tl.values) == {0.0}


def test_consistency_all_skipped():
    obs = [FramePairObservation(i, skip_reason=SkipReason.NO_FACE_SOURCE) for i in range(3)]
    with pytest.raises(AllFramesSkipped):
        identity_consistency_series(obs, COS)


def test_expression_perturbed_frame(gaze_traj, backends):
    motion = list(gaze_traj.motion)
    m = motion[4]
    e = m.expression.copy()
    e[0] = 0.9 if e[0] < 0.5 else 0.1
    motion[4] = sw.MotionLatent(m.yaw, m.pitch, e)
    src = sw.trajectory_clip(gaze_traj, (64, 64))
    bent = sw.trajectory_clip(sw.AvatarTrajectory(gaze_traj.identity, motion, gaze_traj.appearance_attrs), (64, 64))
    values = expression_preservation_series(observe(src, bent, backends), EUC).values
    assert [i for i, v in enumerate(values) if v > 0] == [4]


def tl(values, kind=MetricKind.DEID_LEVEL, distance=COS):
    return MetricTimeline(kind, distance, tuple(values))


def six(values):
    return [tl(values, k, d) for k, d in CELLS]


@pytest.mark.parametrize("values, mean, var", [([0, 0, 0], 0.0, 0.0), ([1, 3], 2.0, 1.0), ([2.5], 2.5, 0.0)])
def test_summarize_video(values, mean, var):
    s = summarize_video(six(values))
    assert s.mean("deid_level", "cosine") == mean
    assert s.variance("deid_level", "cosine") == var
    assert s.frames_evaluated == len(values)


def test_summarize_video_all_skipped():
    with pytest.raises(NoEvaluableFrames):
        summarize_video(six([None, None]))


def test_summarize_video_skip_pattern():
    timelines = six([1.0, None, 3.0])
    s = summarize_video(timelines)
    assert s.mean("expression_preservation", "euclidean") == 2.0
    assert (s.frames_evaluated, s.frames_skipped) == (2, 1)
    timelines[2] = tl([1.0, 2.0, 3.0], *CELLS[2])
    with pytest.raises(ValueError):
        summarize_video(timelines)


def test_summarize_dataset():
    one = summarize_video(six([0.7]))
    assert summarize_dataset([one]).cells == one.cells
    two = summarize_video(six([0.8]))
    d = summarize_dataset([one, two])
    assert d.mean("deid_level", "cosine") == pytest.approx(0.75, abs=1e-15)
    assert d.num_videos == 2
    with pytest.raises(EmptyInput):
        summarize_dataset([])


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 2), st.integers(1, 30))
def test_constant_timeline_summary(c, n):
    mean, var = mean_and_variance([c] * n)
    assert mean == pytest.approx(c, abs=1e-12)
    assert var == pytest.approx(0.0, abs=1e-24)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=40))
def test_variance_non_negative(values):
    mean, var = mean_and_variance(values)
    assert var >= 0
    assert min(values) - 1e-9 <= mean <= max(values) + 1e-9


def test_ranges_on_pipeline_output(gaze_clip, backends):
    from dtwin.pipeline import PipelineConfig, run_clip

    video, _ = run_clip(gaze_clip, PipelineConfig())
    _, timelines, summary = evaluate_pair(gaze_clip, video, backends)
    patterns = {tuple(v is None for v in t.values) for t in timelines}
    assert len(patterns) == 1
    for t in timelines:
        assert all(v >= 0 for v in t.present())
        if t.distance is COS:
            assert all(v <= 2 for v in t.present())
    assert summary.mean("deid_level", "cosine") > 0
