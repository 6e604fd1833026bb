import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dtwin.core import (
    Caption,
    EmbeddingKind,
    EmbeddingVector,
    FaceMask,
    FrameImage,
    VideoClip,
    embedding_distance,
    l2_normalize,
    validate_clip,
)
from dtwin.errors import KindMismatch, ZeroVector, ZeroVectorCosine

from conftest import solid_clip


def test_validate_clip_ok():
    assert validate_clip(solid_clip(3, 64, 64)) == []


def test_validate_clip_inconsistent_dims():
    clip = solid_clip(3)
    frames = list(clip.frames)
    frames[2] = FrameImage(np.zeros((32, 64, 3)), 2)
    assert "inconsistent frame dimensions" in validate_clip(VideoClip(frames))


def test_validate_clip_empty():
    assert "empty clip" in validate_clip(VideoClip(()))


def test_validate_clip_range_and_fps():
    bad = VideoClip((FrameImage(np.full((4, 4, 3), 1.5)),), fps=0)
    problems = validate_clip(bad)
    assert "non-positive fps" in problems
    assert any("outside [0, 1]" in p for p in problems)


@pytest.mark.parametrize(
    "a, b, metric, expected",
    [
        ([1, 0], [1, 0], "cosine", 0.0),
        ([1, 0], [0, 1], "euclidean", math.sqrt(2)),
        ([1, 0], [-1, 0], "cosine", 2.0),
    ],
)
def test_distance_examples(a, b, metric, expected):
    assert embedding_distance(a, b, metric) == pytest.approx(expected, abs=1e-12)


def test_distance_kind_mismatch():
    a = EmbeddingVector(EmbeddingKind.IDENTITY, np.ones(512))
    b = EmbeddingVector(EmbeddingKind.EXPRESSION, np.ones(16))
    with pytest.raises(KindMismatch):
        embedding_distance(a, b, "euclidean")


def test_cosine_zero_vector():
    with pytest.raises(ZeroVectorCosine):
        embedding_distance([0, 0], [1, 0], "cosine")
    # euclidean is fine with zero vectors
    assert embedding_distance([0, 0], [3, 4], "euclidean") == 5.0


def test_embedding_dims_enforced():
    with pytest.raises(ValueError):
        EmbeddingVector("identity", np.ones(16))
    with pytest.raises(ValueError):
        EmbeddingVector("expression", np.full(16, np.nan))
    assert EmbeddingVector("expression", np.ones(16)).dim == 16


def test_l2_normalize_examples():
    v = np.zeros(16)
    v[:2] = [3, 4]
    out = l2_normalize(EmbeddingVector("expression", v))
    assert out.kind is EmbeddingKind.EXPRESSION
    np.testing.assert_allclose(out.values[:3], [0.6, 0.8, 0.0], atol=1e-15)
    unit = np.zeros(512)
    unit[7] = 1.0
    np.testing.assert_array_equal(l2_normalize(unit), unit)
    with pytest.raises(ZeroVector):
        l2_normalize(np.zeros(512))


def test_caption_non_empty():
    with pytest.raises(ValueError):
        Caption("   ")
    assert Caption("a person").source.value == "generated"


def test_face_mask_binary():
    m = FaceMask(np.array([[0, 1], [2, 0]]))
    assert m.bits.dtype == bool and m.area == 2


vec = st.integers(2, 24).flatmap(
    lambda n: arrays(np.float64, n, elements=st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False))
)


def _pair(n):
    el = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
    return st.tuples(arrays(np.float64, n, elements=el), arrays(np.float64, n, elements=el))


pairs = st.integers(2, 24).flatmap(_pair)


@settings(max_examples=200, deadline=None)
@given(pairs)
def test_symmetry(p):
    a, b = p
    assert embedding_distance(a, b, "euclidean") == pytest.approx(embedding_distance(b, a, "euclidean"), abs=1e-12)
    if np.any(a) and np.any(b):
        assert embedding_distance(a, b, "cosine") == pytest.approx(embedding_distance(b, a, "cosine"), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(vec, st.floats(1e-3, 1e3))
def test_cosine_scale_invariance_and_self_distance(a, alpha):
    if np.linalg.norm(a) < 1e-6:
        return
    b = np.roll(a, 1) + 0.5
    if not np.any(b):
        return
    assert embedding_distance(alpha * a, b, "cosine") == pytest.approx(embedding_distance(a, b, "cosine"), abs=1e-9)
    assert embedding_distance(a, a, "cosine") == pytest.approx(0.0, abs=1e-12)
    assert embedding_distance(a, a, "euclidean") == 0.0
    assert 0.0 <= embedding_distance(a, b, "cosine") <= 2.0


@settings(max_examples=200, deadline=None)
@given(vec)
def test_l2_normalize_idempotent(a):
    if not np.linalg.norm(a) > 1e-6:
        return
    once = l2_normalize(a)
    assert np.linalg.norm(once) == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(l2_normalize(once), once, atol=1e-9)
