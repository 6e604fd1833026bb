import numpy as np
import pytest

from dtwin.backends import default_registry, resolve_backends
from dtwin.core import FrameImage, VideoClip
from dtwin.pipeline import PipelineConfig
from dtwin import synthworld

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def backends():
    return resolve_backends(default_registry(), PipelineConfig().backend_names())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def solid_clip(n=3, h=64, w=64, fps=25.0, value=0.5, clip_id="solid"):
    frames = tuple(FrameImage(np.full((h, w, 3), value), i) for i in range(n))
    return VideoClip(frames, fps=fps, clip_id=clip_id)


@pytest.fixture
def gaze_traj():
    return synthworld.make_trajectory("gaze_variation", 12, seed=3)


@pytest.fixture
def gaze_clip(gaze_traj):
    return synthworld.trajectory_clip(gaze_traj, (64, 64), clip_id="gaze")
