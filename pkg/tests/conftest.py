import numpy as np
import pytest

from kpaction.keypoints import LandmarkLayout, FrameVector, KeypointSequence
from kpaction.synthgen import GestureSpec, SynthConfig


@pytest.fixture
def tiny_layout():
    return LandmarkLayout((("pose", 2, 2),))


@pytest.fixture
def small_synth_cfg():
    # 10-frame windows keep generator-heavy tests quick
    return SynthConfig(
        gesture=GestureSpec(duration_frames=10, noise_sigma=0.0), window=10
    )


def make_sequence(layout, n_frames, fps=10.0, label=None, classes=None, seed=0):
    rng = np.random.Generator(np.random.PCG64(seed))
    frames = tuple(
        FrameVector(t / fps, rng.uniform(-1, 1, layout.total_dim))
        for t in range(n_frames)
    )
    return KeypointSequence(layout, fps, frames, label, classes)
