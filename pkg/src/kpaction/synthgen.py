"""Deterministic synthetic keypoint sequences: payment vs. evasion gestures.

Stands in for real passenger footage. A "payment" walker raises the right
wrist along a raised-cosine arc that touches the card-reader position at the
mid-frame; an "evasion" walker passes the reader with a small natural arm
swing and never reaches for it. An order-probe variant builds class pairs
whose frames are the same multiset in opposite order, so time-pooled features
are uninformative by construction.

All randomness flows through splitmix64-derived PCG64 streams, so datasets
are bit-reproducible across platforms from (seed, stream) alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .keypoints import (
    DEFAULT_CLASSES,
    Dataset,
    FrameVector,
    KeypointSequence,
    LandmarkLayout,
    pose_only_layout,
)

# Pose-segment landmark indices (MediaPipe pose numbering).
LEFT_WRIST = 15
RIGHT_WRIST = 16
LEFT_HIP = 23
RIGHT_HIP = 24

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> int:
    """One splitmix64 output step for 64-bit stream derivation."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for (seed, stream); pure function of both."""
    mixed = splitmix64((seed & _MASK64) ^ splitmix64(stream & _MASK64))
    return np.random.Generator(np.random.PCG64(mixed))


@dataclass(frozen=True)
class GestureSpec:
    """Geometry of one synthetic pass by the card reader."""

    reader_position: tuple = (0.7, 0.35)
    arc_amplitude: float = 0.9
    duration_frames: int = 30
    noise_sigma: float = 0.01
    walk_speed: float = 0.01

    def __post_init__(self):
        x, y = self.reader_position
        if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
            raise ValueError(f"reader_position {self.reader_position} outside [0,1]^2")
        if self.duration_frames < 2:
            raise ValueError("duration_frames must be >= 2")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


@dataclass(frozen=True)
class SynthConfig:
    layout: LandmarkLayout = field(default_factory=pose_only_layout)
    fps: float = 10.0
    window: int = 30
    gesture: GestureSpec = field(default_factory=GestureSpec)
    seed: int = 0

    def __post_init__(self):
        if self.window != self.gesture.duration_frames:
            raise ValueError(
                f"window {self.window} != gesture duration {self.gesture.duration_frames}"
            )


def _rest_pose(layout: LandmarkLayout) -> np.ndarray:
    """Fixed standing pose: per-landmark (x, y) on a body-like grid, extras 0.5."""
    feats = np.zeros(layout.total_dim)
    idx = 0
    for _, count, vals in layout.segments:
        for j in range(count):
            # deterministic but varied placement, independent of any seed
            feats[idx] = 0.3 + 0.15 * np.sin(2.1 * j)
            if vals >= 2:
                feats[idx + 1] = 0.5 + 0.2 * np.cos(1.3 * j)
            for k in range(2, vals):
                feats[idx + k] = 0.5
            idx += vals
    return feats


def _wrist_offsets(layout):
    off_r, _ = layout.landmark_slice(RIGHT_WRIST)
    off_l, _ = layout.landmark_slice(LEFT_WRIST)
    return off_r, off_l


def _base_trajectory(cfg: SynthConfig):
    """[T, D] noiseless walking body: rest pose translating in x past the reader.

    Anchored so the right wrist's x crosses the reader x exactly at the
    (continuous) mid-frame; the approach is symmetric around it.
    """
    g = cfg.gesture
    T = g.duration_frames
    rest = _rest_pose(cfg.layout)
    off_r, _ = _wrist_offsets(cfg.layout)
    mid = (T - 1) / 2.0
    frames = np.tile(rest, (T, 1))
    for t in range(T):
        dx = g.walk_speed * (t - mid) + (g.reader_position[0] - rest[off_r])
        # translate every landmark's x by the same walk offset
        idx = 0
        for _, count, vals in cfg.layout.segments:
            for _ in range(count):
                frames[t, idx] += dx
                idx += vals
    return frames


def _payment_frames(cfg: SynthConfig) -> np.ndarray:
    """Right wrist sweeps to the reader on a raised-cosine, peaking mid-frame."""
    g = cfg.gesture
    T = g.duration_frames
    frames = _base_trajectory(cfg)
    off_r, _ = _wrist_offsets(cfg.layout)
    reader = np.asarray(g.reader_position)
    for t in range(T):
        alpha = 0.5 * (1.0 - np.cos(2.0 * np.pi * t / (T - 1)))
        wrist = frames[t, off_r : off_r + 2]
        frames[t, off_r : off_r + 2] = wrist + g.arc_amplitude * alpha * (reader - wrist)
    return frames


def _evasion_frames(cfg: SynthConfig) -> np.ndarray:
    """No reach: both wrists swing sinusoidally in x at constant height."""
    g = cfg.gesture
    T = g.duration_frames
    frames = _base_trajectory(cfg)
    off_r, off_l = _wrist_offsets(cfg.layout)
    swing = 0.05
    for t in range(T):
        phase = np.sin(2.0 * np.pi * t / T)
        frames[t, off_r] += swing * phase
        frames[t, off_l] -= swing * phase
    return frames


def _to_sequence(cfg: SynthConfig, frames: np.ndarray, label: int,
                 rng: np.random.Generator) -> KeypointSequence:
    noisy = frames + rng.normal(0.0, cfg.gesture.noise_sigma, size=frames.shape)
    fvs = tuple(
        FrameVector(t / cfg.fps, noisy[t]) for t in range(frames.shape[0])
    )
    return KeypointSequence(cfg.layout, cfg.fps, fvs, label, tuple(DEFAULT_CLASSES))


def generate_payment_sequence(cfg: SynthConfig, rng_stream: int) -> KeypointSequence:
    rng = derive_stream_rng(cfg.seed, rng_stream)
    return _to_sequence(cfg, _payment_frames(cfg), DEFAULT_CLASSES.index("payment"), rng)


def generate_evasion_sequence(cfg: SynthConfig, rng_stream: int) -> KeypointSequence:
    rng = derive_stream_rng(cfg.seed, rng_stream)
    return _to_sequence(cfg, _evasion_frames(cfg), DEFAULT_CLASSES.index("evasion"), rng)


def generate_dataset(cfg: SynthConfig, n_per_class: int, seed: int) -> Dataset:
    """Balanced payment/evasion dataset, deterministic in `seed`."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    cfg = SynthConfig(cfg.layout, cfg.fps, cfg.window, cfg.gesture, seed)
    sequences = []
    for i in range(n_per_class):
        sequences.append(generate_payment_sequence(cfg, 2 * i))
        sequences.append(generate_evasion_sequence(cfg, 2 * i + 1))
    return Dataset(list(DEFAULT_CLASSES), sequences)


def _probe_segments(cfg: SynthConfig, pair_rng: np.random.Generator):
    """Two contrasting half-window sub-gestures with small per-pair variation.

    X holds the right wrist raised high; Y holds it dropped low. The heights
    get a per-pair jitter so noiseless sequences still differ across pairs.
    Heights are dyadic (k/1024) so the time-averaged features of the two
    segment orders are bit-identical, not just close.
    """
    g = cfg.gesture
    half = g.duration_frames // 2
    rest = _rest_pose(cfg.layout)
    off_r, _ = _wrist_offsets(cfg.layout)
    jitter = pair_rng.integers(-20, 21, size=2) / 1024.0
    seg_x = np.tile(rest, (half, 1))
    seg_x[:, off_r + 1] = 0.25 + jitter[0]
    seg_y = np.tile(rest, (half, 1))
    seg_y[:, off_r + 1] = 0.75 + jitter[1]
    return seg_x, seg_y


def generate_order_probe_dataset(cfg: SynthConfig, n_per_class: int, seed: int) -> Dataset:
    """Class pairs that differ only in segment order (X then Y vs. Y then X).

    Paired sequences share the same frame multiset before noise, so their
    time-averaged feature vectors are exactly equal at noise_sigma=0.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if cfg.window % 2 != 0:
        raise ValueError("order probe requires an even window")
    cfg = SynthConfig(cfg.layout, cfg.fps, cfg.window, cfg.gesture, seed)
    sequences = []
    for i in range(n_per_class):
        pair_rng = derive_stream_rng(seed, 1_000_000 + i)
        seg_x, seg_y = _probe_segments(cfg, pair_rng)
        frames_a = np.concatenate([seg_x, seg_y])
        frames_b = np.concatenate([seg_y, seg_x])
        rng_a = derive_stream_rng(seed, 2 * i)
        rng_b = derive_stream_rng(seed, 2 * i + 1)
        sequences.append(_to_sequence(cfg, frames_a, 0, rng_a))
        sequences.append(_to_sequence(cfg, frames_b, 1, rng_b))
    return Dataset(list(DEFAULT_CLASSES), sequences)
