"""Keypoint sequence data model, .kseq file I/O, windowing and dataset splitting.

A sequence is a fixed-layout series of per-frame feature vectors (flattened
landmark coordinates) at a known frame rate, optionally labeled with a class.
Sequences live on disk as ".kseq" files: one JSON header line followed by one
JSON array per frame. A dataset is a directory of .kseq files plus a
manifest.json naming the files and the class list.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

KSEQ_VERSION = 1

DEFAULT_CLASSES = ["payment", "evasion"]

# MediaPipe-holistic style layouts. pose landmarks carry (x, y, z, visibility);
# face and hands carry (x, y, z).
HOLISTIC_FULL_SEGMENTS = [
    ("pose", 33, 4),
    ("face", 468, 3),
    ("left_hand", 21, 3),
    ("right_hand", 21, 3),
]
POSE_ONLY_SEGMENTS = [("pose", 33, 4)]


class KseqError(ValueError):
    """Malformed .kseq content. Carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class LandmarkLayout:
    """Ordered landmark segments; each segment is (name, count, values_per_landmark)."""

    segments: tuple

    def __post_init__(self):
        segs = tuple((str(n), int(c), int(v)) for (n, c, v) in self.segments)
        object.__setattr__(self, "segments", segs)
        names = [s[0] for s in segs]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate segment names in layout: {names}")
        for name, count, vals in segs:
            if count < 1 or vals < 1:
                raise ValueError(f"segment {name!r}: counts must be >= 1")

    @property
    def total_dim(self):
        return sum(c * v for (_, c, v) in self.segments)

    @property
    def landmark_count(self):
        return sum(c for (_, c, _) in self.segments)

    def landmark_slice(self, index):
        """(feature offset, values_per_landmark) for a global landmark index."""
        if index < 0:
            raise IndexError(f"landmark index {index} out of range")
        offset = 0
        for _, count, vals in self.segments:
            if index < count:
                return offset + index * vals, vals
            offset += count * vals
            index -= count
        raise IndexError(f"landmark index out of range (layout has {self.landmark_count})")


def holistic_full_layout():
    return LandmarkLayout(tuple(HOLISTIC_FULL_SEGMENTS))


def pose_only_layout():
    return LandmarkLayout(tuple(POSE_ONLY_SEGMENTS))


@dataclass(frozen=True)
class FrameVector:
    """One frame: timestamp in seconds plus the flattened feature vector."""

    timestamp_s: float
    features: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        object.__setattr__(self, "features", feats)
        if self.timestamp_s < 0:
            raise ValueError(f"negative timestamp {self.timestamp_s}")
        if not math.isfinite(self.timestamp_s):
            raise ValueError("non-finite timestamp")
        if not np.all(np.isfinite(feats)):
            raise ValueError("non-finite feature value")


@dataclass(frozen=True)
class KeypointSequence:
    """A fixed-layout run of frames at a known fps, optionally labeled.

    `label` is a class index into `class_names` when both are set; the .kseq
    header stores the class name, not the index.
    """

    layout: LandmarkLayout
    fps: float
    frames: tuple
    label: int | None = None
    class_names: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if self.class_names is not None:
            object.__setattr__(self, "class_names", tuple(self.class_names))
        if not (self.fps > 0):
            raise ValueError(f"fps must be positive, got {self.fps}")
        dim = self.layout.total_dim
        prev_t = -math.inf
        for i, f in enumerate(self.frames):
            if f.features.shape != (dim,):
                raise ValueError(
                    f"frame {i}: feature length {f.features.shape[0]} != layout dim {dim}"
                )
            if f.timestamp_s <= prev_t:
                raise ValueError(f"frame {i}: timestamps not strictly increasing")
            prev_t = f.timestamp_s
        if self.label is not None:
            if self.class_names is None:
                raise ValueError("label set without class_names")
            if not (0 <= self.label < len(self.class_names)):
                raise ValueError(f"label {self.label} out of range")

    def __len__(self):
        return len(self.frames)

    def feature_matrix(self):
        """Frames stacked as a [T, D] float64 array."""
        if not self.frames:
            return np.zeros((0, self.layout.total_dim))
        return np.stack([f.features for f in self.frames])

    def label_name(self):
        if self.label is None:
            return None
        return self.class_names[self.label]


@dataclass
class Dataset:
    """Labeled sequences sharing one layout and window length."""

    classes: list
    sequences: list = field(default_factory=list)

    def __post_init__(self):
        if self.sequences:
            first = self.sequences[0]
            for i, s in enumerate(self.sequences):
                if s.label is None:
                    raise ValueError(f"sequence {i} unlabeled")
                if s.label >= len(self.classes):
                    raise ValueError(f"sequence {i}: label {s.label} out of range")
                if s.layout != first.layout:
                    raise ValueError(f"sequence {i}: layout differs")
                if len(s) != len(first):
                    raise ValueError(f"sequence {i}: frame count differs")

    def __len__(self):
        return len(self.sequences)

    def class_counts(self):
        counts = [0] * len(self.classes)
        for s in self.sequences:
            counts[s.label] += 1
        return counts


def _render_float(x):
    # json.dumps renders via repr: the shortest decimal that round-trips to
    # the same 64-bit float, which is our canonical form.
    return float(x)


def parse_sequence_file(data: bytes) -> KeypointSequence:
    """Parse .kseq bytes into a validated KeypointSequence.

    Errors name the offending 1-based line (header is line 1).
    """
    text = data.decode("utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise KseqError("empty file", line=1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise KseqError(f"malformed header JSON: {e}", line=1) from e
    if not isinstance(header, dict):
        raise KseqError("header is not a JSON object", line=1)
    required = {"version", "layout", "fps", "label", "classes"}
    missing = required - header.keys()
    if missing:
        raise KseqError(f"header missing keys {sorted(missing)}", line=1)
    unknown = header.keys() - required
    if unknown:
        raise KseqError(f"header has unknown keys {sorted(unknown)}", line=1)
    if header["version"] != KSEQ_VERSION:
        raise KseqError(f"unsupported version {header['version']}", line=1)
    try:
        layout = LandmarkLayout(tuple((n, c, v) for n, c, v in header["layout"]))
    except (ValueError, TypeError) as e:
        raise KseqError(f"bad layout: {e}", line=1) from e
    fps = header["fps"]
    if not isinstance(fps, (int, float)) or not fps > 0:
        raise KseqError(f"bad fps {fps!r}", line=1)
    classes = header["classes"]
    label_name = header["label"]
    label = None
    if label_name is not None:
        if classes is None or label_name not in classes:
            raise KseqError(f"label {label_name!r} not in classes {classes!r}", line=1)
        label = classes.index(label_name)

    dim = layout.total_dim
    frames = []
    prev_t = -math.inf
    for lineno, raw in enumerate(lines[1:], start=2):
        try:
            row = json.loads(raw)
        except json.JSONDecodeError as e:
            raise KseqError(f"malformed frame JSON: {e}", line=lineno) from e
        if not isinstance(row, list):
            raise KseqError("frame line is not a JSON array", line=lineno)
        if len(row) != dim + 1:
            raise KseqError(
                f"frame has {len(row) - 1} features, layout requires {dim}", line=lineno
            )
        try:
            vals = np.asarray(row, dtype=np.float64)
        except (ValueError, TypeError) as e:
            raise KseqError(f"non-numeric value: {e}", line=lineno) from e
        if not np.all(np.isfinite(vals)):
            raise KseqError("non-finite value", line=lineno)
        t = float(vals[0])
        if t < 0:
            raise KseqError(f"negative timestamp {t}", line=lineno)
        if t <= prev_t:
            raise KseqError(f"timestamp {t} not greater than previous {prev_t}", line=lineno)
        prev_t = t
        frames.append(FrameVector(t, vals[1:]))

    return KeypointSequence(
        layout=layout,
        fps=float(fps),
        frames=tuple(frames),
        label=label,
        class_names=tuple(classes) if classes is not None else None,
    )


def write_sequence_file(seq: KeypointSequence) -> bytes:
    """Canonical .kseq serialization; parse(write(s)) == s exactly."""
    header = {
        "version": KSEQ_VERSION,
        "layout": [[n, c, v] for (n, c, v) in seq.layout.segments],
        "fps": _render_float(seq.fps),
        "label": seq.label_name(),
        "classes": list(seq.class_names) if seq.class_names is not None else None,
    }
    out = [json.dumps(header, separators=(",", ":"))]
    for f in seq.frames:
        row = [_render_float(f.timestamp_s)] + [_render_float(x) for x in f.features]
        out.append(json.dumps(row, separators=(",", ":")))
    return ("\n".join(out) + "\n").encode("utf-8")


def normalize_sequence(seq: KeypointSequence, reference: int) -> KeypointSequence:
    """Recenter every frame on one landmark.

    Per frame, the reference landmark's (x, y) is subtracted from every
    landmark's (x, y); values beyond the first two per landmark (depth,
    visibility) are left untouched.
    """
    ref_off, ref_vals = seq.layout.landmark_slice(reference)
    if ref_vals < 2:
        raise ValueError(f"reference landmark {reference} has fewer than 2 values")
    slices = [seq.layout.landmark_slice(i) for i in range(seq.layout.landmark_count)]
    frames = []
    for f in seq.frames:
        feats = f.features.copy()
        ref_xy = feats[ref_off : ref_off + 2].copy()
        for off, vals in slices:
            if vals >= 2:
                feats[off : off + 2] -= ref_xy
        frames.append(FrameVector(f.timestamp_s, feats))
    return KeypointSequence(seq.layout, seq.fps, tuple(frames), seq.label, seq.class_names)


def window_stream(frames, window: int, stride: int = 1):
    """All length-`window` runs of consecutive frames, every `stride` frames.

    Returns floor((N - window)/stride) + 1 windows for N >= window, else [].
    """
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be >= 1")
    frames = list(frames)
    n = len(frames)
    if n < window:
        return []
    return [frames[start : start + window] for start in range(0, n - window + 1, stride)]


def split_dataset(ds: Dataset, train_fraction: float, seed: int):
    """Stratified, seeded train/test split.

    Per class, round(train_fraction * count) sequences go to train, with .5
    ties rounded down. Shuffling is a pure function of `seed`.
    """
    if not (0.0 <= train_fraction <= 1.0):
        raise ValueError(f"train_fraction {train_fraction} outside [0, 1]")
    if not ds.sequences:
        raise ValueError("empty dataset")
    rng = np.random.Generator(np.random.PCG64(seed))
    train, test = [], []
    for k in range(len(ds.classes)):
        idx = [i for i, s in enumerate(ds.sequences) if s.label == k]
        perm = rng.permutation(len(idx))
        n_train = math.ceil(train_fraction * len(idx) - 0.5)  # round, ties down
        for j, p in enumerate(perm):
            (train if j < n_train else test).append(idx[p])
    train_ds = Dataset(list(ds.classes), [ds.sequences[i] for i in sorted(train)])
    test_ds = Dataset(list(ds.classes), [ds.sequences[i] for i in sorted(test)])
    return train_ds, test_ds


def save_dataset(ds: Dataset, out_dir):
    """Write one .kseq per sequence plus manifest.json; returns file names."""
    os.makedirs(out_dir, exist_ok=True)
    names = []
    width = max(4, len(str(max(len(ds.sequences) - 1, 0))))
    for i, seq in enumerate(ds.sequences):
        name = f"{ds.classes[seq.label]}_{i:0{width}d}.kseq"
        with open(os.path.join(out_dir, name), "wb") as fh:
            fh.write(write_sequence_file(seq))
        names.append(name)
    manifest = {"classes": list(ds.classes), "files": names}
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return names


def load_dataset(data_dir) -> Dataset:
    """Load a dataset directory written by save_dataset."""
    manifest_path = os.path.join(data_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise FileNotFoundError(f"missing manifest: {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    classes = manifest["classes"]
    sequences = []
    for name in manifest["files"]:
        with open(os.path.join(data_dir, name), "rb") as fh:
            seq = parse_sequence_file(fh.read())
        if seq.label is None:
            raise ValueError(f"{name}: unlabeled sequence in dataset")
        if list(seq.class_names) != list(classes):
            raise ValueError(f"{name}: class list differs from manifest")
        sequences.append(seq)
    return Dataset(list(classes), sequences)
