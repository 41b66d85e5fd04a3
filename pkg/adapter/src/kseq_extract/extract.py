"""Video to .kseq extraction.

Frames are sampled at the target rate by nearest-source-frame selection (no
interpolation). Each sampled frame runs through the holistic backend; the
per-segment landmark arrays are flattened in the documented order into one
feature line. Frames with no detected person become all-zero lines.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import cv2
import numpy as np

from .backends import SEGMENTS, make_backend

LAYOUTS = {
    "holistic_full": SEGMENTS,
    "pose_only": [("pose", 33, 4)],
}


class ExtractionError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExtractionJob:
    video_path: str
    target_fps: float
    layout: str = "holistic_full"
    output_path: str = "out.kseq"
    label: str | None = None
    classes: tuple = ("payment", "evasion")
    backend: str = "mediapipe"

    def __post_init__(self):
        if self.target_fps <= 0:
            raise ValueError("target_fps must be positive")
        if self.layout not in LAYOUTS:
            raise ValueError(f"layout must be one of {sorted(LAYOUTS)}")
        if self.label is not None and self.label not in self.classes:
            raise ValueError(f"label {self.label!r} not in classes {self.classes}")


def layout_dim(layout: str) -> int:
    return sum(c * v for (_, c, v) in LAYOUTS[layout])


def flatten_landmarks(detection, layout: str) -> np.ndarray:
    """Per-segment arrays to one flat feature vector; None means all zeros."""
    dim = layout_dim(layout)
    if detection is None:
        return np.zeros(dim)
    parts = []
    for name, count, vals in LAYOUTS[layout]:
        arr = np.asarray(detection[name], dtype=np.float64)
        if arr.shape != (count, vals):
            raise ExtractionError(
                f"backend returned {arr.shape} for segment {name}, "
                f"expected {(count, vals)}")
        parts.append(arr.reshape(-1))
    return np.concatenate(parts)


def sample_indices(frame_count: int, source_fps: float, target_fps: float):
    """Nearest source frame for each target-rate tick."""
    if target_fps > source_fps:
        raise ExtractionError(
            f"target fps {target_fps} exceeds source fps {source_fps}")
    indices = []
    t = 0.0
    duration = frame_count / source_fps
    while t < duration:
        idx = int(round(t * source_fps))
        if idx >= frame_count:
            break
        indices.append(idx)
        t += 1.0 / target_fps
    return indices


def _render(x: float):
    return float(x)


def write_kseq(path, layout: str, fps: float, label, classes, rows):
    """rows: iterable of (timestamp, feature vector). Matches the engine's
    canonical .kseq rendering (shortest round-tripping decimals)."""
    header = {
        "version": 1,
        "layout": [[n, c, v] for (n, c, v) in LAYOUTS[layout]],
        "fps": _render(fps),
        "label": label,
        "classes": list(classes) if label is not None else None,
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    for t, feats in rows:
        lines.append(json.dumps([_render(t)] + [_render(x) for x in feats],
                                separators=(",", ":")))
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))


def extract_video(job: ExtractionJob, backend=None) -> str:
    """Run one video through the backend; writes job.output_path."""
    cap = cv2.VideoCapture(job.video_path)
    if not cap.isOpened():
        raise ExtractionError(f"cannot open video {job.video_path}")
    own_backend = backend is None
    if own_backend:
        backend = make_backend(job.backend)
    try:
        source_fps = cap.get(cv2.CAP_PROP_FPS) or 0.0
        if source_fps <= 0:
            raise ExtractionError(f"{job.video_path}: unknown source fps")
        frame_count = int(cap.get(cv2.CAP_PROP_FRAME_COUNT))
        wanted = set(sample_indices(frame_count, source_fps, job.target_fps))
        rows = []
        idx = 0
        tick = 0
        while True:
            ok, frame = cap.read()
            if not ok:
                break
            if idx in wanted:
                feats = flatten_landmarks(backend.process(frame), job.layout)
                rows.append((tick / job.target_fps, feats))
                tick += 1
            idx += 1
        if not rows:
            raise ExtractionError(f"{job.video_path}: zero frames extracted")
        write_kseq(job.output_path, job.layout, job.target_fps, job.label,
                   job.classes, rows)
        return job.output_path
    finally:
        cap.release()
        if own_backend:
            backend.close()


VIDEO_EXTENSIONS = (".mp4", ".avi", ".mov", ".mkv", ".webm")


def batch_extract(video_dir, out_dir, target_fps, layout="holistic_full",
                  backend_name="mediapipe"):
    """Extract every video under class-named subfolders of video_dir.

    Per-file failures are collected, not fatal. Returns (written file names,
    error list); writes a manifest.json naming all outputs and classes.
    """
    classes = sorted(
        d for d in os.listdir(video_dir)
        if os.path.isdir(os.path.join(video_dir, d)))
    if not classes:
        raise ExtractionError(f"no class subfolders under {video_dir}")
    os.makedirs(out_dir, exist_ok=True)
    backend = make_backend(backend_name)
    written, errors = [], []
    try:
        for cls in classes:
            cls_dir = os.path.join(video_dir, cls)
            for name in sorted(os.listdir(cls_dir)):
                if not name.lower().endswith(VIDEO_EXTENSIONS):
                    continue
                stem = os.path.splitext(name)[0]
                out_name = f"{cls}_{stem}.kseq"
                job = ExtractionJob(
                    video_path=os.path.join(cls_dir, name),
                    target_fps=target_fps, layout=layout,
                    output_path=os.path.join(out_dir, out_name),
                    label=cls, classes=tuple(classes), backend=backend_name)
                try:
                    extract_video(job, backend=backend)
                    written.append(out_name)
                except ExtractionError as e:
                    errors.append(f"{cls}/{name}: {e}")
    finally:
        backend.close()
    manifest = {"classes": classes, "files": written}
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return written, errors
