"""Sliding-window streaming predictor over an ordered frame stream.

Keeps a ring buffer of the last `window` frames; once full, every pushed
frame triggers a forward pass on the current window. Consecutive probability
vectors are mean-smoothed over the last `smoothing_k` outputs and an event is
emitted whenever the smoothed maximum clears the confidence threshold.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .neural import Model, model_forward


@dataclass(frozen=True)
class PredictionEvent:
    frame_index: int
    label: str
    confidence: float
    raw_probs: tuple

    def to_json_dict(self):
        return {
            "frame": self.frame_index,
            "label": self.label,
            "confidence": self.confidence,
            "probs": list(self.raw_probs),
        }


class StreamPredictor:
    """Single-consumer streaming wrapper around a trained model."""

    def __init__(self, model: Model, classes, smoothing_k=10,
                 confidence_threshold=0.5):
        if smoothing_k < 1:
            raise ValueError("smoothing_k must be >= 1")
        if not (0.0 <= confidence_threshold <= 1.0):
            raise ValueError("confidence_threshold must be in [0, 1]")
        if len(classes) != model.config.class_count:
            raise ValueError(
                f"{len(classes)} class names for a {model.config.class_count}-class model"
            )
        self.model = model
        self.classes = list(classes)
        self.window = model.config.window
        self.smoothing_k = smoothing_k
        self.confidence_threshold = confidence_threshold
        self._buffer = deque(maxlen=self.window)
        self._prob_history = deque(maxlen=smoothing_k)
        self._frame_index = -1

    def push_frame(self, frame):
        """Feed one frame; returns a PredictionEvent or None.

        No events during warmup (fewer than `window` frames seen). The raw
        probability vector equals a batch forward pass on the same window
        bit-for-bit.
        """
        if hasattr(frame, "features"):
            frame = frame.features
        features = np.asarray(frame, dtype=np.float64)
        if features.shape != (self.model.config.input_dim,):
            raise ValueError(
                f"frame dim {features.shape} != model input dim "
                f"({self.model.config.input_dim},)"
            )
        self._frame_index += 1
        self._buffer.append(features)
        if len(self._buffer) < self.window:
            return None
        probs = model_forward(self.model, np.stack(self._buffer))
        self._prob_history.append(probs)
        smoothed = np.mean(self._prob_history, axis=0)
        confidence = float(np.max(smoothed))
        if confidence < self.confidence_threshold:
            return None
        label = self.classes[int(np.argmax(smoothed))]
        return PredictionEvent(self._frame_index, label, confidence, tuple(probs))


def run_stream(predictor: StreamPredictor, frames):
    """Fold push_frame over a frame source; returns the ordered event trace."""
    events = []
    for frame in frames:
        event = predictor.push_frame(frame)
        if event is not None:
            events.append(event)
    return events
