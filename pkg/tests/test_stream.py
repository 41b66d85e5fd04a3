import numpy as np
import pytest

from kpaction.neural import ModelConfig, init_params, model_forward
from kpaction.stream import PredictionEvent, StreamPredictor, run_stream
from kpaction.synthgen import (
    GestureSpec,
    SynthConfig,
    generate_evasion_sequence,
    generate_payment_sequence,
)
from kpaction.train_eval import TrainConfig, train
from kpaction.synthgen import generate_dataset

CLASSES = ["payment", "evasion"]


def tiny_model(window=6, dim=5, seed=0):
    return init_params(
        ModelConfig(input_dim=dim, window=window, lstm_hidden=(4,),
                    dense_hidden=(3,)), seed)


def random_frames(n, dim=5, seed=1):
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.normal(size=(n, dim))


class TestPredictorContract:
    def test_no_event_during_warmup(self):
        p = StreamPredictor(tiny_model(), CLASSES, smoothing_k=1,
                            confidence_threshold=0.0)
        frames = random_frames(5)
        for f in frames:
            assert p.push_frame(f) is None

    def test_degenerate_smoothing_emits_argmax_every_frame(self):
        model = tiny_model()
        p = StreamPredictor(model, CLASSES, smoothing_k=1, confidence_threshold=0.0)
        frames = random_frames(15)
        for t, f in enumerate(frames):
            event = p.push_frame(f)
            if t < 5:
                assert event is None
            else:
                window = frames[t - 5 : t + 1]
                probs = model_forward(model, window)
                assert event is not None
                assert event.frame_index == t
                assert event.label == CLASSES[int(np.argmax(probs))]

    def test_streaming_equals_batch_bit_for_bit(self):
        model = tiny_model(seed=3)
        p = StreamPredictor(model, CLASSES, smoothing_k=1, confidence_threshold=0.0)
        frames = random_frames(20, seed=4)
        for t, f in enumerate(frames):
            event = p.push_frame(f)
            if event is not None:
                batch = model_forward(model, frames[t - 5 : t + 1])
                np.testing.assert_array_equal(np.asarray(event.raw_probs), batch)

    def test_event_confidence_at_least_threshold(self):
        model = tiny_model(seed=5)
        p = StreamPredictor(model, CLASSES, smoothing_k=3, confidence_threshold=0.55)
        for f in random_frames(50, seed=6):
            event = p.push_frame(f)
            if event is not None:
                assert event.confidence >= 0.55

    def test_smoothing_is_mean_of_history(self):
        model = tiny_model(seed=7)
        k = 4
        p = StreamPredictor(model, CLASSES, smoothing_k=k, confidence_threshold=0.0)
        frames = random_frames(20, seed=8)
        history = []
        for t, f in enumerate(frames):
            event = p.push_frame(f)
            if t >= 5:
                history.append(model_forward(model, frames[t - 5 : t + 1]))
                smoothed = np.mean(history[-k:], axis=0)
                assert event.confidence == float(np.max(smoothed))

    def test_dimension_mismatch(self):
        p = StreamPredictor(tiny_model(), CLASSES)
        with pytest.raises(ValueError):
            p.push_frame(np.zeros(7))

    def test_bad_settings(self):
        with pytest.raises(ValueError):
            StreamPredictor(tiny_model(), CLASSES, smoothing_k=0)
        with pytest.raises(ValueError):
            StreamPredictor(tiny_model(), CLASSES, confidence_threshold=1.5)
        with pytest.raises(ValueError):
            StreamPredictor(tiny_model(), ["only_one"])


class TestRunStream:
    def test_empty_source(self):
        p = StreamPredictor(tiny_model(), CLASSES)
        assert run_stream(p, []) == []

    def test_equals_manual_fold(self):
        model = tiny_model(seed=9)
        frames = random_frames(30, seed=10)
        a = run_stream(StreamPredictor(model, CLASSES, 2, 0.0), frames)
        p = StreamPredictor(model, CLASSES, 2, 0.0)
        b = [e for e in (p.push_frame(f) for f in frames) if e is not None]
        assert a == b

    def test_event_indices_increase(self):
        model = tiny_model(seed=11)
        events = run_stream(StreamPredictor(model, CLASSES, 3, 0.0),
                            random_frames(40, seed=12))
        indices = [e.frame_index for e in events]
        assert indices == sorted(indices)

    def test_deterministic(self):
        model = tiny_model(seed=13)
        frames = random_frames(25, seed=14)
        a = run_stream(StreamPredictor(model, CLASSES, 3, 0.4), frames)
        b = run_stream(StreamPredictor(model, CLASSES, 3, 0.4), frames)
        assert a == b


def trained_on_gestures(window=10, n_per_class=30, epochs=20):
    cfg = SynthConfig(gesture=GestureSpec(duration_frames=window,
                                          noise_sigma=0.01), window=window)
    ds = generate_dataset(cfg, n_per_class, seed=21)
    model, _ = train(ds, TrainConfig(epochs=epochs, batch_size=16, seed=21))
    return cfg, model


class TestGestureStream:
    def test_concatenated_windows_mostly_ground_truth(self):
        cfg, model = trained_on_gestures()
        window = cfg.window
        chunks, truth = [], []
        for i in range(5):
            chunks.append(generate_payment_sequence(cfg, 100 + i).feature_matrix())
            truth += ["payment"] * window
        for i in range(5):
            chunks.append(generate_evasion_sequence(cfg, 200 + i).feature_matrix())
            truth += ["evasion"] * window
        frames = np.concatenate(chunks)
        p = StreamPredictor(model, CLASSES, smoothing_k=1, confidence_threshold=0.0)
        events = run_stream(p, frames)
        # score frames outside a window-wide zone around the label transition
        boundaries = [window * 5]
        scored = correct = 0
        for e in events:
            if any(b - window < e.frame_index < b + window for b in boundaries):
                continue
            scored += 1
            correct += e.label == truth[e.frame_index]
        assert scored > 0
        assert correct / scored >= 0.9

    def test_high_threshold_suppresses_noise_stream(self):
        cfg, model = trained_on_gestures()
        rng = np.random.Generator(np.random.PCG64(33))
        noise = rng.uniform(0, 1, size=(80, 132))  # no trained-gesture structure
        p = StreamPredictor(model, CLASSES, smoothing_k=10, confidence_threshold=0.9)
        events = run_stream(p, noise)
        post_warmup = 80 - cfg.window + 1
        assert len(events) < post_warmup / 2


class TestEvent:
    def test_json_dict_shape(self):
        e = PredictionEvent(7, "payment", 0.9, (0.9, 0.1))
        d = e.to_json_dict()
        assert d == {"frame": 7, "label": "payment", "confidence": 0.9,
                     "probs": [0.9, 0.1]}
