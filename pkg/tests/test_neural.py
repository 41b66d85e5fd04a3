import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpaction.neural import (
    MLP_BASELINE,
    AdamState,
    LstmState,
    Model,
    ModelConfig,
    adam_step,
    batch_loss_and_grads,
    dense_forward,
    gradient_check,
    init_params,
    lstm_cell_forward,
    model_backward,
    model_forward,
    pool_sequence,
    relu,
    sigmoid,
    softmax,
    tiny_gradcheck_config,
)
from kpaction.synthgen import SynthConfig, GestureSpec, generate_order_probe_dataset


class TestActivations:
    def test_relu_basic(self):
        np.testing.assert_array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0, 0, 2])

    def test_relu_all_negative(self):
        np.testing.assert_array_equal(relu(np.array([-3.0, -0.5])), [0, 0])

    def test_relu_idempotent(self):
        x = np.linspace(-5, 5, 101)
        np.testing.assert_array_equal(relu(relu(x)), relu(x))

    def test_softmax_symmetry(self):
        np.testing.assert_allclose(softmax(np.array([0.0, 0.0])), [0.5, 0.5])

    def test_softmax_analytic(self):
        p = softmax(np.array([math.log(2), 0.0]))
        np.testing.assert_allclose(p, [2 / 3, 1 / 3], rtol=1e-14)

    def test_softmax_no_overflow(self):
        p = softmax(np.array([1000.0, 0.0]))
        assert np.all(np.isfinite(p))
        np.testing.assert_allclose(p, [1.0, 0.0], atol=1e-300)

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=6),
           st.floats(-100, 100))
    @settings(max_examples=200, deadline=None)
    def test_softmax_properties(self, xs, shift):
        x = np.asarray(xs)
        p = softmax(x)
        # strictly inside (0,1) mathematically; fp rounds to 1.0 for gaps > ~36
        assert np.all(p > 0) and np.all(p <= 1)
        assert abs(p.sum() - 1.0) < 1e-12
        np.testing.assert_allclose(softmax(x - shift), p, atol=1e-12)

    def test_sigmoid_extremes_finite(self):
        assert sigmoid(np.array([-1000.0]))[0] == 0.0
        assert sigmoid(np.array([1000.0]))[0] == 1.0


class TestDense:
    def test_identity(self):
        x = np.array([1.0, 2.0])
        np.testing.assert_array_equal(dense_forward(np.eye(2), np.zeros(2), x), x)

    def test_arithmetic(self):
        W = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(
            dense_forward(W, np.zeros(2), np.array([1.0, 1.0])), [3, 7])

    def test_zero_weights_gives_bias(self):
        b = np.array([5.0, -2.0])
        np.testing.assert_array_equal(
            dense_forward(np.zeros((2, 3)), b, np.ones(3)), b)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            dense_forward(np.eye(2), np.zeros(2), np.ones(3))


def scalar_lstm_reference(wx, wh, b, x, h, c):
    """Hand-unrolled H=D=1 cell, written against the gate equations directly."""
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    i = sig(wx[0] * x + wh[0] * h + b[0])
    f = sig(wx[1] * x + wh[1] * h + b[1])
    g = math.tanh(wx[2] * x + wh[2] * h + b[2])
    o = sig(wx[3] * x + wh[3] * h + b[3])
    c_new = f * c + i * g
    h_new = o * math.tanh(c_new)
    return h_new, c_new


class TestLstmCell:
    def test_zero_params_zero_state(self):
        H = 3
        state = LstmState(np.zeros((1, H)), np.zeros((1, H)))
        new, cache = lstm_cell_forward(
            np.zeros((4 * H, 2)), np.zeros((4 * H, H)), np.zeros(4 * H),
            np.zeros((1, 2)), state)
        np.testing.assert_array_equal(new.hidden, np.zeros((1, H)))
        np.testing.assert_array_equal(new.cell, np.zeros((1, H)))
        np.testing.assert_allclose(cache["i"], 0.5)
        np.testing.assert_allclose(cache["g"], 0.0)

    def test_matches_scalar_reference(self):
        wx = np.array([0.3, -0.7, 1.1, 0.2])
        wh = np.array([-0.4, 0.6, -0.1, 0.9])
        b = np.array([0.1, 1.0, -0.2, 0.05])
        x, h, c = 0.7, -0.3, 0.4
        state = LstmState(np.array([[h]]), np.array([[c]]))
        new, _ = lstm_cell_forward(
            wx.reshape(4, 1), wh.reshape(4, 1), b, np.array([[x]]), state)
        h_ref, c_ref = scalar_lstm_reference(wx, wh, b, x, h, c)
        assert abs(new.hidden[0, 0] - h_ref) < 1e-12
        assert abs(new.cell[0, 0] - c_ref) < 1e-12

    def test_gate_ranges(self):
        rng = np.random.Generator(np.random.PCG64(0))
        H, D = 4, 3
        state = LstmState(rng.normal(size=(5, H)), rng.normal(size=(5, H)))
        _, cache = lstm_cell_forward(
            rng.normal(size=(4 * H, D)), rng.normal(size=(4 * H, H)),
            rng.normal(size=4 * H), rng.normal(size=(5, D)), state)
        for gate in ("i", "f", "o"):
            assert np.all(cache[gate] > 0) and np.all(cache[gate] < 1)
        assert np.all(cache["g"] > -1) and np.all(cache["g"] < 1)

    def test_cell_growth_bounded(self):
        # |c_t| <= |c_{t-1}| + 1 since i*g is in (-1, 1) and f in (0, 1)
        rng = np.random.Generator(np.random.PCG64(1))
        H = 4
        state = LstmState(np.zeros((1, H)), np.zeros((1, H)))
        wx = rng.normal(size=(4 * H, 2))
        wh = rng.normal(size=(4 * H, H))
        b = rng.normal(size=4 * H)
        for _ in range(20):
            prev = state.cell.copy()
            state, _ = lstm_cell_forward(wx, wh, b, rng.normal(size=(1, 2)), state)
            assert np.all(np.abs(state.cell) <= np.abs(prev) + 1 + 1e-12)


class TestPool:
    def test_constant_sequence_mean(self):
        seq = np.tile(np.array([1.0, 2.0, 3.0]), (5, 1))
        np.testing.assert_array_equal(pool_sequence(seq, "mean"), [1, 2, 3])

    def test_flatten_length(self):
        seq = np.arange(12.0).reshape(4, 3)
        flat = pool_sequence(seq, "flatten")
        assert flat.shape == (12,)
        np.testing.assert_array_equal(flat, np.arange(12.0))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            pool_sequence(np.zeros((0, 3)))

    def test_probe_pair_means_equal(self):
        cfg = SynthConfig(gesture=GestureSpec(duration_frames=10, noise_sigma=0.0),
                          window=10)
        ds = generate_order_probe_dataset(cfg, 2, seed=0)
        a, b = ds.sequences[0], ds.sequences[1]
        np.testing.assert_array_equal(
            pool_sequence(a.feature_matrix(), "mean"),
            pool_sequence(b.feature_matrix(), "mean"))


def small_config(kind="lstm_classifier", **kw):
    defaults = dict(kind=kind, input_dim=6, window=4, class_count=2,
                    lstm_hidden=(5,), dense_hidden=(4,))
    defaults.update(kw)
    return ModelConfig(**defaults)


class TestModelForward:
    def test_zero_head_gives_uniform(self):
        model = init_params(small_config(), 0)
        for name in list(model.params):
            if name.startswith("dense"):
                model.params[name] = np.zeros_like(model.params[name])
        probs = model_forward(model, np.zeros((4, 6)))
        np.testing.assert_allclose(probs, [0.5, 0.5])

    def test_valid_distribution_on_random_inputs(self):
        model = init_params(small_config(), 1)
        rng = np.random.Generator(np.random.PCG64(2))
        X = rng.normal(size=(1000, 4, 6))
        probs = model_forward(model, X)
        assert np.all(probs > 0) and np.all(probs < 1)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_shape_mismatch(self):
        model = init_params(small_config(), 0)
        with pytest.raises(ValueError):
            model_forward(model, np.zeros((4, 7)))
        with pytest.raises(ValueError):
            model_forward(model, np.zeros((3, 6)))

    def test_frame_order_sensitivity_lstm_vs_meanpool_mlp(self):
        cfg = SynthConfig(gesture=GestureSpec(duration_frames=10, noise_sigma=0.0),
                          window=10)
        ds = generate_order_probe_dataset(cfg, 1, seed=3)
        a = ds.sequences[0].feature_matrix()
        b = ds.sequences[1].feature_matrix()  # same frames, reordered
        lstm = init_params(small_config(input_dim=132, window=10), 4)
        mlp = init_params(small_config(MLP_BASELINE, input_dim=132, window=10), 4)
        assert not np.allclose(model_forward(lstm, a), model_forward(lstm, b))
        np.testing.assert_array_equal(model_forward(mlp, a), model_forward(mlp, b))

    def test_argmax_invariant_under_output_bias_shift(self):
        model = init_params(small_config(), 5)
        rng = np.random.Generator(np.random.PCG64(6))
        X = rng.normal(size=(4, 6))
        before = np.argmax(model_forward(model, X))
        last = max(n for n in model.params if n.startswith("dense"))
        model.params["dense1.bias"] = model.params["dense1.bias"] + 7.0
        assert np.argmax(model_forward(model, X)) == before

    def test_standardization_applied(self):
        model = init_params(small_config(), 7)
        rng = np.random.Generator(np.random.PCG64(8))
        X = rng.normal(size=(4, 6))
        plain = model_forward(model, X)
        model.feature_mean = np.full(6, 2.0)
        model.feature_std = np.full(6, 3.0)
        shifted = model_forward(model, X * 3.0 + 2.0)
        np.testing.assert_allclose(shifted, plain, atol=1e-12)


def finite_diff_grads(model, seq, label, eps=1e-5):
    grads = {}
    for name, theta in model.params.items():
        g = np.zeros_like(theta)
        flat = theta.reshape(-1)
        gf = g.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            lp = -np.log(model_forward(model, seq)[label])
            flat[idx] = orig - eps
            lm = -np.log(model_forward(model, seq)[label])
            flat[idx] = orig
            gf[idx] = (lp - lm) / (2 * eps)
        grads[name] = g
    return grads


class TestBackward:
    @pytest.mark.parametrize("kind,pool", [
        ("lstm_classifier", "mean"),
        ("mlp_baseline", "mean"),
        ("mlp_baseline", "flatten"),
    ])
    def test_matches_finite_differences(self, kind, pool):
        model = init_params(small_config(kind, pool=pool), 3)
        rng = np.random.Generator(np.random.PCG64(4))
        seq = rng.normal(size=(4, 6))
        analytic = model_backward(model, seq, 1)
        numeric = finite_diff_grads(model, seq, 1)
        for name in analytic:
            rel = np.abs(analytic[name] - numeric[name]) / np.maximum(
                np.maximum(np.abs(analytic[name]), np.abs(numeric[name])), 1e-8)
            assert rel.max() < 1e-4, name

    def test_two_layer_lstm_matches_finite_differences(self):
        model = init_params(small_config(lstm_hidden=(4, 3)), 9)
        rng = np.random.Generator(np.random.PCG64(10))
        seq = rng.normal(size=(4, 6))
        analytic = model_backward(model, seq, 0)
        numeric = finite_diff_grads(model, seq, 0)
        for name in analytic:
            rel = np.abs(analytic[name] - numeric[name]) / np.maximum(
                np.maximum(np.abs(analytic[name]), np.abs(numeric[name])), 1e-8)
            assert rel.max() < 1e-4, name

    def test_tanh_hidden_matches_finite_differences(self):
        model = init_params(small_config(hidden_activation="tanh"), 11)
        rng = np.random.Generator(np.random.PCG64(12))
        seq = rng.normal(size=(4, 6))
        analytic = model_backward(model, seq, 1)
        numeric = finite_diff_grads(model, seq, 1)
        for name in analytic:
            rel = np.abs(analytic[name] - numeric[name]) / np.maximum(
                np.maximum(np.abs(analytic[name]), np.abs(numeric[name])), 1e-8)
            assert rel.max() < 1e-4, name

    def test_certain_prediction_has_zero_gradients(self):
        # single-class softmax is identically 1, so loss sits at its minimum
        model = init_params(small_config(class_count=1), 0)
        seq = np.random.Generator(np.random.PCG64(1)).normal(size=(4, 6))
        grads = model_backward(model, seq, 0)
        for g in grads.values():
            np.testing.assert_allclose(g, 0.0, atol=1e-15)

    def test_duplicated_batch_equals_single_sample(self):
        model = init_params(small_config(), 13)
        rng = np.random.Generator(np.random.PCG64(14))
        seq = rng.normal(size=(4, 6))
        single = model_backward(model, seq, 1)
        _, _, mean_of_two = batch_loss_and_grads(
            model, np.stack([seq, seq]), [1, 1])
        for name in single:
            np.testing.assert_allclose(mean_of_two[name], single[name], atol=1e-12)


class TestAdam:
    def test_zero_gradients_identity(self):
        params = {"w": np.array([1.0, -2.0, 3.0])}
        grads = {"w": np.zeros(3)}
        st_ = AdamState()
        new, st_ = adam_step(st_, params, grads)
        np.testing.assert_array_equal(new["w"], params["w"])
        new, _ = adam_step(st_, new, grads)
        np.testing.assert_array_equal(new["w"], params["w"])

    def test_first_step_closed_form(self):
        params = {"w": np.array([0.0])}
        grads = {"w": np.array([4.0])}
        new, _ = adam_step(AdamState(), params, grads)
        expected = -1e-3 * 4.0 / (4.0 + 1e-8)
        np.testing.assert_allclose(new["w"], [expected], rtol=1e-12)

    def test_multiple_tensors_update_independently(self):
        rng = np.random.Generator(np.random.PCG64(5))
        pa, pb = rng.normal(size=3), rng.normal(size=(2, 2))
        ga, gb = rng.normal(size=3), rng.normal(size=(2, 2))
        joint, _ = adam_step(AdamState(), {"a": pa, "b": pb}, {"a": ga, "b": gb})
        only_a, _ = adam_step(AdamState(), {"a": pa}, {"a": ga})
        only_b, _ = adam_step(AdamState(), {"b": pb}, {"b": gb})
        np.testing.assert_array_equal(joint["a"], only_a["a"])
        np.testing.assert_array_equal(joint["b"], only_b["b"])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            adam_step(AdamState(), {"w": np.zeros(2)}, {"w": np.zeros(3)})

    def test_bad_betas(self):
        with pytest.raises(ValueError):
            AdamState(beta1=1.0)


class TestInit:
    def test_same_seed_bit_identical(self):
        a = init_params(small_config(), 42)
        b = init_params(small_config(), 42)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name], b.params[name])

    def test_forget_gate_bias_ones(self):
        model = init_params(small_config(lstm_hidden=(5,)), 0)
        bias = model.params["lstm0.bias"]
        np.testing.assert_array_equal(bias[5:10], np.ones(5))
        np.testing.assert_array_equal(bias[:5], np.zeros(5))
        np.testing.assert_array_equal(bias[10:], np.zeros(10))

    def test_weight_sample_mean_near_zero(self):
        model = init_params(ModelConfig(input_dim=100, lstm_hidden=(100,),
                                        window=5), 7)
        w = model.params["lstm0.w_input"]  # 400x100 = 4e4 entries
        limit = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
        sigma_mean = (limit / np.sqrt(3.0)) / np.sqrt(w.size)
        assert abs(w.mean()) < 3 * sigma_mean

    def test_weights_within_limit(self):
        model = init_params(small_config(), 3)
        for name, p in model.params.items():
            if name.endswith("weights") or "w_" in name:
                limit = np.sqrt(6.0 / (p.shape[0] + p.shape[1]))
                assert np.all(np.abs(p) <= limit)


class TestGradCheck:
    def test_tiny_lstm_passes(self):
        model = init_params(tiny_gradcheck_config(), 0)
        rng = np.random.Generator(np.random.PCG64(1))
        seq = rng.normal(size=(5, 8))
        report = gradient_check(model, seq, 0)
        assert report.passed
        assert report.max_rel_error < 1e-4

    def test_closed_form_linear_model(self):
        # mean-pool + single dense + softmax: gradient known analytically
        config = ModelConfig(kind=MLP_BASELINE, input_dim=4, window=3,
                             class_count=2, dense_hidden=())
        model = init_params(config, 2)
        rng = np.random.Generator(np.random.PCG64(3))
        seq = rng.normal(size=(3, 4))
        label = 1
        grads = model_backward(model, seq, label)
        xbar = seq.mean(axis=0)
        p = model_forward(model, seq)
        d = p.copy()
        d[label] -= 1.0
        np.testing.assert_allclose(grads["dense0.weights"], np.outer(d, xbar),
                                   atol=1e-10)
        np.testing.assert_allclose(grads["dense0.bias"], d, atol=1e-10)

    def test_zero_gradient_point_passes(self):
        model = init_params(tiny_gradcheck_config(class_count=1), 0)
        seq = np.zeros((5, 8))
        report = gradient_check(model, seq, 0)
        assert report.passed
