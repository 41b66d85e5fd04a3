"""From-scratch numerical core: dense layers, LSTM with BPTT, Adam, gradcheck.

Everything is plain numpy, float64 by default. Parameters live in a flat
name -> array dict; gradients mirror it. Forward and backward are pure
functions, so training is bit-deterministic given the seed.

LSTM cell (gate order i, f, g, o):
    z = W_x x_t + W_h h_{t-1} + b
    i, f, o = sigmoid(z blocks);  g = tanh(z block)
    c_t = f * c_{t-1} + i * g
    h_t = o * tanh(c_t)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LSTM_CLASSIFIER = "lstm_classifier"
MLP_BASELINE = "mlp_baseline"

GATE_ORDER = ("input", "forget", "candidate", "output")


def relu(x):
    return np.maximum(0.0, x)


def sigmoid(x):
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x):
    """Max-shifted softmax along the last axis; safe for huge logits."""
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


_HIDDEN_ACTIVATIONS = {
    "relu": (relu, lambda pre: (pre > 0).astype(pre.dtype)),
    "tanh": (np.tanh, lambda pre: 1.0 - np.tanh(pre) ** 2),
}


@dataclass(frozen=True)
class ModelConfig:
    kind: str = LSTM_CLASSIFIER
    input_dim: int = 132
    window: int = 30
    class_count: int = 2
    lstm_hidden: tuple = (64, 32)
    dense_hidden: tuple = (32,)
    hidden_activation: str = "relu"
    pool: str = "mean"  # mlp_baseline only: "mean" or "flatten"
    dtype: str = "float64"

    def __post_init__(self):
        if self.kind not in (LSTM_CLASSIFIER, MLP_BASELINE):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.hidden_activation not in _HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown activation {self.hidden_activation!r}")
        if self.pool not in ("mean", "flatten"):
            raise ValueError(f"unknown pool {self.pool!r}")
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"unknown dtype {self.dtype!r}")
        if self.class_count < 1 or self.input_dim < 1 or self.window < 1:
            raise ValueError("class_count, input_dim and window must be >= 1")

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    def head_input_dim(self):
        if self.kind == LSTM_CLASSIFIER:
            return self.lstm_hidden[-1]
        if self.pool == "mean":
            return self.input_dim
        return self.input_dim * self.window

    def dense_dims(self):
        """[(in, out), ...] for the dense stack, ending at class_count."""
        dims = [self.head_input_dim(), *self.dense_hidden, self.class_count]
        return list(zip(dims[:-1], dims[1:]))


@dataclass
class Model:
    config: ModelConfig
    params: dict
    # optional per-feature input standardization, fitted on the train split
    # and frozen into the model; applied at the top of every forward pass
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None


@dataclass(frozen=True)
class LstmState:
    hidden: np.ndarray
    cell: np.ndarray


def init_params(config: ModelConfig, seed: int) -> Model:
    """Scaled-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases except
    the LSTM forget-gate bias block, which starts at 1."""
    rng = np.random.Generator(np.random.PCG64(seed))
    dt = config.np_dtype
    params = {}

    def uniform(rows, cols):
        limit = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-limit, limit, size=(rows, cols)).astype(dt)

    if config.kind == LSTM_CLASSIFIER:
        d_in = config.input_dim
        for l, h in enumerate(config.lstm_hidden):
            params[f"lstm{l}.w_input"] = uniform(4 * h, d_in)
            params[f"lstm{l}.w_hidden"] = uniform(4 * h, h)
            bias = np.zeros(4 * h, dtype=dt)
            bias[h : 2 * h] = 1.0  # forget gate
            params[f"lstm{l}.bias"] = bias
            d_in = h
    for j, (din, dout) in enumerate(config.dense_dims()):
        params[f"dense{j}.weights"] = uniform(dout, din)
        params[f"dense{j}.bias"] = np.zeros(dout, dtype=dt)
    return Model(config, params)


def dense_forward(weights, bias, x):
    if x.shape[-1] != weights.shape[1]:
        raise ValueError(f"dense input dim {x.shape[-1]} != {weights.shape[1]}")
    return x @ weights.T + bias


def lstm_cell_forward(w_input, w_hidden, bias, x_t, state: LstmState):
    """One cell step. Returns (new state, cache for BPTT)."""
    h_prev, c_prev = state.hidden, state.cell
    if x_t.shape[-1] != w_input.shape[1]:
        raise ValueError(f"lstm input dim {x_t.shape[-1]} != {w_input.shape[1]}")
    H = w_hidden.shape[1]
    z = x_t @ w_input.T + h_prev @ w_hidden.T + bias
    i = sigmoid(z[..., 0 * H : 1 * H])
    f = sigmoid(z[..., 1 * H : 2 * H])
    g = np.tanh(z[..., 2 * H : 3 * H])
    o = sigmoid(z[..., 3 * H : 4 * H])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    cache = {"x": x_t, "h_prev": h_prev, "c_prev": c_prev,
             "i": i, "f": f, "g": g, "o": o, "c": c, "tanh_c": tc}
    return LstmState(h, c), cache


def pool_sequence(seq, kind="mean"):
    """Collapse a [T, D] window to a vector: per-feature mean, or flatten."""
    seq = np.asarray(seq)
    if seq.ndim < 2 or seq.shape[-2] == 0:
        raise ValueError("pool_sequence requires a non-empty [T, D] window")
    if kind == "mean":
        return seq.mean(axis=-2)
    if kind == "flatten":
        return seq.reshape(*seq.shape[:-2], seq.shape[-2] * seq.shape[-1])
    raise ValueError(f"unknown pool kind {kind!r}")


def _check_input(config, X):
    X = np.asarray(X, dtype=config.np_dtype)
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.shape[1] != config.window or X.shape[2] != config.input_dim:
        raise ValueError(
            f"input shape {X.shape[1:]}, model expects "
            f"({config.window}, {config.input_dim})"
        )
    return X, single


def _forward_caches(model: Model, X):
    """Full forward over a [B, T, D] batch; returns (probs, caches)."""
    cfg = model.config
    p = model.params
    if model.feature_mean is not None:
        X = (X - model.feature_mean) / model.feature_std
    caches = {"lstm": [], "dense": []}
    if cfg.kind == LSTM_CLASSIFIER:
        inputs = X
        for l in range(len(cfg.lstm_hidden)):
            H = cfg.lstm_hidden[l]
            B = X.shape[0]
            state = LstmState(np.zeros((B, H), dtype=X.dtype),
                              np.zeros((B, H), dtype=X.dtype))
            steps, hs = [], []
            for t in range(cfg.window):
                state, cache = lstm_cell_forward(
                    p[f"lstm{l}.w_input"], p[f"lstm{l}.w_hidden"],
                    p[f"lstm{l}.bias"], inputs[:, t], state)
                steps.append(cache)
                hs.append(state.hidden)
            caches["lstm"].append(steps)
            inputs = np.stack(hs, axis=1)
        head_in = inputs[:, -1]
    else:
        head_in = pool_sequence(X, cfg.pool)
    caches["head_in"] = head_in

    act, _ = _HIDDEN_ACTIVATIONS[cfg.hidden_activation]
    h = head_in
    dims = cfg.dense_dims()
    for j in range(len(dims)):
        pre = dense_forward(p[f"dense{j}.weights"], p[f"dense{j}.bias"], h)
        caches["dense"].append({"in": h, "pre": pre})
        h = act(pre) if j < len(dims) - 1 else pre
    probs = softmax(h)
    caches["probs"] = probs
    return probs, caches


def model_forward(model: Model, seq):
    """Class probabilities for one [T, D] window (or a [B, T, D] batch)."""
    X, single = _check_input(model.config, seq)
    probs, _ = _forward_caches(model, X)
    return probs[0] if single else probs


def _backward_from_probs(model: Model, X, labels, caches):
    """Cross-entropy gradients, summed over the batch."""
    cfg = model.config
    p = model.params
    B = X.shape[0]
    probs = caches["probs"]
    grads = {k: np.zeros_like(v) for k, v in p.items()}

    # softmax + CE fused
    dlogits = probs.copy()
    dlogits[np.arange(B), labels] -= 1.0

    _, dact = _HIDDEN_ACTIVATIONS[cfg.hidden_activation]
    dims = cfg.dense_dims()
    d = dlogits
    for j in range(len(dims) - 1, -1, -1):
        c = caches["dense"][j]
        if j < len(dims) - 1:
            d = d * dact(c["pre"])
        grads[f"dense{j}.weights"] += d.T @ c["in"]
        grads[f"dense{j}.bias"] += d.sum(axis=0)
        d = d @ p[f"dense{j}.weights"]
    d_head_in = d

    if cfg.kind == MLP_BASELINE:
        return grads

    # BPTT, top LSTM layer first; only the final hidden state feeds the head
    T = cfg.window
    n_layers = len(cfg.lstm_hidden)
    d_out = np.zeros((B, T, cfg.lstm_hidden[-1]), dtype=X.dtype)
    d_out[:, -1] = d_head_in
    for l in range(n_layers - 1, -1, -1):
        steps = caches["lstm"][l]
        H = cfg.lstm_hidden[l]
        w_in = p[f"lstm{l}.w_input"]
        w_h = p[f"lstm{l}.w_hidden"]
        dW_in = grads[f"lstm{l}.w_input"]
        dW_h = grads[f"lstm{l}.w_hidden"]
        db = grads[f"lstm{l}.bias"]
        d_in = np.zeros((B, T, w_in.shape[1]), dtype=X.dtype)
        dh_next = np.zeros((B, H), dtype=X.dtype)
        dc_next = np.zeros((B, H), dtype=X.dtype)
        for t in range(T - 1, -1, -1):
            c = steps[t]
            dh = d_out[:, t] + dh_next
            do = dh * c["tanh_c"]
            dc = dh * c["o"] * (1.0 - c["tanh_c"] ** 2) + dc_next
            di = dc * c["g"]
            dg = dc * c["i"]
            df = dc * c["c_prev"]
            dc_next = dc * c["f"]
            dz = np.concatenate([
                di * c["i"] * (1.0 - c["i"]),
                df * c["f"] * (1.0 - c["f"]),
                dg * (1.0 - c["g"] ** 2),
                do * c["o"] * (1.0 - c["o"]),
            ], axis=-1)
            dW_in += dz.T @ c["x"]
            dW_h += dz.T @ c["h_prev"]
            db += dz.sum(axis=0)
            d_in[:, t] = dz @ w_in
            dh_next = dz @ w_h
        d_out = d_in
    return grads


def model_backward(model: Model, seq, label: int):
    """Exact gradients of -log p[label] for one window, by full BPTT."""
    X, single = _check_input(model.config, seq)
    if not single:
        raise ValueError("model_backward takes a single [T, D] window")
    _, caches = _forward_caches(model, X)
    return _backward_from_probs(model, X, np.asarray([label]), caches)


def batch_loss_and_grads(model: Model, X, labels):
    """(mean CE loss, probs, mean gradients) over a [B, T, D] minibatch."""
    X, _ = _check_input(model.config, X)
    labels = np.asarray(labels)
    probs, caches = _forward_caches(model, X)
    B = X.shape[0]
    eps = np.finfo(np.float64).tiny
    loss = float(-np.mean(np.log(probs[np.arange(B), labels] + eps)))
    grads = _backward_from_probs(model, X, labels, caches)
    for k in grads:
        grads[k] /= B
    return loss, probs, grads


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must be in [0, 1)")


def adam_step(state: AdamState, params: dict, grads: dict):
    """Bias-corrected Adam update; returns (new params, mutated state)."""
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    new_params = {}
    for k, theta in params.items():
        g = grads[k]
        if g.shape != theta.shape:
            raise ValueError(f"{k}: gradient shape {g.shape} != {theta.shape}")
        m = state.m.get(k)
        v = state.v.get(k)
        if m is None:
            m = np.zeros_like(theta)
            v = np.zeros_like(theta)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.m[k] = m
        state.v[k] = v
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_params[k] = theta - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params, state


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: int
    passed: bool
    tolerance: float


def tiny_gradcheck_config(input_dim=8, hidden=16, window=5, class_count=2):
    return ModelConfig(
        kind=LSTM_CLASSIFIER, input_dim=input_dim, window=window,
        class_count=class_count, lstm_hidden=(hidden,), dense_hidden=(8,),
    )


def gradient_check(model: Model, seq, label: int, epsilon=1e-5, tolerance=1e-4):
    """Central-difference check of model_backward over every parameter."""
    X, _ = _check_input(model.config, seq)
    seq = X[0]

    def loss_at(params):
        probs = model_forward(
            Model(model.config, params, model.feature_mean, model.feature_std), seq)
        return float(-np.log(probs[label] + np.finfo(np.float64).tiny))

    analytic = model_backward(model, seq, label)
    worst = (0.0, "", -1)
    for name, theta in model.params.items():
        flat = theta.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + epsilon
            plus = loss_at(model.params)
            flat[idx] = orig - epsilon
            minus = loss_at(model.params)
            flat[idx] = orig
            numeric = (plus - minus) / (2 * epsilon)
            a = a_flat[idx]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if rel > worst[0]:
                worst = (rel, name, idx)
    return GradCheckReport(worst[0], worst[1], worst[2], worst[0] < tolerance, tolerance)
