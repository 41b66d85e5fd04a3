"""Deterministic training loop, evaluation metrics, sweeps, model files.

Training splits the dataset with the seeded stratified splitter, shuffles the
train set each epoch from the same seed, averages gradients over minibatches
and applies Adam. Metrics are recorded per epoch (Fig-1-style accuracy curve
material). Models serialize to ".kmodel": a JSON header line, one JSON line
per parameter tensor, and a trailing CRC-32 over everything above it.
"""

from __future__ import annotations

import json
import os
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .keypoints import Dataset, split_dataset
from .neural import (
    AdamState,
    Model,
    ModelConfig,
    batch_loss_and_grads,
    adam_step,
    init_params,
    model_forward,
)

KMODEL_VERSION = 1


class ModelFileError(ValueError):
    pass


class UndefinedRateError(ValueError):
    """TPR requested for a class with no true samples."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    batch_size: int = 16
    seed: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    architecture: ModelConfig = field(default_factory=ModelConfig)
    train_fraction: float = 0.7
    early_stop_patience: int | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not (0.0 < self.train_fraction < 1.0):
            raise ValueError("train_fraction must be in (0, 1)")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: float


@dataclass
class MetricsHistory:
    records: list = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,train_acc,test_acc"]
        for r in self.records:
            lines.append(f"{r.epoch},{r.train_loss!r},{r.train_acc!r},{r.test_acc!r}")
        return "\n".join(lines) + "\n"


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # [true, predicted]
    classes: list

    @property
    def total(self):
        return int(self.counts.sum())


@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    accuracy: float
    tpr: list  # per-class true positive rate (None where undefined)
    false_positives: list  # per-class off-diagonal column sums

    def to_json(self) -> str:
        return json.dumps(
            {
                "classes": self.confusion.classes,
                "confusion": self.confusion.counts.tolist(),
                "accuracy": self.accuracy,
                "tpr": self.tpr,
                "false_positives": self.false_positives,
            },
            indent=2,
        ) + "\n"


def predict_classes(model: Model, sequences):
    """Argmax class per sequence; ties go to the lowest index."""
    X = np.stack([s.feature_matrix() for s in sequences])
    probs = model_forward(model, X)
    return np.argmax(probs, axis=1), probs


def categorical_accuracy(probs, labels) -> float:
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    if probs.shape[0] == 0:
        raise ValueError("empty input")
    if probs.shape[0] != labels.shape[0]:
        raise ValueError("probs and labels length mismatch")
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def confusion_matrix(preds, labels, class_count, classes=None) -> ConfusionMatrix:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise ValueError("preds and labels length mismatch")
    if preds.size and (preds.max() >= class_count or labels.max() >= class_count
                       or preds.min() < 0 or labels.min() < 0):
        raise IndexError("class index out of range")
    counts = np.zeros((class_count, class_count), dtype=np.int64)
    for t, p in zip(labels, preds):
        counts[t, p] += 1
    if classes is None:
        classes = [str(k) for k in range(class_count)]
    return ConfusionMatrix(counts, list(classes))


def true_positive_rate(cm: ConfusionMatrix, k: int) -> float:
    row = cm.counts[k].sum()
    if row == 0:
        raise UndefinedRateError(f"class {k} has no true samples; TPR undefined")
    return float(cm.counts[k, k] / row)


def evaluate(model: Model, ds: Dataset) -> EvalReport:
    preds, probs = predict_classes(model, ds.sequences)
    labels = np.asarray([s.label for s in ds.sequences])
    cm = confusion_matrix(preds, labels, len(ds.classes), ds.classes)
    accuracy = float(np.trace(cm.counts) / cm.total)
    tpr = []
    for k in range(len(ds.classes)):
        try:
            tpr.append(true_positive_rate(cm, k))
        except UndefinedRateError:
            tpr.append(None)
    fps = [int(cm.counts[:, k].sum() - cm.counts[k, k]) for k in range(len(ds.classes))]
    return EvalReport(cm, accuracy, tpr, fps)


def train(ds: Dataset, cfg: TrainConfig):
    """Train on a seeded split of `ds`; returns (model, history).

    Bit-deterministic: same dataset and config give identical parameters
    and metrics.
    """
    if not ds.sequences:
        raise ValueError("empty dataset")
    arch = replace(
        cfg.architecture,
        input_dim=ds.sequences[0].layout.total_dim,
        window=len(ds.sequences[0]),
        class_count=len(ds.classes),
    )
    train_ds, test_ds = split_dataset(ds, cfg.train_fraction, cfg.seed)
    X_train = np.stack([s.feature_matrix() for s in train_ds.sequences])
    y_train = np.asarray([s.label for s in train_ds.sequences])
    X_test = (np.stack([s.feature_matrix() for s in test_ds.sequences])
              if test_ds.sequences else None)
    y_test = np.asarray([s.label for s in test_ds.sequences])

    model = init_params(arch, cfg.seed)
    # standardize inputs on train-split statistics; frozen into the model
    mean = X_train.mean(axis=(0, 1))
    std = X_train.std(axis=(0, 1))
    std[std < 1e-8] = 1.0
    model.feature_mean = mean
    model.feature_std = std
    opt = AdamState(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
    shuffle_rng = np.random.Generator(np.random.PCG64(cfg.seed + 1))
    history = MetricsHistory()
    best_acc = -1.0
    stale = 0
    n = X_train.shape[0]
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, _, grads = batch_loss_and_grads(model, X_train[batch], y_train[batch])
            model.params, opt = adam_step(opt, model.params, grads)
            losses.append(loss)
        train_probs = model_forward(model, X_train)
        train_acc = categorical_accuracy(train_probs, y_train)
        if X_test is not None:
            test_acc = categorical_accuracy(model_forward(model, X_test), y_test)
        else:
            test_acc = float("nan")
        history.records.append(
            EpochRecord(epoch, float(np.mean(losses)), train_acc, test_acc)
        )
        if cfg.early_stop_patience is not None and X_test is not None:
            if test_acc > best_acc:
                best_acc = test_acc
                stale = 0
            else:
                stale += 1
                if stale >= cfg.early_stop_patience:
                    break
    return model, history


def default_sweep_grid():
    """Five-run comparison: {relu, tanh} x {60-40, 70-30} plus the final
    relu-hidden / softmax-output / 70-30 configuration."""
    return [
        {"hidden_activation": "relu", "train_fraction": 0.6},
        {"hidden_activation": "relu", "train_fraction": 0.7},
        {"hidden_activation": "tanh", "train_fraction": 0.6},
        {"hidden_activation": "tanh", "train_fraction": 0.7},
        {"hidden_activation": "relu", "train_fraction": 0.7, "final": True},
    ]


def apply_override(base: TrainConfig, override: dict) -> TrainConfig:
    """Grid override: TrainConfig keys plus architecture keys, flat."""
    cfg = base
    arch = base.architecture
    arch_fields = set(ModelConfig.__dataclass_fields__)
    cfg_fields = set(TrainConfig.__dataclass_fields__)
    for key, value in override.items():
        if key == "final":
            continue
        if key in arch_fields:
            if key in ("lstm_hidden", "dense_hidden"):
                value = tuple(value)
            arch = replace(arch, **{key: value})
        elif key in cfg_fields and key != "architecture":
            cfg = replace(cfg, **{key: value})
        else:
            raise ValueError(f"unknown sweep key {key!r}")
    return replace(cfg, architecture=arch)


def sweep(ds: Dataset, base: TrainConfig, grid):
    """One training run per grid override; run i uses seed base.seed + i."""
    grid = list(grid)
    if not grid:
        raise ValueError("empty sweep grid")
    results = []
    for i, override in enumerate(grid):
        cfg = replace(apply_override(base, override), seed=base.seed + i)
        model, _ = train(ds, cfg)
        _, test_ds = split_dataset(ds, cfg.train_fraction, cfg.seed)
        results.append((cfg, evaluate(model, test_ds)))
    return results


def _model_header(model: Model, extra=None):
    cfg = model.config
    header = {
        "version": KMODEL_VERSION,
        "kind": cfg.kind,
        "input_dim": cfg.input_dim,
        "window": cfg.window,
        "class_count": cfg.class_count,
        "lstm_hidden": list(cfg.lstm_hidden),
        "dense_hidden": list(cfg.dense_hidden),
        "hidden_activation": cfg.hidden_activation,
        "pool": cfg.pool,
        "dtype": cfg.dtype,
        "classes": None,
        "seed": None,
    }
    if extra:
        header.update(extra)
    return header


def save_model(model: Model, path, classes=None, seed=None):
    """Write a .kmodel file: header line, parameter lines, crc32 trailer."""
    header = _model_header(model, {"classes": classes, "seed": seed})
    lines = [json.dumps(header, separators=(",", ":"))]
    tensors = dict(model.params)
    if model.feature_mean is not None:
        tensors["norm.mean"] = model.feature_mean
        tensors["norm.std"] = model.feature_std
    for name in sorted(tensors):
        arr = tensors[name]
        lines.append(json.dumps(
            {"name": name, "shape": list(arr.shape),
             "data": [float(x) for x in arr.reshape(-1)]},
            separators=(",", ":")))
    body = ("\n".join(lines) + "\n").encode("utf-8")
    crc = zlib.crc32(body) & 0xFFFFFFFF
    data = body + f"crc32 {crc:08x}\n".encode("ascii")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load_model(path):
    """Read a .kmodel file; returns (Model, header dict)."""
    with open(path, "rb") as fh:
        data = fh.read()
    lines = data.decode("utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) < 2 or not lines[-1].startswith("crc32 "):
        raise ModelFileError("missing crc32 trailer (truncated file?)")
    body = ("\n".join(lines[:-1]) + "\n").encode("utf-8")
    stated = lines[-1].split(" ", 1)[1]
    actual = f"{zlib.crc32(body) & 0xFFFFFFFF:08x}"
    if stated != actual:
        raise ModelFileError(f"crc32 mismatch: file says {stated}, computed {actual}")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise ModelFileError(f"malformed header: {e}") from e
    if header.get("version") != KMODEL_VERSION:
        raise ModelFileError(f"unsupported model version {header.get('version')!r}")
    config = ModelConfig(
        kind=header["kind"], input_dim=header["input_dim"], window=header["window"],
        class_count=header["class_count"], lstm_hidden=tuple(header["lstm_hidden"]),
        dense_hidden=tuple(header["dense_hidden"]),
        hidden_activation=header["hidden_activation"], pool=header["pool"],
        dtype=header["dtype"],
    )
    params = {}
    for raw in lines[1:-1]:
        try:
            entry = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ModelFileError(f"malformed parameter line: {e}") from e
        arr = np.asarray(entry["data"], dtype=config.np_dtype).reshape(entry["shape"])
        params[entry["name"]] = arr
    mean = params.pop("norm.mean", None)
    std = params.pop("norm.std", None)
    model = Model(config, params, mean, std)
    expected = set(init_params(config, 0).params)
    if set(params) != expected:
        raise ModelFileError("parameter set does not match architecture")
    return model, header
