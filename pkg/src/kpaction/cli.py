"""Command-line entry point: synth, train, eval, predict, gradcheck.

Every subcommand reads an optional JSON config file (--config); flags win
over file values, file values win over defaults. Unknown config keys are
rejected. Exit codes: 0 success, 1 config/contract error, 2 I/O error,
3 check failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from . import keypoints, synthgen
from .keypoints import (
    Dataset,
    KseqError,
    holistic_full_layout,
    load_dataset,
    parse_sequence_file,
    pose_only_layout,
    save_dataset,
)
from .neural import (
    LSTM_CLASSIFIER,
    MLP_BASELINE,
    ModelConfig,
    gradient_check,
    init_params,
    tiny_gradcheck_config,
)
from .stream import StreamPredictor, run_stream
from .synthgen import GestureSpec, SynthConfig
from .train_eval import (
    ModelFileError,
    TrainConfig,
    apply_override,
    default_sweep_grid,
    evaluate,
    load_model,
    save_model,
    sweep,
    train,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_CHECK = 3


class CliError(Exception):
    def __init__(self, message, code=EXIT_CONFIG):
        super().__init__(message)
        self.code = code


def _load_config_file(path, allowed):
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise CliError(f"cannot read config {path}: {e}", EXIT_IO) from e
    except json.JSONDecodeError as e:
        raise CliError(f"malformed config {path}: {e}") from e
    if not isinstance(cfg, dict):
        raise CliError(f"config {path} must be a JSON object")
    unknown = set(cfg) - set(allowed)
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def _merge(args, file_cfg, keys):
    """flags > config file > defaults; argparse defaults are None."""
    merged = {}
    for key, default in keys.items():
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
        elif key in file_cfg:
            merged[key] = file_cfg[key]
        else:
            merged[key] = default
    return merged


_LAYOUTS = {"pose_only": pose_only_layout, "holistic_full": holistic_full_layout}

_SYNTH_KEYS = {
    "n_per_class": 100,
    "seed": 42,
    "noise_sigma": 0.01,
    "window": 30,
    "fps": 10.0,
    "layout": "pose_only",
    "kind": "standard",
    "walk_speed": 0.01,
    "arc_amplitude": 0.9,
}


def cmd_synth(args):
    cfg = _merge(args, _load_config_file(args.config, _SYNTH_KEYS), _SYNTH_KEYS)
    if cfg["layout"] not in _LAYOUTS:
        raise CliError(f"layout must be one of {sorted(_LAYOUTS)}")
    if cfg["kind"] not in ("standard", "order_probe"):
        raise CliError("kind must be 'standard' or 'order_probe'")
    try:
        gesture = GestureSpec(
            duration_frames=int(cfg["window"]),
            noise_sigma=float(cfg["noise_sigma"]),
            walk_speed=float(cfg["walk_speed"]),
            arc_amplitude=float(cfg["arc_amplitude"]),
        )
        synth_cfg = SynthConfig(
            layout=_LAYOUTS[cfg["layout"]](), fps=float(cfg["fps"]),
            window=int(cfg["window"]), gesture=gesture, seed=int(cfg["seed"]),
        )
    except ValueError as e:
        raise CliError(f"invalid config: {e}") from e
    gen = (synthgen.generate_dataset if cfg["kind"] == "standard"
           else synthgen.generate_order_probe_dataset)
    try:
        ds = gen(synth_cfg, int(cfg["n_per_class"]), int(cfg["seed"]))
    except ValueError as e:
        raise CliError(f"invalid config: {e}") from e
    try:
        save_dataset(ds, args.out)
    except OSError as e:
        raise CliError(f"cannot write {args.out}: {e}", EXIT_IO) from e
    for name, count in zip(ds.classes, ds.class_counts()):
        print(f"{name}: {count}")
    return EXIT_OK


_TRAIN_KEYS = {
    "epochs": 60,
    "batch_size": 16,
    "seed": 42,
    "learning_rate": 1e-3,
    "train_fraction": 0.7,
    "arch": "lstm",
    "early_stop_patience": None,
}


def _train_config(cfg) -> TrainConfig:
    arch_kind = {"lstm": LSTM_CLASSIFIER, "mlp": MLP_BASELINE}.get(cfg["arch"])
    if arch_kind is None:
        raise CliError("arch must be 'lstm' or 'mlp'")
    try:
        return TrainConfig(
            epochs=int(cfg["epochs"]),
            batch_size=int(cfg["batch_size"]),
            seed=int(cfg["seed"]),
            learning_rate=float(cfg["learning_rate"]),
            train_fraction=float(cfg["train_fraction"]),
            early_stop_patience=(None if cfg["early_stop_patience"] is None
                                 else int(cfg["early_stop_patience"])),
            architecture=ModelConfig(kind=arch_kind),
        )
    except ValueError as e:
        raise CliError(f"invalid config: {e}") from e


def _load_dataset_or_die(data_dir) -> Dataset:
    try:
        return load_dataset(data_dir)
    except FileNotFoundError as e:
        raise CliError(str(e), EXIT_IO) from e
    except (KseqError, ValueError) as e:
        raise CliError(f"bad dataset: {e}") from e


def cmd_train(args):
    cfg = _merge(args, _load_config_file(args.config, _TRAIN_KEYS), _TRAIN_KEYS)
    train_cfg = _train_config(cfg)
    ds = _load_dataset_or_die(args.data)
    if args.sweep is not None:
        try:
            with open(args.sweep, "r", encoding="utf-8") as fh:
                grid = json.load(fh)
        except OSError as e:
            raise CliError(f"cannot read grid {args.sweep}: {e}", EXIT_IO) from e
        except json.JSONDecodeError as e:
            raise CliError(f"malformed grid: {e}") from e
        if grid == "default":
            grid = default_sweep_grid()
        try:
            results = sweep(ds, train_cfg, grid)
        except ValueError as e:
            raise CliError(str(e)) from e
        for (run_cfg, report), override in zip(results, grid):
            print(json.dumps({"override": override,
                              "seed": run_cfg.seed,
                              "test_accuracy": report.accuracy}))
        return EXIT_OK
    try:
        model, history = train(ds, train_cfg)
    except ValueError as e:
        raise CliError(str(e)) from e
    try:
        save_model(model, args.model_out, classes=ds.classes, seed=train_cfg.seed)
        metrics_path = args.metrics_out or "metrics.csv"
        with open(metrics_path, "w", encoding="utf-8") as fh:
            fh.write(history.to_csv())
    except OSError as e:
        raise CliError(f"cannot write output: {e}", EXIT_IO) from e
    print(f"final test accuracy: {history.records[-1].test_acc}")
    return EXIT_OK


def _load_model_or_die(path):
    try:
        return load_model(path)
    except OSError as e:
        raise CliError(f"cannot read model {path}: {e}", EXIT_IO) from e
    except ModelFileError as e:
        raise CliError(f"bad model file: {e}") from e


def cmd_eval(args):
    model, header = _load_model_or_die(args.model)
    ds = _load_dataset_or_die(args.data)
    dim = ds.sequences[0].layout.total_dim if ds.sequences else 0
    if dim != model.config.input_dim:
        raise CliError(
            f"dataset dim {dim} does not match model dim {model.config.input_dim}"
        )
    report = evaluate(model, ds)
    if args.format == "csv":
        print("," + ",".join(report.confusion.classes))
        for name, row in zip(report.confusion.classes, report.confusion.counts):
            print(name + "," + ",".join(str(int(c)) for c in row))
    else:
        sys.stdout.write(report.to_json())
    return EXIT_OK


def _frames_from_source(args, model):
    if args.input == "-":
        for lineno, raw in enumerate(sys.stdin, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                row = json.loads(raw)
            except json.JSONDecodeError as e:
                raise CliError(f"stdin line {lineno}: malformed frame: {e}") from e
            if not isinstance(row, list) or len(row) != model.config.input_dim + 1:
                raise CliError(f"stdin line {lineno}: expected "
                               f"[t, {model.config.input_dim} features]")
            yield np.asarray(row[1:], dtype=np.float64)
    else:
        try:
            with open(args.input, "rb") as fh:
                seq = parse_sequence_file(fh.read())
        except OSError as e:
            raise CliError(f"cannot read {args.input}: {e}", EXIT_IO) from e
        except KseqError as e:
            raise CliError(f"bad input: {e}") from e
        for f in seq.frames:
            yield f.features


def cmd_predict(args):
    model, header = _load_model_or_die(args.model)
    threshold = args.threshold if args.threshold is not None else 0.5
    smoothing_k = args.smoothing_k if args.smoothing_k is not None else 10
    classes = header.get("classes") or [str(k) for k in range(model.config.class_count)]
    try:
        predictor = StreamPredictor(model, classes, smoothing_k=smoothing_k,
                                    confidence_threshold=threshold)
    except ValueError as e:
        raise CliError(str(e)) from e
    last_label = None
    for event in run_stream(predictor, _frames_from_source(args, model)):
        if args.changes_only and event.label == last_label:
            continue
        last_label = event.label
        print(json.dumps(event.to_json_dict()))
    return EXIT_OK


def cmd_gradcheck(args):
    seed = args.seed if args.seed is not None else 0
    epsilon = args.epsilon if args.epsilon is not None else 1e-5
    tolerance = args.tolerance if args.tolerance is not None else 1e-4
    config = tiny_gradcheck_config()
    model = init_params(config, seed)
    rng = np.random.Generator(np.random.PCG64(seed + 1))
    seq = rng.normal(0.0, 1.0, size=(config.window, config.input_dim))
    label = int(rng.integers(config.class_count))
    report = gradient_check(model, seq, label, epsilon=epsilon, tolerance=tolerance)
    status = "PASS" if report.passed else "FAIL"
    print(f"{status} max_rel_error={report.max_rel_error:.3e} "
          f"(tolerance {tolerance:g}, worst {report.worst_param}[{report.worst_index}])")
    return EXIT_OK if report.passed else EXIT_CHECK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kpaction",
        description="Keypoint-sequence action recognition: synthesis, training, "
                    "evaluation and streaming prediction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--n-per-class", dest="n_per_class", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--fps", type=float)
    p.add_argument("--layout", choices=sorted(_LAYOUTS))
    p.add_argument("--kind", choices=["standard", "order_probe"])
    p.add_argument("--walk-speed", dest="walk_speed", type=float)
    p.add_argument("--arc-amplitude", dest="arc_amplitude", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--model-out", dest="model_out", default="model.kmodel")
    p.add_argument("--metrics-out", dest="metrics_out")
    p.add_argument("--config")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--early-stop-patience", dest="early_stop_patience", type=int)
    p.add_argument("--arch", choices=["lstm", "mlp"])
    p.add_argument("--sweep", help="grid JSON file, or a file containing \"default\"")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a dataset directory")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="stream predictions over frames")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help=".kseq file or '-' for stdin")
    p.add_argument("--threshold", type=float)
    p.add_argument("--smoothing-k", dest="smoothing_k", type=int)
    p.add_argument("--changes-only", dest="changes_only", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--tolerance", type=float)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threshold", None) is not None and not (0.0 <= args.threshold <= 1.0):
        print("error: --threshold must be in [0, 1]", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
