#!/usr/bin/env python3
"""Contrast the LSTM with the mean-pool MLP baseline on the order-probe set,
where time-pooled features are uninformative by construction."""

import argparse
from dataclasses import replace

from kpaction.keypoints import split_dataset
from kpaction.neural import MLP_BASELINE, ModelConfig
from kpaction.synthgen import SynthConfig, generate_order_probe_dataset
from kpaction.train_eval import TrainConfig, evaluate, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-per-class", type=int, default=130)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    ds = generate_order_probe_dataset(SynthConfig(), args.n_per_class,
                                      seed=args.seed)
    base = TrainConfig(epochs=args.epochs, seed=args.seed,
                       train_fraction=10 / 13)
    _, test_ds = split_dataset(ds, base.train_fraction, base.seed)
    for name, cfg in [
        ("lstm", base),
        ("mean-pool mlp", replace(base, architecture=ModelConfig(kind=MLP_BASELINE))),
    ]:
        model, _ = train(ds, cfg)
        report = evaluate(model, test_ds)
        print(f"{name:14s} test accuracy: {report.accuracy:.4f}")


if __name__ == "__main__":
    main()
