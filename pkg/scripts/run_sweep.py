#!/usr/bin/env python3
"""Run the five-point hyperparameter comparison (hidden activation x split
plus the final relu/softmax 70-30 configuration) on the synthetic benchmark."""

import argparse
import json

from kpaction.synthgen import SynthConfig, generate_dataset
from kpaction.train_eval import TrainConfig, default_sweep_grid, sweep, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-per-class", type=int, default=100)
    ap.add_argument("--epochs", type=int, default=25)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    ds = generate_dataset(SynthConfig(), args.n_per_class, seed=args.seed)
    base = TrainConfig(epochs=args.epochs, seed=args.seed)
    for (cfg, report), override in zip(sweep(ds, base, default_sweep_grid()),
                                       default_sweep_grid()):
        print(json.dumps({"override": override, "seed": cfg.seed,
                          "test_accuracy": report.accuracy}))


if __name__ == "__main__":
    main()
