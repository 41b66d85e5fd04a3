#!/usr/bin/env python3
"""Train the LSTM classifier on the synthetic payment/evasion benchmark and
print the held-out confusion matrix, per-class TPR and the accuracy curve."""

import argparse

from kpaction.keypoints import split_dataset
from kpaction.synthgen import SynthConfig, generate_dataset
from kpaction.train_eval import TrainConfig, evaluate, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-per-class", type=int, default=130)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--train-fraction", type=float, default=10 / 13)
    ap.add_argument("--metrics-out", default=None)
    args = ap.parse_args()

    ds = generate_dataset(SynthConfig(), args.n_per_class, seed=args.seed)
    cfg = TrainConfig(epochs=args.epochs, seed=args.seed,
                      train_fraction=args.train_fraction)
    model, history = train(ds, cfg)
    _, test_ds = split_dataset(ds, cfg.train_fraction, cfg.seed)
    report = evaluate(model, test_ds)

    print(f"dataset: {len(ds)} sequences, test split {len(test_ds)}")
    print(f"test accuracy: {report.accuracy:.4f}")
    print(f"per-class TPR: {report.tpr}")
    print("confusion (rows=true, cols=predicted):")
    for name, row in zip(report.confusion.classes, report.confusion.counts):
        print(f"  {name:10s} {row.tolist()}")
    if args.metrics_out:
        with open(args.metrics_out, "w", encoding="utf-8") as fh:
            fh.write(history.to_csv())
        print(f"wrote accuracy curve to {args.metrics_out}")


if __name__ == "__main__":
    main()
