#!/usr/bin/env python3
"""Multi-domain sentiment benchmark: task-split training vs the pooled and
coin-flip baselines at the benchmark hyperparameters, averaged over seeds.

Needs the prepared dataset (see scripts/prepare_sentiment.py).  Prints a
per-task AUC table (mean +/- 1.96 sigma / sqrt(n) over seeds) per method.
"""
import argparse
import os
import sys

import numpy as np

import taskboost as tb


def cfg(mode, seed):
    return tb.TrainConfig(
        n_trees=150, max_depth=9, min_child_weight=1.0,
        colsample_bytree=1.0, colsample_bylevel=0.8, subsample=1.0,
        gamma=0.45, learning_rate=0.3, reg_alpha=0.0005, reg_lambda=12.0,
        max_neg_sample_ratio=0.5, tsgb_lambda=0.5, early_stopping_rounds=25,
        mode=mode, seed=seed,
    )


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default=os.environ.get(
        "TSGB_SENTIMENT_DATA", "data/sentiment_mt.libsvm"))
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--modes", default="tsgb,pooled,tsgb_lambda")
    args = ap.parse_args()

    if not os.path.exists(args.data):
        sys.exit(f"{args.data} not found; run scripts/prepare_sentiment.py first")
    ds = tb.load_libsvm_mt(args.data)
    print(f"{ds.n_rows} reviews, {ds.n_features} terms, {ds.n_tasks} domains")

    modes = args.modes.split(",")
    per_task = {m: {t: [] for t in ds.task_labels} for m in modes}
    avg = {m: [] for m in modes}
    for seed in range(args.seeds):
        split = tb.split_dataset(ds, (0.6, 0.2, 0.2), seed=seed)
        for mode in modes:
            model, _ = tb.train(ds, split, cfg(mode, seed))
            scores = model.predict_dataset(ds, split.test)
            ev = tb.evaluate_scores(scores, ds.labels[split.test],
                                    ds.task_of[split.test], ds.task_labels)
            for t, v in ev.per_task_auc.items():
                per_task[mode][t].append(100.0 * v)
            avg[mode].append(100.0 * ev.avg_auc)
            print(f"seed {seed} {mode:<12} AVG {avg[mode][-1]:.2f}", flush=True)

    def ci(vals):
        vals = np.asarray(vals)
        half = 1.96 * vals.std(ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else 0.0
        return f"{vals.mean():.2f}±{half:.2f}"

    print("\nTask      " + "  ".join(f"{m:>14}" for m in modes))
    for t in ds.task_labels:
        print(f"{t:<9} " + "  ".join(f"{ci(per_task[m][t]):>14}" for m in modes))
    print(f"{'AVG':<9} " + "  ".join(f"{ci(avg[m]):>14}" for m in modes))


if __name__ == "__main__":
    main()
