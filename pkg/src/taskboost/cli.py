"""Command-line interface.

Subcommands: train, predict, evaluate, diagnose, sweep, synth, export-dot.
Options come from a JSON config file with flat flag overrides; every command
is deterministic given config + seed.  Exit codes: 0 success, 2 config
error, 3 data/model error.  TSGB_THREADS sets the worker count for
multi-seed runs (it never affects results, only wall time).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from types import SimpleNamespace

import numpy as np

from . import baselines, synthgen
from .booster import MODES, Model, TrainConfig, TrainReport, load_any_model, train
from .data import Dataset, DataSplit, load_csv, load_libsvm_mt, save_csv, split_dataset, subsample_per_task
from .errors import ConfigError, DataError, ModelError
from .evaluation import EvalReport, evaluate_scores, rneg_histogram

RUN_KEYS = (
    "data", "data_format", "label_col", "task_col", "split_ratios",
    "out_dir", "seeds", "threshold", "mtb_specific_trees",
)


def _n_threads() -> int:
    raw = os.environ.get("TSGB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"TSGB_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"TSGB_THREADS must be >= 1, got {n}")
    return n


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return data


def _merge_config(args: argparse.Namespace) -> tuple[TrainConfig, dict]:
    """File config + flag overrides -> (TrainConfig, run-level settings)."""
    raw = _load_config_file(getattr(args, "config", None))
    run = {k: raw.pop(k) for k in list(raw) if k in RUN_KEYS}
    overrides = {
        "n_trees": args.n_trees, "max_depth": args.max_depth,
        "learning_rate": args.learning_rate, "reg_lambda": args.reg_lambda,
        "reg_alpha": args.reg_alpha, "gamma": args.gamma,
        "min_child_weight": args.min_child_weight, "subsample": args.subsample,
        "colsample_bytree": args.colsample_bytree,
        "colsample_bylevel": args.colsample_bylevel,
        "max_neg_sample_ratio": args.R, "tsgb_lambda": args.tsgb_lambda,
        "tsgb_start_tree": args.tsgb_start_tree, "mode": args.mode,
        "loss": args.loss, "seed": args.seed,
        "early_stopping_rounds": args.early_stopping_rounds,
    }
    for key, val in overrides.items():
        if val is not None:
            raw[key] = val
    run_mode = raw.get("mode", "tsgb")
    if run_mode == "mtb":
        raw["mode"] = "pooled"
    cfg = TrainConfig.from_dict(raw)
    run["run_mode"] = run_mode
    for key, val in (
        ("data", args.data), ("data_format", args.data_format),
        ("label_col", args.label_col), ("task_col", args.task_col),
        ("out_dir", args.out), ("threshold", getattr(args, "threshold", None)),
        ("mtb_specific_trees", getattr(args, "mtb_specific_trees", None)),
    ):
        if val is not None:
            run[key] = val
    if getattr(args, "seeds", None) is not None:
        run["seeds"] = [cfg.seed + i for i in range(args.seeds)]
    run.setdefault("seeds", [cfg.seed])
    run.setdefault("split_ratios", [0.6, 0.2, 0.2])
    run.setdefault("data_format", "csv")
    run.setdefault("label_col", "label")
    run.setdefault("task_col", "task")
    run.setdefault("out_dir", ".")
    run.setdefault("mtb_specific_trees", None)
    if not run["seeds"]:
        raise ConfigError("seed list must be nonempty")
    return cfg, run


def _load_dataset(run: dict) -> Dataset:
    path = run.get("data")
    if not path:
        raise ConfigError("no input data given (config key 'data' or --data)")
    if not os.path.exists(path):
        raise DataError(f"data file not found: {path}")
    if run["data_format"] == "libsvm":
        return load_libsvm_mt(path)
    if run["data_format"] == "csv":
        return load_csv(path, run["label_col"], run["task_col"])
    raise ConfigError(f"unknown data_format {run['data_format']!r}")


def _train_once(ds: Dataset, ratios, cfg: TrainConfig, run: dict, seed: int):
    split = split_dataset(ds, tuple(ratios), seed)
    cfg_s = replace(cfg, seed=seed)
    if run["run_mode"] == "mtb":
        k_specific = run.get("mtb_specific_trees") or cfg_s.n_trees
        cfg_specific = replace(cfg_s, n_trees=int(k_specific))
        model, report = baselines.train_mtb(ds, split, cfg_s, cfg_specific)
    else:
        model, report = train(ds, split, cfg_s)
    scores = model.predict_dataset(ds, split.test)
    ev = evaluate_scores(
        scores, ds.labels[split.test], ds.task_of[split.test],
        ds.task_labels, threshold=run.get("threshold"),
    )
    return split, model, report, ev


def _write_diagnostics_csv(path: str, per_seed: list[tuple[int, TrainReport]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "tree", "node", "depth", "n_rows",
                         "gain", "neg_ratio", "decision"])
        for seed, report in per_seed:
            for tree_idx, rec in report.all_records():
                writer.writerow([
                    seed, tree_idx, rec.node_id, rec.depth, rec.n_rows,
                    repr(rec.gain), repr(rec.neg_ratio), rec.decision,
                ])


def read_diagnostics_csv(path: str) -> list[SimpleNamespace]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            records.append(SimpleNamespace(
                seed=int(row["seed"]), tree=int(row["tree"]),
                node_id=int(row["node"]), depth=int(row["depth"]),
                n_rows=int(row["n_rows"]), gain=float(row["gain"]),
                neg_ratio=float(row["neg_ratio"]), decision=row["decision"],
            ))
    return records


def _aggregate(per_seed_reports: list[EvalReport]) -> dict:
    def mean_ci(vals: list[float]) -> dict:
        arr = np.array(vals, dtype=np.float64)
        ci = 1.96 * arr.std(ddof=1) / np.sqrt(len(arr)) if len(arr) > 1 else 0.0
        return {"mean": float(arr.mean()), "ci95": float(ci)}

    tasks: dict[str, list[float]] = {}
    for rep in per_seed_reports:
        for name, v in rep.per_task_auc.items():
            tasks.setdefault(name, []).append(v)
    return {
        "per_task": {name: mean_ci(vals) for name, vals in tasks.items()},
        "avg": mean_ci([rep.avg_auc for rep in per_seed_reports]),
    }


def cmd_train(args: argparse.Namespace) -> int:
    cfg, run = _merge_config(args)
    ds = _load_dataset(run)
    out_dir = run["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    seeds = run["seeds"]
    ratios = run["split_ratios"]

    def one(seed: int):
        return _train_once(ds, ratios, cfg, run, seed)

    n_threads = _n_threads()
    if n_threads > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(s) for s in seeds]

    per_seed_entries = []
    eval_reports = []
    diag = []
    for seed, (split, model, report, ev) in zip(seeds, results):
        suffix = "" if len(seeds) == 1 else f"_seed{seed}"
        model_file = os.path.join(out_dir, f"model{suffix}.json")
        if run["run_mode"] == "mtb":
            model_file = model.save(os.path.join(out_dir, f"mtb{suffix}"))
        else:
            model.save(model_file)
        split.save(os.path.join(out_dir, f"split{suffix}.txt"))
        per_seed_entries.append({
            "seed": seed,
            "model_file": model_file,
            "best_iteration": report.best_iteration,
            "valid_curve": report.iter_valid_avg_auc,
            "test": ev.to_dict(),
        })
        eval_reports.append(ev)
        diag.append((seed, report))

    report_payload = {
        "config": cfg.to_dict(),
        "run_mode": run["run_mode"],
        "data": run.get("data"),
        "split_ratios": ratios,
        "seeds": seeds,
        "per_seed": per_seed_entries,
        "aggregate": _aggregate(eval_reports),
    }
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report_payload, fh, indent=1)
    _write_diagnostics_csv(os.path.join(out_dir, "diagnostics.csv"), diag)

    agg = report_payload["aggregate"]["avg"]
    print(f"avg test AUC: {agg['mean']:.4f} ± {agg['ci95']:.4f} over {len(seeds)} seed(s)")
    print(f"outputs in {out_dir}/")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    model = load_any_model(args.model)
    run = {
        "data": args.data,
        "data_format": args.data_format or "csv",
        "label_col": args.label_col or "label",
        "task_col": args.task_col or "task",
    }
    ds = _load_dataset(run)
    scores = model.predict_dataset(ds, policy=args.policy)
    out = args.out or "-"
    fh = sys.stdout if out == "-" else open(out, "w", encoding="utf-8")
    try:
        writer = csv.writer(fh)
        writer.writerow(["row", "task", "score"])
        for i, s in enumerate(scores):
            writer.writerow([i, ds.task_labels[ds.task_of[i]], repr(float(s))])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    model = load_any_model(args.model)
    run = {
        "data": args.data,
        "data_format": args.data_format or "csv",
        "label_col": args.label_col or "label",
        "task_col": args.task_col or "task",
    }
    ds = _load_dataset(run)
    if getattr(model, "n_features", ds.n_features) != ds.n_features:
        raise ModelError(
            f"schema mismatch: data has {ds.n_features} features, "
            f"model expects {model.n_features}"
        )
    if args.split:
        split = DataSplit.load(args.split)
        rows = getattr(split, args.rows)
    else:
        rows = np.arange(ds.n_rows)
    scores = model.predict_dataset(ds, rows, policy=args.policy)
    ev = evaluate_scores(
        scores, ds.labels[rows], ds.task_of[rows], ds.task_labels,
        threshold=args.threshold,
    )
    print(ev.to_table())
    if ev.thresholded is not None:
        t = ev.thresholded
        print(f"threshold={t.threshold:g}: accuracy={t.accuracy:.4f} "
              f"precision={t.precision:.4f} recall={t.recall:.4f} f1={t.f1:.4f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(ev.to_json())
    return 0


def cmd_diagnose(args: argparse.Namespace) -> int:
    records = read_diagnostics_csv(args.diagnostics)
    hist = rneg_histogram(records)
    if args.out:
        hist.to_csv(args.out)
    print(f"nodes with an evaluated candidate: {hist.n_nodes}")
    print(f"fraction with negative task gain present: {hist.frac_nonzero:.4f}")
    print(f"fraction with negative-gain share > 0.5:  {hist.frac_above_half:.4f}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg, run = _merge_config(args)
    ds = _load_dataset(run)
    r_grid = [float(x) for x in args.R_grid.split(",")] if args.R_grid else [cfg.max_neg_sample_ratio]
    volumes = [float(x) for x in args.volumes.split(",")] if args.volumes else [1.0]
    seeds = run["seeds"]
    ratios = run["split_ratios"]

    jobs = [(r, vol, seed) for r in r_grid for vol in volumes for seed in seeds]

    def one(job):
        r, vol, seed = job
        split = split_dataset(ds, tuple(ratios), seed)
        train_rows = split.train
        if vol < 1.0:
            train_rows = subsample_per_task(ds, train_rows, vol, seed)
        sub_split = DataSplit(train=train_rows, valid=split.valid,
                              test=split.test, seed=seed)
        cfg_s = replace(cfg, seed=seed, max_neg_sample_ratio=r)
        model, _ = train(ds, sub_split, cfg_s)
        scores = model.predict_dataset(ds, split.test)
        return evaluate_scores(scores, ds.labels[split.test],
                               ds.task_of[split.test], ds.task_labels)

    n_threads = _n_threads()
    if n_threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            evs = list(pool.map(one, jobs))
    else:
        evs = [one(j) for j in jobs]

    out = args.out or "sweep.csv"
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["R", "volume", "seed",
                         *[f"auc_{t}" for t in ds.task_labels], "avg_auc"])
        for (r, vol, seed), ev in zip(jobs, evs):
            per_task = [repr(ev.per_task_auc.get(t, float("nan")))
                        for t in ds.task_labels]
            writer.writerow([r, vol, seed, *per_task, repr(ev.avg_auc)])
    print(f"wrote {len(jobs)} sweep rows to {out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    if args.spec:
        spec = synthgen.SynthSpec.load(args.spec)
        if args.seed is not None:
            spec.seed = args.seed
    else:
        spec = synthgen.conflict_spec(
            n_tasks=args.n_tasks, rows_per_task=args.rows_per_task,
            n_features=args.n_features, conflict_rate=args.conflict_rate,
            label_noise=args.noise, seed=args.seed or 0,
        )
    ds = synthgen.generate(spec)
    out = args.out or "synth.csv"
    save_csv(ds, out)
    spec.save(os.path.splitext(out)[0] + "_spec.json")
    print(f"wrote {ds.n_rows} rows x {ds.n_features} features "
          f"({ds.n_tasks} tasks) to {out}")
    return 0


def cmd_export_dot(args: argparse.Namespace) -> int:
    model = load_any_model(args.model)
    if not isinstance(model, Model):
        raise ConfigError("export-dot requires a single-forest model file")
    if not 0 <= args.tree < len(model.trees):
        raise ConfigError(
            f"tree index {args.tree} out of range [0, {len(model.trees)})"
        )
    dot = model.trees[args.tree].to_dot(model.task_labels, name=f"tree{args.tree}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(dot + "\n")
    else:
        print(dot)
    return 0


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--data", help="input data file")
    p.add_argument("--data-format", choices=["csv", "libsvm"], dest="data_format")
    p.add_argument("--label-col", dest="label_col")
    p.add_argument("--task-col", dest="task_col")
    p.add_argument("--mode", choices=[*MODES, "mtb"])
    p.add_argument("--loss", choices=["logloss", "mse"])
    p.add_argument("--n-trees", type=int, dest="n_trees")
    p.add_argument("--max-depth", type=int, dest="max_depth")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--reg-lambda", type=float, dest="reg_lambda")
    p.add_argument("--reg-alpha", type=float, dest="reg_alpha")
    p.add_argument("--gamma", type=float)
    p.add_argument("--min-child-weight", type=float, dest="min_child_weight")
    p.add_argument("--subsample", type=float)
    p.add_argument("--colsample-bytree", type=float, dest="colsample_bytree")
    p.add_argument("--colsample-bylevel", type=float, dest="colsample_bylevel")
    p.add_argument("--R", type=float, dest="R",
                   help="task-wise split threshold (max_neg_sample_ratio)")
    p.add_argument("--tsgb-lambda", type=float, dest="tsgb_lambda")
    p.add_argument("--tsgb-start-tree", type=int, dest="tsgb_start_tree")
    p.add_argument("--mtb-specific-trees", type=int, dest="mtb_specific_trees",
                   help="per-task forest size in mtb mode (default: n_trees)")
    p.add_argument("--early-stopping-rounds", type=int, dest="early_stopping_rounds")
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=int, help="number of seeds (seed, seed+1, ...)")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="taskboost")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model, write model/report/diagnostics")
    _add_train_flags(p)
    p.add_argument("--threshold", type=float,
                   help="also report thresholded metrics at this score")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score rows with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--data-format", choices=["csv", "libsvm"], dest="data_format")
    p.add_argument("--label-col", dest="label_col")
    p.add_argument("--task-col", dest="task_col")
    p.add_argument("--policy", choices=["majority", "strict"], default="majority")
    p.add_argument("--out", help="output CSV ('-' for stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="per-task AUC report for a model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--data-format", choices=["csv", "libsvm"], dest="data_format")
    p.add_argument("--label-col", dest="label_col")
    p.add_argument("--task-col", dest="task_col")
    p.add_argument("--split", help="split file saved by train")
    p.add_argument("--rows", choices=["train", "valid", "test"], default="test")
    p.add_argument("--threshold", type=float)
    p.add_argument("--policy", choices=["majority", "strict"], default="majority")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("diagnose", help="negative-task-gain histogram from diagnostics")
    p.add_argument("--diagnostics", required=True)
    p.add_argument("--out", help="histogram CSV path")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("sweep", help="grid over split threshold and data volume")
    _add_train_flags(p)
    p.add_argument("--R-grid", dest="R_grid", help="comma-separated R values")
    p.add_argument("--volumes", help="comma-separated training-volume fractions")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="generate a synthetic multi-task dataset")
    p.add_argument("--spec", help="SynthSpec JSON file")
    p.add_argument("--n-tasks", type=int, default=8, dest="n_tasks")
    p.add_argument("--rows-per-task", type=int, default=2000, dest="rows_per_task")
    p.add_argument("--n-features", type=int, default=20, dest="n_features")
    p.add_argument("--conflict-rate", type=float, default=0.5, dest="conflict_rate")
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output CSV path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("export-dot", help="Graphviz DOT for one tree of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--tree", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_dot)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ModelError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
