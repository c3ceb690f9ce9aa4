"""Additive training loop over K trees, with shrinkage, row/column
subsampling, optional early stopping, and margin/probability prediction.

Modes: ``pooled`` ignores task structure entirely, ``tsgb`` enables
task-wise splits guarded by the negative-gain sample-share threshold,
``tsgb_lambda`` triggers them by an independent coin flip per node instead,
and ``single_task`` trains one independent pooled model per task.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data import Dataset, DataSplit
from .errors import ConfigError, ModelError
from .evaluation import mean_task_auc
from .objective import LOSSES, base_score, grad_hess, sigmoid
from .tree import LeafNode, NodeRecord, SplitNode, TaskSplitNode, Tree, grow_tree

MODES = ("pooled", "tsgb", "tsgb_lambda", "single_task")

MODEL_FORMAT = "taskboost.model"
PER_TASK_FORMAT = "taskboost.pertask"
FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    """All training hyperparameters; serialized alongside the model."""

    n_trees: int = 100
    max_depth: int = 6
    learning_rate: float = 0.3
    reg_lambda: float = 1.0
    reg_alpha: float = 0.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    subsample: float = 1.0
    colsample_bytree: float = 1.0
    colsample_bylevel: float = 1.0
    max_neg_sample_ratio: float = 0.4   # task-wise split threshold
    tsgb_lambda: float = 0.0            # coin-flip probability for tsgb_lambda mode
    tsgb_start_tree: int = 1            # first tree (1-based) allowed to task-split
    mode: str = "tsgb"
    loss: str = "logloss"
    seed: int = 0
    early_stopping_rounds: int = 0      # 0 disables

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.n_trees < 0:
            raise ConfigError(f"n_trees must be >= 0, got {self.n_trees}")
        if self.max_depth < 0:
            raise ConfigError(f"max_depth must be >= 0, got {self.max_depth}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError(f"learning_rate must be in (0,1], got {self.learning_rate}")
        for name in ("subsample", "colsample_bytree", "colsample_bylevel"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ConfigError(f"{name} must be in (0,1], got {v}")
        if not 0.0 <= self.max_neg_sample_ratio <= 1.0:
            raise ConfigError(
                f"max_neg_sample_ratio must be in [0,1], got {self.max_neg_sample_ratio}"
            )
        if not 0.0 <= self.tsgb_lambda <= 1.0:
            raise ConfigError(f"tsgb_lambda must be in [0,1], got {self.tsgb_lambda}")
        if self.tsgb_start_tree < 1:
            raise ConfigError(f"tsgb_start_tree must be >= 1, got {self.tsgb_start_tree}")
        for name in ("reg_lambda", "reg_alpha", "gamma", "min_child_weight"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.early_stopping_rounds < 0:
            raise ConfigError(
                f"early_stopping_rounds must be >= 0, got {self.early_stopping_rounds}"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg


@dataclass
class TrainReport:
    """Per-iteration validation metric plus all node diagnostics."""

    iter_valid_avg_auc: list[float] = field(default_factory=list)
    best_iteration: int | None = None
    records_per_tree: list[list[NodeRecord]] = field(default_factory=list)
    sub_reports: dict[str, "TrainReport"] | None = None

    def all_records(self) -> list[tuple[int, NodeRecord]]:
        out = []
        for k, recs in enumerate(self.records_per_tree):
            out.extend((k, r) for r in recs)
        if self.sub_reports:
            for rep in self.sub_reports.values():
                out.extend(rep.all_records())
        return out


@dataclass
class Model:
    """An ordered list of trees plus the constant base margin.

    The prediction for (x, t) is the base score plus the routed leaf weight
    of every tree, passed through the sigmoid for logloss.
    """

    trees: list[Tree]
    base_score: float
    loss: str
    n_features: int
    task_labels: list[str]
    config: TrainConfig

    def task_to_dense(self) -> dict[str, int]:
        return {name: t for t, name in enumerate(self.task_labels)}

    def dense_task_ids(self, raw_task_ids) -> np.ndarray:
        lookup = self.task_to_dense()
        return np.array([lookup.get(str(t), -1) for t in raw_task_ids], dtype=np.int64)

    def margins(
        self,
        column_values,
        task_ids: np.ndarray,
        n: int,
        policy: str = "majority",
        n_trees: int | None = None,
    ) -> np.ndarray:
        out = np.full(n, self.base_score, dtype=np.float64)
        trees = self.trees if n_trees is None else self.trees[:n_trees]
        for tree in trees:
            tree.add_margins(column_values, task_ids, out, policy=policy)
        return out

    def predict_dataset(
        self, ds: Dataset, rows: np.ndarray | None = None,
        policy: str = "majority", raw_margin: bool = False,
    ) -> np.ndarray:
        if ds.n_features != self.n_features:
            raise ModelError(
                f"dataset has {ds.n_features} features, model expects {self.n_features}"
            )
        if rows is None:
            rows = np.arange(ds.n_rows)
        rows = np.asarray(rows, dtype=np.int64)
        dense = self.dense_task_ids(np.array(ds.task_labels)[ds.task_of[rows]])
        task_ids = np.full(ds.n_rows, -2, dtype=np.int64)
        task_ids[rows] = dense
        out = np.full(ds.n_rows, self.base_score, dtype=np.float64)
        for tree in self.trees:
            tree.add_margins(ds.column_values, task_ids, out, idx=rows, policy=policy)
        m = out[rows]
        return m if raw_margin or self.loss == "mse" else sigmoid(m)

    def predict_matrix(
        self, features: np.ndarray, task_ids, policy: str = "majority",
        raw_margin: bool = False,
    ) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[1] != self.n_features:
            raise ModelError(
                f"feature matrix shape {features.shape} does not match "
                f"n_features={self.n_features}"
            )
        dense = self.dense_task_ids(task_ids)
        m = self.margins(
            lambda f, idx: features[idx, f], dense, len(features), policy=policy
        )
        return m if raw_margin or self.loss == "mse" else sigmoid(m)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": FORMAT_VERSION,
            "loss": self.loss,
            "base_score": self.base_score,
            "n_features": self.n_features,
            "task_labels": self.task_labels,
            "config": self.config.to_dict(),
            "trees": [_tree_to_records(t) for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Model":
        if data.get("format") != MODEL_FORMAT:
            raise ModelError(f"not a model file (format={data.get('format')!r})")
        if data.get("version") != FORMAT_VERSION:
            raise ModelError(f"unsupported model version {data.get('version')!r}")
        return cls(
            trees=[_tree_from_records(t) for t in data["trees"]],
            base_score=float(data["base_score"]),
            loss=data["loss"],
            n_features=int(data["n_features"]),
            task_labels=list(data["task_labels"]),
            config=TrainConfig.from_dict(data["config"]),
        )

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path: str) -> "Model":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ModelError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(data)


def _tree_to_records(tree: Tree) -> list[dict]:
    out = []
    for node in tree.nodes:
        if isinstance(node, SplitNode):
            out.append({
                "kind": "split", "feature": node.feature,
                "threshold": node.threshold, "default_left": node.default_left,
                "left": node.left, "right": node.right,
                "n_rows": node.n_rows, "neg_ratio": node.neg_ratio,
            })
        elif isinstance(node, TaskSplitNode):
            out.append({
                "kind": "task_split",
                "left_tasks": sorted(node.left_tasks),
                "left": node.left, "right": node.right,
                "n_rows": node.n_rows, "n_left": node.n_left,
                "n_right": node.n_right, "neg_ratio": node.neg_ratio,
            })
        else:
            rec = {"kind": "leaf", "weight": node.weight, "n_rows": node.n_rows}
            if node.task_pos is not None:
                present = np.flatnonzero(node.task_pos + node.task_neg)
                rec["task_counts"] = [
                    [int(t), int(node.task_pos[t]), int(node.task_neg[t])]
                    for t in present
                ]
            out.append(rec)
    return out


def _tree_from_records(records: list[dict]) -> Tree:
    n_tasks_hint = 0
    for rec in records:
        for t, _, _ in rec.get("task_counts", []):
            n_tasks_hint = max(n_tasks_hint, t + 1)
        for t in rec.get("left_tasks", []):
            n_tasks_hint = max(n_tasks_hint, t + 1)
    nodes: list = []
    for rec in records:
        kind = rec.get("kind")
        if kind == "split":
            nodes.append(SplitNode(
                feature=int(rec["feature"]), threshold=float(rec["threshold"]),
                default_left=bool(rec["default_left"]), left=int(rec["left"]),
                right=int(rec["right"]), n_rows=int(rec["n_rows"]),
                neg_ratio=float(rec["neg_ratio"]),
            ))
        elif kind == "task_split":
            nodes.append(TaskSplitNode(
                left_tasks=frozenset(int(t) for t in rec["left_tasks"]),
                left=int(rec["left"]), right=int(rec["right"]),
                n_rows=int(rec["n_rows"]), n_left=int(rec["n_left"]),
                n_right=int(rec["n_right"]), neg_ratio=float(rec["neg_ratio"]),
            ))
        elif kind == "leaf":
            pos = neg = None
            if "task_counts" in rec:
                pos = np.zeros(n_tasks_hint, dtype=np.int64)
                neg = np.zeros(n_tasks_hint, dtype=np.int64)
                for t, p, n in rec["task_counts"]:
                    pos[t], neg[t] = p, n
            nodes.append(LeafNode(weight=float(rec["weight"]),
                                  n_rows=int(rec["n_rows"]),
                                  task_pos=pos, task_neg=neg))
        else:
            raise ModelError(f"unknown node kind {kind!r}")
    return Tree(nodes=nodes)


@dataclass
class PerTaskModel:
    """Independent single-task models, routed by task id at prediction."""

    models: dict[str, Model]

    @property
    def loss(self) -> str:
        return next(iter(self.models.values())).loss

    @property
    def n_features(self) -> int:
        return next(iter(self.models.values())).n_features

    @property
    def task_labels(self) -> list[str]:
        return list(self.models)

    def predict_dataset(
        self, ds: Dataset, rows: np.ndarray | None = None,
        policy: str = "majority", raw_margin: bool = False,
    ) -> np.ndarray:
        if rows is None:
            rows = np.arange(ds.n_rows)
        rows = np.asarray(rows, dtype=np.int64)
        out = np.zeros(len(rows), dtype=np.float64)
        row_labels = np.array(ds.task_labels, dtype=object)[ds.task_of[rows]]
        for name in np.unique(row_labels):
            sel = row_labels == name
            if name not in self.models:
                raise ModelError(f"no per-task model for task {name!r}")
            out[sel] = self.models[name].predict_dataset(
                ds, rows[sel], policy=policy, raw_margin=raw_margin
            )
        return out

    def predict_matrix(
        self, features: np.ndarray, task_ids, policy: str = "majority",
        raw_margin: bool = False,
    ) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        labels = np.array([str(t) for t in task_ids], dtype=object)
        out = np.zeros(len(features), dtype=np.float64)
        for name in np.unique(labels):
            sel = labels == name
            if name not in self.models:
                raise ModelError(f"no per-task model for task {name!r}")
            out[sel] = self.models[name].predict_matrix(
                features[sel], labels[sel], policy=policy, raw_margin=raw_margin
            )
        return out

    def to_dict(self) -> dict:
        return {
            "format": PER_TASK_FORMAT,
            "version": FORMAT_VERSION,
            "tasks": list(self.models),
            "models": [m.to_dict() for m in self.models.values()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PerTaskModel":
        if data.get("format") != PER_TASK_FORMAT:
            raise ModelError(f"not a per-task model file (format={data.get('format')!r})")
        return cls(models={
            name: Model.from_dict(m)
            for name, m in zip(data["tasks"], data["models"])
        })

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def _iteration_rngs(seed: int, iteration: int):
    children = np.random.SeedSequence([seed, iteration]).spawn(3)
    return tuple(np.random.default_rng(c) for c in children)


def train(
    ds: Dataset,
    split: DataSplit,
    cfg: TrainConfig,
    init_margins: np.ndarray | None = None,
):
    """Train a model; returns (Model, TrainReport).

    With `init_margins` set, boosting continues from those margins and the
    stored base score is zero (used for residual training on top of another
    forest).  In ``single_task`` mode one pooled model is trained per task
    and a PerTaskModel is returned.
    """
    cfg.validate()
    if cfg.early_stopping_rounds > 0 and len(split.valid) == 0:
        raise ConfigError("early stopping requires a nonempty validation split")
    if cfg.mode == "single_task":
        return _train_single_task(ds, split, cfg)

    train_rows = np.asarray(split.train, dtype=np.int64)
    if len(train_rows) == 0:
        raise ConfigError("empty training split")
    valid_rows = np.asarray(split.valid, dtype=np.int64)

    margins = np.zeros(ds.n_rows, dtype=np.float64)
    if init_margins is not None:
        margins[:] = init_margins
        base = 0.0
    else:
        base = base_score(ds.labels[train_rows], cfg.loss)
        margins[:] = base

    trees: list[Tree] = []
    report = TrainReport()
    best_metric = -np.inf
    best_iter: int | None = None

    n_feats = ds.n_features
    for s in range(cfg.n_trees):
        rng_rows, rng_cols, rng_task = _iteration_rngs(cfg.seed, s)

        grads = grad_hess(margins, ds.labels, cfg.loss)
        if cfg.subsample < 1.0:
            k = max(1, int(round(cfg.subsample * len(train_rows))))
            rows = np.sort(rng_rows.choice(train_rows, size=k, replace=False))
        else:
            rows = train_rows
        if cfg.colsample_bytree < 1.0:
            k = max(1, int(round(cfg.colsample_bytree * n_feats)))
            feats = np.sort(rng_cols.choice(n_feats, size=k, replace=False))
        else:
            feats = np.arange(n_feats)

        allow_task = cfg.mode in ("tsgb", "tsgb_lambda") and (s + 1) >= cfg.tsgb_start_tree
        tree, records = grow_tree(
            ds, grads, rows, feats, cfg,
            rng_cols=rng_cols, rng_task=rng_task,
            allow_task_splits=allow_task,
        )
        # out-of-sample rows still receive the update: apply to every row
        tree.add_margins(ds.column_values, ds.task_of, margins)
        trees.append(tree)
        report.records_per_tree.append(records)

        if len(valid_rows):
            metric = mean_task_auc(
                margins[valid_rows], ds.labels[valid_rows],
                ds.task_of[valid_rows], ds.n_tasks,
            )
            report.iter_valid_avg_auc.append(metric)
            if metric > best_metric:
                best_metric = metric
                best_iter = s
            if (cfg.early_stopping_rounds > 0 and best_iter is not None
                    and s - best_iter >= cfg.early_stopping_rounds):
                trees = trees[: best_iter + 1]
                report.records_per_tree = report.records_per_tree[: best_iter + 1]
                break

    report.best_iteration = best_iter
    model = Model(
        trees=trees, base_score=base, loss=cfg.loss,
        n_features=ds.n_features, task_labels=list(ds.task_labels), config=cfg,
    )
    return model, report


def _train_single_task(ds: Dataset, split: DataSplit, cfg: TrainConfig):
    models: dict[str, Model] = {}
    sub_reports: dict[str, TrainReport] = {}
    for t, name in enumerate(ds.task_labels):
        rows = np.flatnonzero(ds.task_of == t)
        sub, kept = ds.subset(rows)
        sub_split = split.restrict(kept)
        sub_cfg = replace(cfg, mode="pooled")
        model, rep = train(sub, sub_split, sub_cfg)
        models[name] = model
        sub_reports[name] = rep
    report = TrainReport(sub_reports=sub_reports)
    return PerTaskModel(models=models), report


def predict(model, features, task_ids=None, policy: str = "majority") -> np.ndarray:
    """Score rows with any trained model.

    `features` may be a Dataset (then `task_ids` defaults to its own task
    column) or a 2-D array with NaN for missing cells plus explicit task
    identifiers.  Output is a probability for logloss models, a raw value
    for mse.
    """
    if isinstance(features, Dataset):
        return model.predict_dataset(features, policy=policy)
    if task_ids is None:
        raise ConfigError("task_ids is required when features is a plain matrix")
    return model.predict_matrix(features, task_ids, policy=policy)


def load_any_model(path: str):
    """Load a model file of any supported format."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: not valid JSON ({exc})") from None
    fmt = data.get("format")
    if fmt == MODEL_FORMAT:
        return Model.from_dict(data)
    if fmt == PER_TASK_FORMAT:
        return PerTaskModel.from_dict(data)
    if fmt == "taskboost.mtb":
        from .baselines import MtbModel
        return MtbModel.load(path)
    raise ModelError(f"{path}: unknown model format {fmt!r}")
