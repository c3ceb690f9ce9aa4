"""Baselines expressible through the boosting engine: per-task training and
the two-stage shared + task-specific forest composition.

The two-stage model trains a task-common forest on all tasks (no task
splits), then boosts each task's own forest from the common forest's
margins; the final margin is the sum of both, with the sigmoid applied once.
"""
from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .booster import Model, PerTaskModel, TrainConfig, TrainReport, train
from .data import Dataset, DataSplit
from .errors import ModelError
from .objective import sigmoid

MTB_FORMAT = "taskboost.mtb"


@dataclass
class MtbModel:
    """A task-common forest plus one residual forest per task."""

    common: Model
    specific: dict[str, Model]

    @property
    def loss(self) -> str:
        return self.common.loss

    @property
    def n_features(self) -> int:
        return self.common.n_features

    @property
    def task_labels(self) -> list[str]:
        return self.common.task_labels

    def predict_dataset(
        self, ds: Dataset, rows: np.ndarray | None = None,
        policy: str = "majority", raw_margin: bool = False,
    ) -> np.ndarray:
        if rows is None:
            rows = np.arange(ds.n_rows)
        rows = np.asarray(rows, dtype=np.int64)
        margin = self.common.predict_dataset(ds, rows, policy=policy, raw_margin=True)
        row_labels = np.array(ds.task_labels, dtype=object)[ds.task_of[rows]]
        for name, model in self.specific.items():
            sel = row_labels == name
            if sel.any():
                margin[sel] += model.predict_dataset(
                    ds, rows[sel], policy=policy, raw_margin=True
                )
        if raw_margin or self.loss == "mse":
            return margin
        return sigmoid(margin)

    def predict_matrix(
        self, features: np.ndarray, task_ids, policy: str = "majority",
        raw_margin: bool = False,
    ) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        margin = self.common.predict_matrix(features, task_ids, policy=policy,
                                            raw_margin=True)
        labels = np.array([str(t) for t in task_ids], dtype=object)
        for name, model in self.specific.items():
            sel = labels == name
            if sel.any():
                margin[sel] += model.predict_matrix(
                    features[sel], labels[sel], policy=policy, raw_margin=True
                )
        if raw_margin or self.loss == "mse":
            return margin
        return sigmoid(margin)

    def save(self, directory: str) -> str:
        """Write common/specific model files plus a manifest referencing
        them; returns the manifest path."""
        os.makedirs(directory, exist_ok=True)
        self.common.save(os.path.join(directory, "common.json"))
        entries = {}
        for i, (name, model) in enumerate(self.specific.items()):
            fname = f"task_{i}.json"
            model.save(os.path.join(directory, fname))
            entries[name] = fname
        manifest = {
            "format": MTB_FORMAT,
            "version": 1,
            "common": "common.json",
            "specific": entries,
        }
        path = os.path.join(directory, "manifest.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1)
        return path

    @classmethod
    def load(cls, manifest_path: str) -> "MtbModel":
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
        if manifest.get("format") != MTB_FORMAT:
            raise ModelError(f"{manifest_path}: not a two-stage model manifest")
        base = os.path.dirname(manifest_path)
        common = Model.load(os.path.join(base, manifest["common"]))
        specific = {
            name: Model.load(os.path.join(base, fname))
            for name, fname in manifest["specific"].items()
        }
        return cls(common=common, specific=specific)


def train_mtb(
    ds: Dataset,
    split: DataSplit,
    cfg_common: TrainConfig,
    cfg_specific: TrainConfig,
    independent_specific: bool = False,
) -> tuple[MtbModel, TrainReport]:
    """Two-stage training: pooled common forest, then per-task forests.

    By default each task's forest continues boosting from the common
    forest's margins; with ``independent_specific`` it is trained from
    scratch and the margins are simply added at prediction.  A task too
    small to grow any tree just keeps an empty forest.
    """
    cfg_common = replace(cfg_common, mode="pooled")
    common, common_report = train(ds, split, cfg_common)

    common_margins = None
    if not independent_specific:
        common_margins = common.predict_dataset(
            ds, np.arange(ds.n_rows), raw_margin=True
        )

    specific: dict[str, Model] = {}
    sub_reports: dict[str, TrainReport] = {}
    for t, name in enumerate(ds.task_labels):
        rows = np.flatnonzero(ds.task_of == t)
        sub, kept = ds.subset(rows)
        sub_split = split.restrict(kept)
        sub_cfg = replace(cfg_specific, mode="pooled")
        if len(sub_split.train) == 0 or sub_cfg.n_trees == 0:
            # too small to boost on: keep an empty forest, the common
            # forest alone scores this task
            specific[name] = Model(
                trees=[], base_score=0.0, loss=sub_cfg.loss,
                n_features=ds.n_features, task_labels=sub.task_labels,
                config=sub_cfg,
            )
            continue
        if sub_cfg.early_stopping_rounds > 0 and len(sub_split.valid) == 0:
            warnings.warn(
                f"task {name!r} has no validation rows; early stopping disabled"
            )
            sub_cfg = replace(sub_cfg, early_stopping_rounds=0)
        init = common_margins[kept] if common_margins is not None else None
        model, rep = train(sub, sub_split, sub_cfg, init_margins=init)
        specific[name] = model
        sub_reports[name] = rep

    report = TrainReport(
        iter_valid_avg_auc=common_report.iter_valid_avg_auc,
        best_iteration=common_report.best_iteration,
        records_per_tree=common_report.records_per_tree,
        sub_reports=sub_reports,
    )
    return MtbModel(common=common, specific=specific), report


def train_st_gb(
    ds: Dataset, split: DataSplit, cfg: TrainConfig
) -> tuple[PerTaskModel, TrainReport]:
    """Independent pooled runs on each task's slice of the data."""
    model, report = train(ds, split, replace(cfg, mode="single_task"))
    return model, report
