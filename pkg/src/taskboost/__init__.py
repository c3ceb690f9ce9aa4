"""Gradient boosted trees for multi-task tabular data.

Trains XGBoost-style second-order boosted trees over rows drawn from
multiple tasks, decomposes every split's gain into per-task contributions,
and can replace a feature-wise split by a task-wise split when too large a
share of a node's samples belongs to tasks the split would hurt.
"""

from .booster import Model, PerTaskModel, TrainConfig, TrainReport, load_any_model, predict, train
from .data import Dataset, DataSplit, load_csv, load_libsvm_mt, save_csv, split_dataset
from .errors import ConfigError, DataError, ModelError, UndefinedMetricError
from .evaluation import EvalReport, auc, evaluate_scores, rneg_histogram, thresholded_metrics
from .objective import GradStats, base_score, grad_hess, sigmoid
from .splitting import (
    NodeStats,
    SplitCandidate,
    decide_split,
    find_best_feature_split,
    neg_task_gain_ratio,
    optimal_leaf_weight,
    split_gain,
    task_gains,
)
from .synthgen import SynthSpec, conflict_spec, generate
from .tree import Tree, grow_tree

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "DataSplit",
    "EvalReport",
    "GradStats",
    "Model",
    "ModelError",
    "NodeStats",
    "PerTaskModel",
    "SplitCandidate",
    "SynthSpec",
    "TrainConfig",
    "TrainReport",
    "Tree",
    "UndefinedMetricError",
    "auc",
    "base_score",
    "conflict_spec",
    "decide_split",
    "evaluate_scores",
    "find_best_feature_split",
    "generate",
    "grad_hess",
    "grow_tree",
    "load_any_model",
    "load_csv",
    "load_libsvm_mt",
    "neg_task_gain_ratio",
    "optimal_leaf_weight",
    "predict",
    "rneg_histogram",
    "save_csv",
    "sigmoid",
    "split_dataset",
    "split_gain",
    "task_gains",
    "thresholded_metrics",
    "train",
]
