"""Per-task ROC-AUC (the headline metric), thresholded metrics, and
negative-task-gain diagnostics summaries.

AUC uses the Mann-Whitney formulation with ties counting one half, computed
from rank sums in O(n log n).  Tasks whose labels are single-class in the
evaluated rows are excluded from the average with a warning.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import UndefinedMetricError


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean rank of their group."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    # group boundaries of equal values
    boundaries = np.flatnonzero(np.diff(sorted_vals)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [len(values)]))
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = 0.5 * (s + e + 1)
    return ranks


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability a positive outranks a negative (ties count 1/2)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    pos = labels == 1.0
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"AUC undefined: {n_pos} positives, {n_neg} negatives"
        )
    ranks = _average_ranks(scores)
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass
class ThresholdedMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    threshold: float
    no_positive_predictions: bool = False

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "threshold": self.threshold,
            "no_positive_predictions": self.no_positive_predictions,
        }


def thresholded_metrics(
    scores: np.ndarray, labels: np.ndarray, threshold: float
) -> ThresholdedMetrics:
    """Confusion-matrix metrics with score >= threshold predicted positive."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    pred = scores >= threshold
    actual = labels == 1.0
    tp = int((pred & actual).sum())
    fp = int((pred & ~actual).sum())
    fn = int((~pred & actual).sum())
    tn = int((~pred & ~actual).sum())
    no_pos = (tp + fp) == 0
    precision = 0.0 if no_pos else tp / (tp + fp)
    recall = 0.0 if (tp + fn) == 0 else tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return ThresholdedMetrics(
        accuracy=(tp + tn) / len(labels),
        precision=precision,
        recall=recall,
        f1=f1,
        threshold=threshold,
        no_positive_predictions=no_pos,
    )


@dataclass
class EvalReport:
    """Per-task AUC plus the unweighted average, optionally with
    thresholded metrics over all evaluated rows."""

    per_task_auc: dict[str, float]
    avg_auc: float
    excluded_tasks: list[str] = field(default_factory=list)
    thresholded: ThresholdedMetrics | None = None

    def to_dict(self) -> dict:
        out = {
            "per_task_auc": self.per_task_auc,
            "avg_auc": self.avg_auc,
            "excluded_tasks": self.excluded_tasks,
        }
        if self.thresholded is not None:
            out["thresholded"] = self.thresholded.to_dict()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self) -> str:
        """Aligned text table: one row per task, AVG last."""
        rows = [("Task", "AUC")]
        rows += [(name, f"{v:.4f}") for name, v in self.per_task_auc.items()]
        rows.append(("AVG", f"{self.avg_auc:.4f}"))
        width = max(len(r[0]) for r in rows)
        lines = [f"{name:<{width}}  {val}" for name, val in rows]
        lines.insert(1, "-" * (width + 8))
        return "\n".join(lines)


def evaluate_scores(
    scores: np.ndarray,
    labels: np.ndarray,
    task_of: np.ndarray,
    task_labels: list[str],
    threshold: float | None = None,
) -> EvalReport:
    """Per-task AUC report; single-class tasks are skipped with a warning."""
    per_task: dict[str, float] = {}
    excluded: list[str] = []
    for t, name in enumerate(task_labels):
        mask = task_of == t
        if not mask.any():
            continue
        try:
            per_task[name] = auc(scores[mask], labels[mask])
        except UndefinedMetricError:
            warnings.warn(f"task {name!r} has a single class; excluded from AVG")
            excluded.append(name)
    if not per_task:
        raise UndefinedMetricError("no task with both classes present")
    avg = float(np.mean(list(per_task.values())))
    thr = thresholded_metrics(scores, labels, threshold) if threshold is not None else None
    return EvalReport(per_task_auc=per_task, avg_auc=avg,
                      excluded_tasks=excluded, thresholded=thr)


def mean_task_auc(
    scores: np.ndarray, labels: np.ndarray, task_of: np.ndarray, n_tasks: int
) -> float:
    """Unweighted mean per-task AUC, silently skipping single-class tasks
    (the early-stopping monitor; full reports go through evaluate_scores)."""
    vals = []
    for t in range(n_tasks):
        mask = task_of == t
        if not mask.any():
            continue
        try:
            vals.append(auc(scores[mask], labels[mask]))
        except UndefinedMetricError:
            continue
    if not vals:
        raise UndefinedMetricError("validation AUC undefined for every task")
    return float(np.mean(vals))


@dataclass
class RnegHistogram:
    """2-D histogram of evaluated nodes over (log10 of node sample count,
    negative-gain sample share in bins of width 0.05), with the scalar
    summaries used in the training diagnostics."""

    counts: np.ndarray            # shape (n_size_bins, 20)
    size_bin_edges: np.ndarray    # integer log10 bins: floor(log10(n_rows))
    frac_nonzero: float           # fraction of nodes with share > 0
    frac_above_half: float        # fraction of nodes with share > 0.5
    n_nodes: int

    RNEG_BIN_WIDTH = 0.05

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["log10_count_bin", "rneg_bin", "count"])
            for i, size_bin in enumerate(self.size_bin_edges):
                for j in range(self.counts.shape[1]):
                    if self.counts[i, j]:
                        writer.writerow(
                            [int(size_bin), round(j * self.RNEG_BIN_WIDTH, 2),
                             int(self.counts[i, j])]
                        )

    @classmethod
    def from_csv(cls, path: str) -> "RnegHistogram":
        """Reload binned counts; the scalar summaries are recomputed from the
        bins and are therefore approximations of the originals."""
        entries = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                entries.append((int(row["log10_count_bin"]),
                                float(row["rneg_bin"]), int(row["count"])))
        if not entries:
            return cls(counts=np.zeros((0, 20), dtype=np.int64),
                       size_bin_edges=np.zeros(0, dtype=np.int64),
                       frac_nonzero=0.0, frac_above_half=0.0, n_nodes=0)
        size_bins = sorted({e[0] for e in entries})
        index = {b: i for i, b in enumerate(size_bins)}
        counts = np.zeros((len(size_bins), 20), dtype=np.int64)
        for b, rb, c in entries:
            counts[index[b], int(round(rb / cls.RNEG_BIN_WIDTH))] = c
        total = int(counts.sum())
        rneg_marginal = counts.sum(axis=0)
        nonzero = total - int(rneg_marginal[0])
        above_half = int(rneg_marginal[int(round(0.5 / cls.RNEG_BIN_WIDTH)) + 1:].sum())
        return cls(counts=counts, size_bin_edges=np.array(size_bins, dtype=np.int64),
                   frac_nonzero=nonzero / total if total else 0.0,
                   frac_above_half=above_half / total if total else 0.0,
                   n_nodes=total)


def rneg_histogram(records) -> RnegHistogram:
    """Histogram over node diagnostics (any iterable with .n_rows and
    .neg_ratio attributes, e.g. NodeRecord)."""
    sizes = np.array([r.n_rows for r in records], dtype=np.int64)
    ratios = np.array([r.neg_ratio for r in records], dtype=np.float64)
    n = len(sizes)
    if n == 0:
        return RnegHistogram(counts=np.zeros((0, 20), dtype=np.int64),
                             size_bin_edges=np.zeros(0, dtype=np.int64),
                             frac_nonzero=0.0, frac_above_half=0.0, n_nodes=0)
    size_bins_all = np.floor(np.log10(np.maximum(sizes, 1))).astype(np.int64)
    uniq = np.unique(size_bins_all)
    index = {int(b): i for i, b in enumerate(uniq)}
    width = RnegHistogram.RNEG_BIN_WIDTH
    # share of exactly 1.0 lands in the top bin
    rneg_bins = np.minimum((ratios / width).astype(np.int64), 19)
    counts = np.zeros((len(uniq), 20), dtype=np.int64)
    for sb, rb in zip(size_bins_all, rneg_bins):
        counts[index[int(sb)], rb] += 1
    return RnegHistogram(
        counts=counts,
        size_bin_edges=uniq,
        frac_nonzero=float((ratios > 0).mean()),
        frac_above_half=float((ratios > 0.5).mean()),
        n_nodes=n,
    )
