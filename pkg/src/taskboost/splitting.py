"""Node split search: exact greedy feature splits, per-task gain accounting.

For a node this module finds the best feature-wise split by enumerating all
midpoints between distinct sorted present values of each feature, trying both
default directions for missing-valued rows.  The winning candidate's gain is
then decomposed into per-task gains (regularization and the per-leaf penalty
pro-rated by each task's sample share), which drives the decision between a
feature-wise split, a task-wise split, and a leaf.

The inner scan runs over whole tree levels at once (one pass per feature over
its value-sorted column, accumulating per-node prefix sums), compiled with
numba.  `find_best_feature_split` is the single-node entry point over the
same kernel, so there is exactly one search implementation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .data import Dataset
from .errors import ConfigError
from .objective import GradStats


@dataclass
class NodeStats:
    """Gradient statistics of one node, kept per task.

    The global sums are defined as the sum over per-task sums (in task-id
    order), so the task decomposition of any downstream quantity is exact by
    construction rather than merely within tolerance.
    """

    rows: np.ndarray     # row indices at the node, ascending
    counts: np.ndarray   # per-task row counts, len T
    gt: np.ndarray       # per-task sum of g, len T
    ht: np.ndarray       # per-task sum of h, len T
    G: float
    H: float

    @classmethod
    def from_rows(
        cls, rows: np.ndarray, task_of: np.ndarray, g: np.ndarray,
        h: np.ndarray, n_tasks: int,
    ) -> "NodeStats":
        rows = np.asarray(rows, dtype=np.int64)
        tasks = task_of[rows]
        counts = np.bincount(tasks, minlength=n_tasks).astype(np.int64)
        gt = np.bincount(tasks, weights=g[rows], minlength=n_tasks)
        ht = np.bincount(tasks, weights=h[rows], minlength=n_tasks)
        return cls(rows=rows, counts=counts, gt=gt, ht=ht,
                   G=float(gt.sum()), H=float(ht.sum()))

    def restrict_tasks(self, task_of: np.ndarray, keep: np.ndarray) -> "NodeStats":
        """Stats of the sub-node holding only rows of the tasks in `keep`."""
        mask = np.zeros(len(self.counts), dtype=bool)
        mask[keep] = True
        counts = np.where(mask, self.counts, 0)
        gt = np.where(mask, self.gt, 0.0)
        ht = np.where(mask, self.ht, 0.0)
        rows = self.rows[mask[task_of[self.rows]]]
        return NodeStats(rows=rows, counts=counts, gt=gt, ht=ht,
                         G=float(gt.sum()), H=float(ht.sum()))

    @property
    def n_rows(self) -> int:
        return len(self.rows)


@dataclass
class SplitCandidate:
    """Best feature-wise split of a node, with its task decomposition."""

    feature: int
    threshold: float
    default_left: bool
    gain: float
    left_stats: NodeStats
    right_stats: NodeStats
    task_gains: np.ndarray
    neg_ratio: float        # sample share of tasks with negative task gain


@dataclass
class FeatureWise:
    candidate: SplitCandidate


@dataclass
class TaskWise:
    left_tasks: frozenset[int]   # tasks with negative gain go left
    right_tasks: frozenset[int]
    source: SplitCandidate


@dataclass
class Leaf:
    weight: float


SplitDecision = FeatureWise | TaskWise | Leaf


def optimal_leaf_weight(
    G: float, H: float, reg_lambda: float, alpha: float = 0.0, eta: float = 1.0
) -> float:
    """Leaf weight minimising G*w + (H + lambda)*w^2/2, with L1 and shrinkage.

    With alpha > 0 the gradient sum is soft-thresholded first; eta scales the
    result (shrinkage is applied here, never in gain accounting).
    """
    if H + reg_lambda <= 0:
        raise ConfigError(f"H + lambda must be positive, got {H + reg_lambda}")
    if alpha > 0.0:
        if G > alpha:
            G = G - alpha
        elif G < -alpha:
            G = G + alpha
        else:
            G = 0.0
    return eta * (-G / (H + reg_lambda))


def split_gain(
    left: tuple[float, float], right: tuple[float, float],
    reg_lambda: float, gamma: float,
) -> float:
    """Reduction in the regularized node objective from a binary split."""
    gl, hl = left
    gr, hr = right
    return 0.5 * (
        gl * gl / (hl + reg_lambda)
        + gr * gr / (hr + reg_lambda)
        - (gl + gr) ** 2 / (hl + hr + reg_lambda)
    ) - gamma


def task_gains(
    parent: NodeStats,
    left: NodeStats,
    right: NodeStats,
    w_parent: float,
    w_left: float,
    w_right: float,
    reg_lambda: float,
    gamma: float,
) -> np.ndarray:
    """Per-task share of the split gain; sums to the total gain.

    The weights must be the global optimal leaf weights computed from the
    all-task sums (no shrinkage, no L1).  lambda and gamma are pro-rated by
    each task's sample share at the corresponding node, so absent tasks
    contribute nothing.
    """
    if left.n_rows == 0 or right.n_rows == 0:
        raise ConfigError("task_gains requires both children to be nonempty")

    def node_term(stats: NodeStats, w: float) -> np.ndarray:
        share = stats.counts / max(stats.n_rows, 1)
        return stats.gt * w + 0.5 * (stats.ht + share * reg_lambda) * w * w

    parent_share = parent.counts / parent.n_rows
    return (
        node_term(parent, w_parent)
        - node_term(left, w_left)
        - node_term(right, w_right)
        - parent_share * gamma
    )


def neg_task_gain_ratio(gains: np.ndarray, counts: np.ndarray) -> float:
    """Sample share of tasks whose task gain is strictly negative."""
    total = int(counts.sum())
    if total <= 0:
        raise ConfigError("neg_task_gain_ratio requires a nonempty node")
    return float(counts[gains < 0].sum()) / total


@njit(cache=True, nogil=True)
def _scan_level(
    col_values, col_rows, col_starts, g, h, node_of_row, allowed,
    node_G, node_H, node_count, reg_lambda, gamma, min_child_weight,
    best_gain, best_feat, best_thr, best_dl,
):  # pragma: no cover - exercised via find_best_feature_split
    n_features = col_starts.shape[0] - 1
    n_slots = node_G.shape[0]
    gp = np.zeros(n_slots)
    hp = np.zeros(n_slots)
    cnt = np.zeros(n_slots, dtype=np.int64)
    gl = np.zeros(n_slots)
    hl = np.zeros(n_slots)
    last_val = np.zeros(n_slots)
    stamp_pres = np.full(n_slots, -1, dtype=np.int64)
    stamp_sweep = np.full(n_slots, -1, dtype=np.int64)

    for f in range(n_features):
        start = col_starts[f]
        end = col_starts[f + 1]
        if start == end:
            continue
        # pass 1: per-node sums over rows where this feature is present
        for i in range(start, end):
            r = col_rows[i]
            nd = node_of_row[r]
            if nd < 0 or allowed[nd, f] == 0:
                continue
            if stamp_pres[nd] != f:
                stamp_pres[nd] = f
                gp[nd] = 0.0
                hp[nd] = 0.0
                cnt[nd] = 0
            gp[nd] += g[r]
            hp[nd] += h[r]
            cnt[nd] += 1
        # pass 2: prefix sweep in value order, candidates at value changes
        for i in range(start, end):
            r = col_rows[i]
            nd = node_of_row[r]
            if nd < 0 or allowed[nd, f] == 0:
                continue
            v = col_values[i]
            if stamp_sweep[nd] != f:
                stamp_sweep[nd] = f
                gl[nd] = 0.0
                hl[nd] = 0.0
                last_val[nd] = v
            elif v != last_val[nd]:
                thr = 0.5 * (last_val[nd] + v)
                g_all = node_G[nd]
                h_all = node_H[nd]
                parent_term = g_all * g_all / (h_all + reg_lambda)
                n_missing = node_count[nd] - cnt[nd]
                # missing rows to the right (also the canonical direction
                # when the node has no missing rows at all)
                gain_r = -np.inf
                hl_r = hl[nd]
                hr_r = h_all - hl[nd]
                if hl_r >= min_child_weight and hr_r >= min_child_weight:
                    gl_r = gl[nd]
                    gr_r = g_all - gl[nd]
                    gain_r = 0.5 * (
                        gl_r * gl_r / (hl_r + reg_lambda)
                        + gr_r * gr_r / (hr_r + reg_lambda)
                        - parent_term
                    ) - gamma
                if n_missing == 0:
                    # both directions are the same split: prefer default-left
                    gain = gain_r
                    dl = 1
                else:
                    g_miss = g_all - gp[nd]
                    h_miss = h_all - hp[nd]
                    gain_l = -np.inf
                    hl_l = hl[nd] + h_miss
                    hr_l = hp[nd] - hl[nd]
                    if hl_l >= min_child_weight and hr_l >= min_child_weight:
                        gl_l = gl[nd] + g_miss
                        gr_l = gp[nd] - gl[nd]
                        gain_l = 0.5 * (
                            gl_l * gl_l / (hl_l + reg_lambda)
                            + gr_l * gr_l / (hr_l + reg_lambda)
                            - parent_term
                        ) - gamma
                    if gain_l >= gain_r:
                        gain = gain_l
                        dl = 1
                    else:
                        gain = gain_r
                        dl = 0
                if gain > 0.0 and gain > best_gain[nd]:
                    best_gain[nd] = gain
                    best_feat[nd] = f
                    best_thr[nd] = thr
                    best_dl[nd] = dl
                last_val[nd] = v
            gl[nd] += g[r]
            hl[nd] += h[r]


def scan_best_splits(
    ds: Dataset,
    grads: GradStats,
    nodes: list[NodeStats],
    allowed: np.ndarray,
    reg_lambda: float,
    gamma: float,
    min_child_weight: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Run the level kernel for a batch of nodes; ties break toward the
    lowest feature index, then lowest threshold, then default-left."""
    n_slots = len(nodes)
    node_of_row = np.full(ds.n_rows, -1, dtype=np.int64)
    for slot, st in enumerate(nodes):
        node_of_row[st.rows] = slot
    values_flat, rows_flat, starts = ds.value_sorted_flat()
    best_gain = np.full(n_slots, -np.inf)
    best_feat = np.full(n_slots, -1, dtype=np.int64)
    best_thr = np.zeros(n_slots)
    best_dl = np.zeros(n_slots, dtype=np.uint8)
    _scan_level(
        values_flat, rows_flat, starts,
        grads.g, grads.h, node_of_row,
        np.ascontiguousarray(allowed, dtype=np.uint8),
        np.array([st.G for st in nodes]),
        np.array([st.H for st in nodes]),
        np.array([st.n_rows for st in nodes], dtype=np.int64),
        float(reg_lambda), float(gamma), float(min_child_weight),
        best_gain, best_feat, best_thr, best_dl,
    )
    return best_gain, best_feat, best_thr, best_dl


def assemble_candidate(
    ds: Dataset,
    grads: GradStats,
    node: NodeStats,
    feature: int,
    threshold: float,
    default_left: bool,
    reg_lambda: float,
    gamma: float,
) -> SplitCandidate | None:
    """Materialize a scanned split: partition rows, rebuild exact per-task
    stats, and recompute gain and task gains from those shared sums."""
    vals = ds.column_values(feature, node.rows)
    missing = np.isnan(vals)
    go_left = np.where(missing, default_left, vals < threshold)
    left_rows = node.rows[go_left]
    right_rows = node.rows[~go_left]
    if len(left_rows) == 0 or len(right_rows) == 0:
        return None
    n_tasks = len(node.counts)
    left = NodeStats.from_rows(left_rows, ds.task_of, grads.g, grads.h, n_tasks)
    right = NodeStats.from_rows(right_rows, ds.task_of, grads.g, grads.h, n_tasks)
    gain = split_gain((left.G, left.H), (right.G, right.H), reg_lambda, gamma)
    if gain <= 0.0:
        return None
    w_p = -node.G / (node.H + reg_lambda)
    w_l = -left.G / (left.H + reg_lambda)
    w_r = -right.G / (right.H + reg_lambda)
    gains_t = task_gains(node, left, right, w_p, w_l, w_r, reg_lambda, gamma)
    return SplitCandidate(
        feature=int(feature),
        threshold=float(threshold),
        default_left=bool(default_left),
        gain=float(gain),
        left_stats=left,
        right_stats=right,
        task_gains=gains_t,
        neg_ratio=neg_task_gain_ratio(gains_t, node.counts),
    )


def find_best_feature_split(
    node: NodeStats,
    ds: Dataset,
    grads: GradStats,
    feature_subset: np.ndarray | None,
    reg_lambda: float,
    gamma: float,
    min_child_weight: float = 0.0,
) -> SplitCandidate | None:
    """Exact greedy search over one node; None means "make this a leaf"."""
    if node.n_rows < 2:
        return None
    allowed = np.zeros((1, ds.n_features), dtype=np.uint8)
    if feature_subset is None:
        allowed[:] = 1
    else:
        allowed[0, np.asarray(feature_subset, dtype=np.int64)] = 1
    gain, feat, thr, dl = scan_best_splits(
        ds, grads, [node], allowed, reg_lambda, gamma, min_child_weight
    )
    if feat[0] < 0:
        return None
    return assemble_candidate(
        ds, grads, node, int(feat[0]), float(thr[0]), bool(dl[0]),
        reg_lambda, gamma,
    )


def decide_split(
    candidate: SplitCandidate | None,
    threshold_ratio: float,
    node: NodeStats,
    depth: int,
    cfg,
    task_split_trigger: bool | None = None,
) -> SplitDecision:
    """Choose between feature-wise split, task-wise split, and leaf.

    A task-wise split happens when the candidate's negative-gain sample share
    exceeds `threshold_ratio` (or when `task_split_trigger` overrides the
    comparison, as the probabilistic variant does) and both task groups are
    nonempty; every degenerate case falls back to the feature-wise candidate.
    """
    if candidate is None or depth >= cfg.max_depth:
        return Leaf(weight=optimal_leaf_weight(
            node.G, node.H, cfg.reg_lambda, cfg.reg_alpha, cfg.learning_rate
        ))
    trigger = (
        candidate.neg_ratio > threshold_ratio
        if task_split_trigger is None
        else task_split_trigger
    )
    if trigger:
        present = node.counts > 0
        neg = present & (candidate.task_gains < 0)
        pos = present & (candidate.task_gains >= 0)
        if neg.any() and pos.any():
            return TaskWise(
                left_tasks=frozenset(np.flatnonzero(neg).tolist()),
                right_tasks=frozenset(np.flatnonzero(pos).tolist()),
                source=candidate,
            )
    return FeatureWise(candidate=candidate)
