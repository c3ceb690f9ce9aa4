"""A single regression tree: breadth-first growth, routing, DOT export.

Nodes form a tagged union: a feature split (threshold test with a learned
default direction for missing values), a task split (rows routed by task
membership), or a leaf holding a shrunken weight.  Task splits consume one
depth level like feature splits, so tree size stays bounded by max_depth.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ModelError
from .objective import GradStats
from .splitting import (
    FeatureWise,
    Leaf,
    NodeStats,
    assemble_candidate,
    decide_split,
    optimal_leaf_weight,
    scan_best_splits,
)


@dataclass
class SplitNode:
    feature: int
    threshold: float
    default_left: bool
    left: int
    right: int
    n_rows: int
    neg_ratio: float


@dataclass
class TaskSplitNode:
    left_tasks: frozenset[int]
    left: int
    right: int
    n_rows: int
    n_left: int
    n_right: int
    neg_ratio: float


@dataclass
class LeafNode:
    weight: float
    n_rows: int
    # per-task (positive, negative) training sample counts, len T each
    task_pos: np.ndarray | None = None
    task_neg: np.ndarray | None = None


TreeNode = SplitNode | TaskSplitNode | LeafNode


@dataclass
class TaskSums:
    """Slim per-task gradient sums kept in diagnostics (no row sets)."""

    counts: np.ndarray
    gt: np.ndarray
    ht: np.ndarray

    @classmethod
    def of(cls, stats: NodeStats) -> "TaskSums":
        return cls(counts=stats.counts.copy(), gt=stats.gt.copy(), ht=stats.ht.copy())


@dataclass
class NodeRecord:
    """One evaluated split candidate, as recorded during growth."""

    node_id: int
    depth: int
    n_rows: int
    gain: float
    neg_ratio: float
    task_gains: np.ndarray
    decision: str           # "feature" or "task"
    feature: int
    threshold: float
    parent_sums: TaskSums
    left_sums: TaskSums
    right_sums: TaskSums


@dataclass
class Tree:
    """Array-of-nodes tree; node 0 is the root, children by index."""

    nodes: list[TreeNode] = field(default_factory=list)

    def n_leaves(self) -> int:
        return sum(isinstance(n, LeafNode) for n in self.nodes)

    def n_task_splits(self) -> int:
        return sum(isinstance(n, TaskSplitNode) for n in self.nodes)

    def route(self, values: np.ndarray, task: int, policy: str = "majority") -> float:
        """Weight of the leaf reached by one sample.

        `values` is a dense feature vector with NaN for missing cells;
        `task` is a dense task id, or -1 for a task unknown to the model
        (resolved per `policy`: "majority" follows the heavier training side
        of each task split, "strict" raises).
        """
        nid = 0
        while True:
            node = self.nodes[nid]
            if isinstance(node, LeafNode):
                return node.weight
            if isinstance(node, SplitNode):
                v = values[node.feature]
                if np.isnan(v):
                    nid = node.left if node.default_left else node.right
                else:
                    nid = node.left if v < node.threshold else node.right
            else:
                if task < 0:
                    if policy == "strict":
                        raise ModelError("unseen task id under strict routing policy")
                    nid = node.left if node.n_left >= node.n_right else node.right
                else:
                    nid = node.left if task in node.left_tasks else node.right

    def add_margins(
        self,
        column_values,
        task_ids: np.ndarray,
        out: np.ndarray,
        idx: np.ndarray | None = None,
        policy: str = "majority",
    ) -> None:
        """Add this tree's leaf weights to `out` for all rows at once.

        `column_values(feature, rows)` must return the feature values for
        the given row positions (NaN = missing); `task_ids` holds dense ids
        with -1 for unseen tasks.
        """
        if idx is None:
            idx = np.arange(len(out))
        stack = [(0, idx)]
        while stack:
            nid, rows = stack.pop()
            if len(rows) == 0:
                continue
            node = self.nodes[nid]
            if isinstance(node, LeafNode):
                out[rows] += node.weight
            elif isinstance(node, SplitNode):
                v = column_values(node.feature, rows)
                go_left = np.where(np.isnan(v), node.default_left, v < node.threshold)
                stack.append((node.left, rows[go_left]))
                stack.append((node.right, rows[~go_left]))
            else:
                tasks = task_ids[rows]
                unseen = tasks < 0
                if unseen.any() and policy == "strict":
                    raise ModelError(
                        f"unseen task ids at rows {rows[unseen][:10].tolist()} "
                        "under strict routing policy"
                    )
                in_left = np.isin(tasks, np.fromiter(node.left_tasks, dtype=np.int64))
                if unseen.any():
                    in_left[unseen] = node.n_left >= node.n_right
                stack.append((node.left, rows[in_left]))
                stack.append((node.right, rows[~in_left]))

    def to_dot(self, task_labels: list[str] | None = None, name: str = "tree") -> str:
        """Graphviz rendering: split conditions with their negative-task-gain
        share, task-split nodes with the left task set, leaves with weight
        and per-task (pos|neg) counts."""
        def task_name(t: int) -> str:
            raw = task_labels[t] if task_labels else str(t)
            return raw.replace("\\", "\\\\").replace('"', '\\"')

        lines = [f"digraph {name} {{", "  node [shape=box];"]
        for i, node in enumerate(self.nodes):
            if isinstance(node, SplitNode):
                label = f"f{node.feature} < {node.threshold:g}\\nR_neg={node.neg_ratio:.4f}"
                lines.append(f'  n{i} [label="{label}"];')
                lines.append(f'  n{i} -> n{node.left} [label="yes{", missing" if node.default_left else ""}"];')
                lines.append(f'  n{i} -> n{node.right} [label="no{"" if node.default_left else ", missing"}"];')
            elif isinstance(node, TaskSplitNode):
                names = ",".join(task_name(t) for t in sorted(node.left_tasks))
                label = f"tasks {{{names}}} left\\nR_neg={node.neg_ratio:.4f}"
                lines.append(f'  n{i} [label="{label}"];')
                lines.append(f"  n{i} -> n{node.left};")
                lines.append(f"  n{i} -> n{node.right};")
            else:
                label = f"w={node.weight:.6g}"
                if node.task_pos is not None:
                    present = np.flatnonzero(node.task_pos + node.task_neg)
                    counts = " ".join(
                        f"{task_name(t)}:+{int(node.task_pos[t])}|-{int(node.task_neg[t])}"
                        for t in present
                    )
                    label += f"\\n{counts}"
                lines.append(f'  n{i} [label="{label}"];')
        lines.append("}")
        return "\n".join(lines)


def grow_tree(
    ds: Dataset,
    grads: GradStats,
    row_sample: np.ndarray,
    feature_sample_bytree: np.ndarray,
    cfg,
    rng_cols: np.random.Generator,
    rng_task: np.random.Generator,
    allow_task_splits: bool = True,
) -> tuple[Tree, list[NodeRecord]]:
    """Grow one tree breadth-first over the sampled rows and features.

    Stops a branch at max_depth, when no positive-gain candidate satisfies
    min_child_weight, or when a node is too small.  Leaf weights are the
    shrunken optimal weights.  Every node with an evaluated candidate yields
    a NodeRecord regardless of the decision taken.
    """
    n_tasks = ds.n_tasks
    labels = ds.labels
    tree = Tree()
    records: list[NodeRecord] = []
    root = NodeStats.from_rows(np.asarray(row_sample, dtype=np.int64),
                               ds.task_of, grads.g, grads.h, n_tasks)
    tree.nodes.append(None)  # placeholder, filled per decision
    frontier: list[tuple[int, NodeStats]] = [(0, root)]
    depth = 0
    tree_feats = np.sort(np.asarray(feature_sample_bytree, dtype=np.int64))

    def make_leaf(nid: int, stats: NodeStats) -> None:
        w = optimal_leaf_weight(stats.G, stats.H, cfg.reg_lambda,
                                cfg.reg_alpha, cfg.learning_rate)
        tasks = ds.task_of[stats.rows]
        pos = np.bincount(tasks, weights=labels[stats.rows] == 1.0,
                          minlength=n_tasks).astype(np.int64)
        tree.nodes[nid] = LeafNode(weight=w, n_rows=stats.n_rows,
                                   task_pos=pos, task_neg=stats.counts - pos)

    while frontier:
        if depth >= cfg.max_depth:
            for nid, stats in frontier:
                make_leaf(nid, stats)
            break

        searchable: list[tuple[int, NodeStats]] = []
        for nid, stats in frontier:
            if stats.n_rows < 2 or stats.H < 2.0 * cfg.min_child_weight:
                make_leaf(nid, stats)
            else:
                searchable.append((nid, stats))
        if not searchable:
            break

        # per-node feature draw from the tree-level sample
        k_level = len(tree_feats)
        if cfg.colsample_bylevel < 1.0:
            k_level = max(1, int(round(cfg.colsample_bylevel * len(tree_feats))))
        allowed = np.zeros((len(searchable), ds.n_features), dtype=np.uint8)
        for slot in range(len(searchable)):
            if k_level == len(tree_feats):
                feats = tree_feats
            else:
                feats = np.sort(rng_cols.choice(tree_feats, size=k_level, replace=False))
            allowed[slot, feats] = 1

        stats_list = [st for _, st in searchable]
        _, feat, thr, dl = scan_best_splits(
            ds, grads, stats_list, allowed,
            cfg.reg_lambda, cfg.gamma, cfg.min_child_weight,
        )

        next_frontier: list[tuple[int, NodeStats]] = []
        for slot, (nid, stats) in enumerate(searchable):
            candidate = None
            if feat[slot] >= 0:
                candidate = assemble_candidate(
                    ds, grads, stats, int(feat[slot]), float(thr[slot]),
                    bool(dl[slot]), cfg.reg_lambda, cfg.gamma,
                )
            trigger = None
            if candidate is not None:
                if not allow_task_splits:
                    trigger = False
                elif cfg.mode == "tsgb_lambda":
                    trigger = bool(rng_task.random() < cfg.tsgb_lambda)
            decision = decide_split(
                candidate, cfg.max_neg_sample_ratio, stats, depth, cfg,
                task_split_trigger=trigger,
            )

            if isinstance(decision, Leaf):
                make_leaf(nid, stats)
                continue

            left_id = len(tree.nodes)
            right_id = left_id + 1
            tree.nodes.extend([None, None])

            if isinstance(decision, FeatureWise):
                cand = decision.candidate
                tree.nodes[nid] = SplitNode(
                    feature=cand.feature, threshold=cand.threshold,
                    default_left=cand.default_left, left=left_id,
                    right=right_id, n_rows=stats.n_rows,
                    neg_ratio=cand.neg_ratio,
                )
                left_stats, right_stats = cand.left_stats, cand.right_stats
                kind = "feature"
            else:
                cand = decision.source
                left_stats = stats.restrict_tasks(
                    ds.task_of, np.fromiter(decision.left_tasks, dtype=np.int64))
                right_stats = stats.restrict_tasks(
                    ds.task_of, np.fromiter(decision.right_tasks, dtype=np.int64))
                tree.nodes[nid] = TaskSplitNode(
                    left_tasks=decision.left_tasks, left=left_id,
                    right=right_id, n_rows=stats.n_rows,
                    n_left=left_stats.n_rows, n_right=right_stats.n_rows,
                    neg_ratio=cand.neg_ratio,
                )
                kind = "task"

            records.append(NodeRecord(
                node_id=nid, depth=depth, n_rows=stats.n_rows,
                gain=cand.gain, neg_ratio=cand.neg_ratio,
                task_gains=cand.task_gains.copy(), decision=kind,
                feature=cand.feature, threshold=cand.threshold,
                parent_sums=TaskSums.of(stats),
                left_sums=TaskSums.of(cand.left_stats),
                right_sums=TaskSums.of(cand.right_stats),
            ))
            next_frontier.append((left_id, left_stats))
            next_frontier.append((right_id, right_stats))

        frontier = next_frontier
        depth += 1

    return tree, records
