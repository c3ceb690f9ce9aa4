import numpy as np
import pytest

from taskboost.data import Dataset


@pytest.fixture(scope="session", autouse=True)
def warm_split_kernel():
    """Trigger the numba compile once, outside any timed assertion."""
    from taskboost.objective import GradStats
    from taskboost.splitting import NodeStats, find_best_feature_split

    X = np.array([[1.0], [2.0], [np.nan], [4.0]])
    ds = Dataset.from_dense(X, np.array([1, 0, 1, 0.0]),
                            np.zeros(4, dtype=int), task_labels=["w"])
    g = np.array([1.0, -1.0, 1.0, -1.0])
    grads = GradStats(g=g, h=np.ones(4))
    node = NodeStats.from_rows(np.arange(4), ds.task_of, grads.g, grads.h, 1)
    find_best_feature_split(node, ds, grads, None, 1.0, 0.0)


@pytest.fixture
def two_task_ds() -> Dataset:
    """Small deterministic 2-task dataset with a couple of missing cells."""
    rng = np.random.default_rng(42)
    X = rng.normal(size=(40, 3))
    X[3, 1] = np.nan
    X[17, 0] = np.nan
    labels = (X[:, 0] + 0.5 * rng.normal(size=40) > 0).astype(float)
    task_of = np.array([0, 1] * 20)
    return Dataset.from_dense(X, labels, task_of, task_labels=["A", "B"])


def brute_force_best_split(
    dense: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    rows: np.ndarray,
    features,
    reg_lambda: float,
    gamma: float,
    min_child_weight: float = 0.0,
):
    """Exhaustive reference search over (feature, midpoint threshold,
    default direction); returns (gain, feature, threshold, default_left)
    or None.  Ties break toward lowest feature, lowest threshold, then
    default-left, matching the engine's documented order."""
    best = None
    for f in features:
        col = dense[rows, f]
        present_vals = np.unique(col[~np.isnan(col)])
        for a, b in zip(present_vals[:-1], present_vals[1:]):
            thr = 0.5 * (a + b)
            for dl in (True, False):
                go_left = np.where(np.isnan(col), dl, col < thr)
                left, right = rows[go_left], rows[~go_left]
                if len(left) == 0 or len(right) == 0:
                    continue
                gl, hl = g[left].sum(), h[left].sum()
                gr, hr = g[right].sum(), h[right].sum()
                if hl < min_child_weight or hr < min_child_weight:
                    continue
                gain = 0.5 * (
                    gl * gl / (hl + reg_lambda)
                    + gr * gr / (hr + reg_lambda)
                    - (gl + gr) ** 2 / (hl + hr + reg_lambda)
                ) - gamma
                if gain <= 0.0:
                    continue
                if best is None or gain > best[0]:
                    best = (gain, f, thr, dl)
    return best
