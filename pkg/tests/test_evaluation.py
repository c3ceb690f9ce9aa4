import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taskboost.errors import UndefinedMetricError
from taskboost.evaluation import (
    RnegHistogram,
    auc,
    evaluate_scores,
    rneg_histogram,
    thresholded_metrics,
)


def pair_count_auc(scores, labels):
    """O(P*N) reference: count positive-negative pairs ranked correctly."""
    pos = scores[labels == 1.0]
    neg = scores[labels == 0.0]
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


class TestAuc:
    def test_perfect_ranking(self):
        assert auc(np.array([0.9, 0.8, 0.2, 0.1]), np.array([1, 1, 0, 0.0])) == 1.0

    def test_all_ties_give_half(self):
        assert auc(np.ones(6), np.array([1, 0, 1, 0, 1, 0.0])) == 0.5

    def test_mixed_example(self):
        # pairs: (0.1,0.9)=0, (0.1,0.4)=0, (0.5,0.9)=0, (0.5,0.4)=1 -> 1/4
        scores = np.array([0.1, 0.9, 0.5, 0.4])
        labels = np.array([1.0, 0.0, 1.0, 0.0])
        assert auc(scores, labels) == pair_count_auc(scores, labels) == 0.25

    def test_single_class_is_undefined(self):
        with pytest.raises(UndefinedMetricError):
            auc(np.array([0.1, 0.2]), np.array([1.0, 1.0]))

    @settings(max_examples=150, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_rank_sum_equals_pair_count_exactly(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 64))
        # quantized scores force plenty of ties
        scores = np.round(rng.random(n), 2)
        labels = rng.integers(0, 2, size=n).astype(float)
        labels[0], labels[-1] = 1.0, 0.0
        assert auc(scores, labels) == pair_count_auc(scores, labels)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_complement_and_monotone_invariance(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 50))
        scores = rng.normal(size=n)  # continuous: ties have probability zero
        labels = rng.integers(0, 2, size=n).astype(float)
        labels[0], labels[-1] = 1.0, 0.0
        assert auc(scores, labels) + auc(-scores, labels) == pytest.approx(1.0)
        squashed = 1 / (1 + np.exp(-3 * scores + 1))
        assert auc(squashed, labels) == pytest.approx(auc(scores, labels))


class TestThresholdedMetrics:
    def test_perfect_separation(self):
        m = thresholded_metrics(np.array([0.9, 0.8, 0.1, 0.2]),
                                np.array([1, 1, 0, 0.0]), 0.5)
        assert (m.accuracy, m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0, 1.0)

    def test_all_predicted_negative(self):
        m = thresholded_metrics(np.array([0.1, 0.2]), np.array([1, 0.0]), 0.5)
        assert m.recall == 0.0
        assert m.no_positive_predictions
        assert m.precision == 0.0

    def test_boundary_score_is_positive(self):
        m = thresholded_metrics(np.array([0.42]), np.array([1.0]), 0.42)
        assert m.recall == 1.0


class TestEvaluateScores:
    def test_single_class_task_excluded_with_warning(self):
        scores = np.array([0.9, 0.1, 0.8, 0.7])
        labels = np.array([1.0, 0.0, 1.0, 1.0])
        task_of = np.array([0, 0, 1, 1])
        with pytest.warns(UserWarning, match="single class"):
            rep = evaluate_scores(scores, labels, task_of, ["a", "b"])
        assert rep.excluded_tasks == ["b"]
        assert rep.per_task_auc == {"a": 1.0}
        assert rep.avg_auc == 1.0

    def test_avg_is_unweighted_mean(self):
        scores = np.array([0.9, 0.1, 0.1, 0.9, 0.2, 0.8])
        labels = np.array([1.0, 0.0, 1.0, 0.0, 0.0, 1.0])
        task_of = np.array([0, 0, 1, 1, 2, 2])
        rep = evaluate_scores(scores, labels, task_of, ["a", "b", "c"])
        assert rep.avg_auc == pytest.approx(np.mean(list(rep.per_task_auc.values())))

    def test_table_has_task_rows_plus_avg(self):
        scores = np.array([0.9, 0.1, 0.8, 0.2])
        labels = np.array([1.0, 0.0, 1.0, 0.0])
        task_of = np.array([0, 0, 1, 1])
        rep = evaluate_scores(scores, labels, task_of, ["a", "b"])
        lines = rep.to_table().splitlines()
        assert len(lines) == 2 + 2 + 1  # header + rule + 2 tasks + AVG
        assert lines[-1].startswith("AVG")


class FakeRecord:
    def __init__(self, n_rows, neg_ratio):
        self.n_rows = n_rows
        self.neg_ratio = neg_ratio


class TestRnegHistogram:
    def test_empty_stream(self):
        hist = rneg_histogram([])
        assert hist.n_nodes == 0
        assert hist.frac_nonzero == 0.0

    def test_all_zero_ratios(self):
        hist = rneg_histogram([FakeRecord(100, 0.0) for _ in range(10)])
        assert hist.frac_nonzero == 0.0
        assert hist.frac_above_half == 0.0
        assert hist.counts.sum() == 10

    def test_fractions(self):
        recs = [FakeRecord(10, 0.0), FakeRecord(10, 0.3),
                FakeRecord(100, 0.6), FakeRecord(1000, 1.0)]
        hist = rneg_histogram(recs)
        assert hist.frac_nonzero == 0.75
        assert hist.frac_above_half == 0.5
        assert hist.n_nodes == 4

    def test_size_bins_are_log10(self):
        recs = [FakeRecord(5, 0.1), FakeRecord(50, 0.1), FakeRecord(5000, 0.1)]
        hist = rneg_histogram(recs)
        assert hist.size_bin_edges.tolist() == [0, 1, 3]

    def test_csv_round_trip_counts(self, tmp_path):
        rng = np.random.default_rng(0)
        recs = [FakeRecord(int(rng.integers(1, 10000)), float(rng.random()))
                for _ in range(200)]
        hist = rneg_histogram(recs)
        path = str(tmp_path / "hist.csv")
        hist.to_csv(path)
        back = RnegHistogram.from_csv(path)
        assert np.array_equal(back.counts, hist.counts)
        assert np.array_equal(back.size_bin_edges, hist.size_bin_edges)
        assert back.n_nodes == hist.n_nodes
