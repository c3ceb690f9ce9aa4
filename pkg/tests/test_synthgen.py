import numpy as np
import pytest

from taskboost.booster import TrainConfig, train
from taskboost.data import split_dataset
from taskboost.errors import ConfigError
from taskboost.evaluation import evaluate_scores
from taskboost.synthgen import SynthSpec, conflict_spec, effective_weights, generate


class TestSpec:
    def test_validation(self):
        spec = conflict_spec(n_tasks=2, rows_per_task=10, n_features=4)
        spec.validate()
        bad = conflict_spec(n_tasks=2, rows_per_task=10, n_features=4)
        bad.conflict_rate = 1.5
        with pytest.raises(ConfigError):
            bad.validate()

    def test_json_round_trip(self, tmp_path):
        spec = conflict_spec(n_tasks=3, rows_per_task=20, n_features=6, seed=4)
        path = str(tmp_path / "spec.json")
        spec.save(path)
        back = SynthSpec.load(path)
        assert back.n_tasks == spec.n_tasks
        np.testing.assert_array_equal(back.shared_weight, spec.shared_weight)
        np.testing.assert_array_equal(back.divergence, spec.divergence)


class TestGenerate:
    def test_deterministic(self):
        spec = conflict_spec(n_tasks=3, rows_per_task=50, n_features=5, seed=11)
        assert generate(spec).equals(generate(spec))

    def test_shapes_and_task_layout(self):
        spec = conflict_spec(n_tasks=4, rows_per_task=25, n_features=7, seed=0)
        ds = generate(spec)
        assert (ds.n_rows, ds.n_features, ds.n_tasks) == (100, 7, 4)
        assert np.bincount(ds.task_of).tolist() == [25] * 4

    def test_no_conflict_no_divergence_weights_identical(self):
        spec = conflict_spec(n_tasks=4, rows_per_task=10, n_features=5,
                             conflict_rate=0.0, seed=3)
        spec.divergence = np.zeros_like(spec.divergence)
        w = effective_weights(spec)
        assert np.all(w == w[0])

    def test_conflict_flips_signs_for_second_half(self):
        spec = conflict_spec(n_tasks=4, rows_per_task=10, n_features=8,
                             conflict_rate=0.5, seed=3)
        spec.divergence = np.zeros_like(spec.divergence)
        w = effective_weights(spec)
        flipped = w[0] != w[2]
        assert flipped.sum() == 4  # half of 8 features
        assert np.all(w[0][flipped] == -w[2][flipped])
        assert np.all(w[2] == w[3])

    def test_no_conflict_null_pooled_matches_task_split_training(self):
        # with identical task distributions the task-split machinery must
        # not cost accuracy: AVG AUC gap < 0.3 points over 5 seeds
        gaps = []
        for seed in range(5):
            spec = conflict_spec(n_tasks=4, rows_per_task=1000, n_features=8,
                                 conflict_rate=0.0, divergence_scale=0.0,
                                 label_noise=0.1, seed=seed)
            ds = generate(spec)
            split = split_dataset(ds, (0.6, 0.2, 0.2), seed=seed)
            aucs = {}
            for mode, R in (("pooled", 1.0), ("tsgb", 0.4)):
                cfg = TrainConfig(n_trees=20, max_depth=4, learning_rate=0.3,
                                  reg_lambda=2.0, min_child_weight=2.0,
                                  max_neg_sample_ratio=R, mode=mode, seed=seed)
                model, _ = train(ds, split, cfg)
                scores = model.predict_dataset(ds, split.test)
                rep = evaluate_scores(scores, ds.labels[split.test],
                                      ds.task_of[split.test], ds.task_labels)
                aucs[mode] = 100.0 * rep.avg_auc
            gaps.append(aucs["tsgb"] - aucs["pooled"])
        assert abs(float(np.mean(gaps))) < 0.3

    def test_conflict_data_shows_widespread_negative_task_gain(self):
        # pooled training on 4 conflicted tasks: most evaluated nodes hurt
        # at least one task
        from taskboost.evaluation import rneg_histogram

        spec = conflict_spec(n_tasks=4, rows_per_task=2000, n_features=20,
                             conflict_rate=0.5, seed=0)
        ds = generate(spec)
        split = split_dataset(ds, (0.6, 0.2, 0.2), seed=0)
        cfg = TrainConfig(n_trees=15, max_depth=5, learning_rate=0.3,
                          reg_lambda=2.0, min_child_weight=2.0,
                          max_neg_sample_ratio=1.0, mode="pooled", seed=0)
        _, report = train(ds, split, cfg)
        hist = rneg_histogram([r for _, r in report.all_records()])
        assert hist.frac_nonzero > 0.5

    def test_pure_noise_labels_give_chance_auc(self):
        spec = conflict_spec(n_tasks=2, rows_per_task=1500, n_features=5,
                             conflict_rate=0.0, label_noise=0.5, seed=5)
        ds = generate(spec)
        split = split_dataset(ds, (0.6, 0.2, 0.2), seed=0)
        cfg = TrainConfig(n_trees=10, max_depth=3, mode="pooled", seed=0)
        model, _ = train(ds, split, cfg)
        scores = model.predict_dataset(ds, split.test)
        rep = evaluate_scores(scores, ds.labels[split.test],
                              ds.task_of[split.test], ds.task_labels)
        assert 0.45 <= rep.avg_auc <= 0.55
