import json

import numpy as np
import pytest

from taskboost.booster import (
    Model,
    PerTaskModel,
    TrainConfig,
    load_any_model,
    predict,
    train,
)
from taskboost.data import Dataset, DataSplit, split_dataset
from taskboost.errors import ConfigError, ModelError
from taskboost.objective import loss_value, sigmoid
from taskboost.synthgen import conflict_spec, generate
from taskboost.tree import LeafNode


def small_ds(seed=0, n_tasks=2, rows_per_task=150):
    return generate(conflict_spec(n_tasks=n_tasks, rows_per_task=rows_per_task,
                                  n_features=5, conflict_rate=0.5,
                                  label_noise=0.05, seed=seed))


def full_split(ds):
    n = ds.n_rows
    return DataSplit(train=np.arange(n), valid=np.zeros(0, dtype=np.int64),
                     test=np.zeros(0, dtype=np.int64), seed=0)


class TestTrainConfig:
    def test_defaults_validate(self):
        TrainConfig().validate()

    @pytest.mark.parametrize("field,value", [
        ("mode", "boosted"), ("loss", "hinge"), ("learning_rate", 0.0),
        ("learning_rate", 1.5), ("subsample", 0.0), ("max_neg_sample_ratio", 1.2),
        ("tsgb_lambda", -0.1), ("n_trees", -1), ("max_depth", -2),
        ("reg_lambda", -1.0), ("tsgb_start_tree", 0),
    ])
    def test_invalid_values_rejected(self, field, value):
        cfg = TrainConfig(**{field: value})
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_dict_round_trip(self):
        cfg = TrainConfig(n_trees=5, gamma=0.45, max_neg_sample_ratio=0.5)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="unknown config"):
            TrainConfig.from_dict({"bogus": 1})


class TestTrainBasics:
    def test_constant_model_with_depth_zero_single_tree(self):
        ds = small_ds()
        cfg = TrainConfig(n_trees=1, max_depth=0, learning_rate=1.0,
                          loss="mse", mode="pooled", seed=0)
        model, _ = train(ds, full_split(ds), cfg)
        # the single root leaf sits exactly at the residual optimum, so the
        # prediction is the label mean everywhere
        scores = model.predict_dataset(ds)
        assert np.allclose(scores, ds.labels.mean(), atol=1e-9)

    def test_zero_trees_predicts_base_score(self):
        ds = small_ds()
        cfg = TrainConfig(n_trees=0, mode="pooled")
        model, _ = train(ds, full_split(ds), cfg)
        assert model.trees == []
        expected = sigmoid(np.array([model.base_score]))[0]
        assert np.all(model.predict_dataset(ds) == expected)

    def test_single_leaf_tree_adds_weight(self):
        ds = small_ds()
        cfg = TrainConfig(n_trees=1, max_depth=0, mode="pooled", learning_rate=0.5)
        model, _ = train(ds, full_split(ds), cfg)
        w = model.trees[0].nodes[0].weight
        expected = sigmoid(np.array([model.base_score + w]))[0]
        assert np.all(model.predict_dataset(ds) == expected)

    def test_tabular_benchmark_config_runs(self):
        # the configs/diabetes.json hyperparameter set at toy scale
        ds = small_ds(n_tasks=3, rows_per_task=120)
        split = split_dataset(ds, (0.6, 0.2, 0.2), seed=0)
        cfg = TrainConfig(
            n_trees=8, max_depth=5, min_child_weight=5, subsample=0.8,
            colsample_bytree=0.7, colsample_bylevel=0.8, gamma=0.2,
            learning_rate=0.1, reg_lambda=12, reg_alpha=0.1,
            max_neg_sample_ratio=0.4, mode="tsgb", seed=1,
        )
        model, report = train(ds, split, cfg)
        assert len(model.trees) == 8
        scores = model.predict_dataset(ds, split.test)
        assert np.all((scores >= 0) & (scores <= 1))

    def test_colsample_bytree_restricts_split_features(self):
        ds = small_ds(seed=3)
        assert ds.n_features == 5
        split = split_dataset(ds, (0.6, 0.2, 0.2), seed=0)
        cfg = TrainConfig(n_trees=6, max_depth=4, mode="pooled",
                          colsample_bytree=0.2, seed=4)  # 1 feature per tree
        model, _ = train(ds, split, cfg)
        from taskboost.tree import SplitNode
        used_any = set()
        for tree in model.trees:
            feats = {n.feature for n in tree.nodes if isinstance(n, SplitNode)}
            assert len(feats) <= 1
            used_any |= feats
        assert len(used_any) > 1  # different trees draw different features

    def test_determinism_bit_identical(self):
        ds = small_ds()
        split = split_dataset(ds, (0.6, 0.2, 0.2), seed=3)
        cfg = TrainConfig(n_trees=6, max_depth=4, subsample=0.8,
                          colsample_bytree=0.8, colsample_bylevel=0.8,
                          mode="tsgb", max_neg_sample_ratio=0.3, seed=9)
        a, _ = train(ds, split, cfg)
        b, _ = train(ds, split, cfg)
        assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())

    def test_additivity_of_tree_margins(self):
        ds = small_ds()
        split = split_dataset(ds, (0.6, 0.2, 0.2), seed=0)
        cfg = TrainConfig(n_trees=5, max_depth=3, mode="tsgb",
                          max_neg_sample_ratio=0.3, seed=2)
        model, _ = train(ds, split, cfg)
        rows = np.arange(ds.n_rows)
        dense = ds.to_dense()
        for k in range(1, len(model.trees) + 1):
            partial = Model(trees=model.trees[:k - 1], base_score=model.base_score,
                            loss=model.loss, n_features=model.n_features,
                            task_labels=model.task_labels, config=model.config)
            full = Model(trees=model.trees[:k], base_score=model.base_score,
                         loss=model.loss, n_features=model.n_features,
                         task_labels=model.task_labels, config=model.config)
            m_partial = partial.predict_dataset(ds, rows, raw_margin=True)
            m_full = full.predict_dataset(ds, rows, raw_margin=True)
            routed = np.array([
                model.trees[k - 1].route(dense[i], int(ds.task_of[i]))
                for i in rows
            ])
            assert np.array_equal(m_full, m_partial + routed)

    @pytest.mark.parametrize("loss", ["mse", "logloss"])
    def test_training_objective_non_increasing(self, loss):
        ds = small_ds(seed=4)
        split = full_split(ds)
        cfg = TrainConfig(n_trees=10, max_depth=3, gamma=0.0, subsample=1.0,
                          colsample_bytree=1.0, colsample_bylevel=1.0,
                          mode="pooled", loss=loss, learning_rate=0.5,
                          reg_lambda=1.0, seed=0)
        model, _ = train(ds, split, cfg)
        margins = np.full(ds.n_rows, model.base_score)
        objectives = []
        reg = 0.0
        for tree in model.trees:
            tree.add_margins(ds.column_values, ds.task_of, margins)
            reg += 0.5 * cfg.reg_lambda * sum(
                n.weight ** 2 for n in tree.nodes if isinstance(n, LeafNode)
            )
            objectives.append(loss_value(margins, ds.labels, loss).sum() + reg)
        diffs = np.diff(objectives)
        assert np.all(diffs <= 1e-9)

    def test_pooled_ignores_task_identity(self):
        # same splits and structure whether rows carry 3 task ids or 1;
        # node sums are accumulated per task first, so weights agree only
        # up to float reassociation
        ds = small_ds(n_tasks=3, rows_per_task=100)
        merged = Dataset.from_dense(ds.to_dense(), ds.labels,
                                    np.zeros(ds.n_rows, dtype=int),
                                    task_labels=["all"])
        split = DataSplit(train=np.arange(ds.n_rows),
                          valid=np.zeros(0, dtype=np.int64),
                          test=np.zeros(0, dtype=np.int64), seed=0)
        cfg = TrainConfig(n_trees=4, max_depth=4, mode="pooled",
                          max_neg_sample_ratio=1.0, seed=5)
        a, _ = train(ds, split, cfg)
        b, _ = train(merged, split, cfg)
        for ta, tb in zip(a.trees, b.trees):
            assert len(ta.nodes) == len(tb.nodes)
            for na, nb in zip(ta.nodes, tb.nodes):
                assert type(na) is type(nb)
                if isinstance(na, LeafNode):
                    assert na.weight == pytest.approx(nb.weight, rel=1e-12, abs=1e-12)
                else:
                    assert (na.feature, na.threshold, na.default_left) == (
                        nb.feature, nb.threshold, nb.default_left)
        ra = a.predict_dataset(ds, raw_margin=True)
        rb = b.predict_dataset(merged, raw_margin=True)
        np.testing.assert_allclose(ra, rb, atol=1e-10)


class TestEarlyStopping:
    def test_requires_validation_rows(self):
        ds = small_ds()
        cfg = TrainConfig(n_trees=5, early_stopping_rounds=2)
        with pytest.raises(ConfigError, match="validation"):
            train(ds, full_split(ds), cfg)

    def test_stops_and_truncates(self):
        ds = small_ds(seed=8)
        split = split_dataset(ds, (0.6, 0.2, 0.2), seed=1)
        cfg = TrainConfig(n_trees=60, max_depth=2, learning_rate=0.8,
                          early_stopping_rounds=3, mode="pooled", seed=0)
        model, report = train(ds, split, cfg)
        assert report.best_iteration is not None
        assert len(model.trees) == report.best_iteration + 1
        assert len(model.trees) <= 60
        assert len(report.iter_valid_avg_auc) >= len(model.trees)

    def test_validation_curve_recorded_without_early_stopping(self):
        ds = small_ds()
        split = split_dataset(ds, (0.6, 0.2, 0.2), seed=1)
        cfg = TrainConfig(n_trees=4, mode="pooled", seed=0)
        _, report = train(ds, split, cfg)
        assert len(report.iter_valid_avg_auc) == 4


class TestModes:
    def test_tsgb_lambda_draws_task_splits(self):
        ds = small_ds(seed=2, n_tasks=4)
        split = split_dataset(ds, (0.6, 0.2, 0.2), seed=0)
        cfg = TrainConfig(n_trees=5, max_depth=4, mode="tsgb_lambda",
                          tsgb_lambda=1.0, seed=0)
        model, _ = train(ds, split, cfg)
        assert sum(t.n_task_splits() for t in model.trees) > 0
        cfg0 = TrainConfig(n_trees=5, max_depth=4, mode="tsgb_lambda",
                           tsgb_lambda=0.0, seed=0)
        model0, _ = train(ds, split, cfg0)
        assert sum(t.n_task_splits() for t in model0.trees) == 0

    def test_tsgb_start_tree_delays_task_splits(self):
        ds = small_ds(seed=2, n_tasks=4)
        split = split_dataset(ds, (0.6, 0.2, 0.2), seed=0)
        cfg = TrainConfig(n_trees=6, max_depth=4, mode="tsgb",
                          max_neg_sample_ratio=0.05, tsgb_start_tree=4, seed=0)
        model, _ = train(ds, split, cfg)
        head = sum(t.n_task_splits() for t in model.trees[:3])
        tail = sum(t.n_task_splits() for t in model.trees[3:])
        assert head == 0
        assert tail > 0

    def test_per_task_model_scores_matrix_input(self):
        ds = small_ds(n_tasks=2, rows_per_task=80)
        split = split_dataset(ds, (0.6, 0.2, 0.2), seed=0)
        cfg = TrainConfig(n_trees=2, max_depth=2, mode="single_task", seed=0)
        model, _ = train(ds, split, cfg)
        X = ds.to_dense()
        tasks = [ds.task_labels[t] for t in ds.task_of]
        assert np.array_equal(predict(model, X, tasks),
                              model.predict_dataset(ds))
        with pytest.raises(ModelError, match="no per-task model"):
            predict(model, X[:3], ["nope"] * 3)

    def test_single_task_mode_returns_per_task_models(self):
        ds = small_ds(n_tasks=3, rows_per_task=100)
        split = split_dataset(ds, (0.6, 0.2, 0.2), seed=0)
        cfg = TrainConfig(n_trees=3, max_depth=3, mode="single_task", seed=0)
        model, report = train(ds, split, cfg)
        assert isinstance(model, PerTaskModel)
        assert set(model.models) == {"t0", "t1", "t2"}
        for sub in model.models.values():
            assert all(t.n_task_splits() == 0 for t in sub.trees)
        assert set(report.sub_reports) == {"t0", "t1", "t2"}
        scores = model.predict_dataset(ds, split.test)
        assert np.all((scores >= 0) & (scores <= 1))


class TestSerialization:
    def test_round_trip_bit_exact_predictions(self, tmp_path):
        ds = small_ds(seed=5, n_tasks=3)
        split = split_dataset(ds, (0.6, 0.2, 0.2), seed=0)
        cfg = TrainConfig(n_trees=5, max_depth=4, mode="tsgb",
                          max_neg_sample_ratio=0.2, seed=0)
        model, _ = train(ds, split, cfg)
        path = str(tmp_path / "model.json")
        model.save(path)
        back = Model.load(path)
        rng = np.random.default_rng(0)
        X = rng.normal(size=(100, ds.n_features))
        X[rng.random(size=X.shape) < 0.2] = np.nan
        tasks = rng.choice(ds.task_labels, size=100)
        assert np.array_equal(predict(model, X, tasks), predict(back, X, tasks))

    def test_per_task_model_round_trip(self, tmp_path):
        ds = small_ds(n_tasks=2, rows_per_task=80)
        split = split_dataset(ds, (0.6, 0.2, 0.2), seed=0)
        cfg = TrainConfig(n_trees=2, max_depth=2, mode="single_task", seed=0)
        model, _ = train(ds, split, cfg)
        path = str(tmp_path / "pertask.json")
        model.save(path)
        back = load_any_model(path)
        assert isinstance(back, PerTaskModel)
        assert np.array_equal(model.predict_dataset(ds), back.predict_dataset(ds))

    def test_schema_mismatch_raises(self, tmp_path):
        ds = small_ds()
        split = split_dataset(ds, (0.6, 0.2, 0.2), seed=0)
        model, _ = train(ds, split, TrainConfig(n_trees=1, max_depth=1, seed=0))
        with pytest.raises(ModelError, match="features"):
            model.predict_matrix(np.zeros((3, ds.n_features + 2)), ["t0"] * 3)

    def test_corrupt_file_raises_model_error(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ModelError):
            Model.load(str(path))
        path.write_text(json.dumps({"format": "other"}))
        with pytest.raises(ModelError):
            load_any_model(str(path))


class TestPredictPolicies:
    def _model(self):
        ds = small_ds(n_tasks=3, rows_per_task=100, seed=6)
        split = split_dataset(ds, (0.6, 0.2, 0.2), seed=0)
        cfg = TrainConfig(n_trees=4, max_depth=4, mode="tsgb",
                          max_neg_sample_ratio=0.05, seed=0)
        model, _ = train(ds, split, cfg)
        assert sum(t.n_task_splits() for t in model.trees) > 0
        return ds, model

    def test_unseen_task_majority_scores(self):
        ds, model = self._model()
        X = ds.to_dense()[:10]
        out = model.predict_matrix(X, ["brand-new-task"] * 10)
        assert np.all((out >= 0) & (out <= 1))

    def test_unseen_task_strict_errors_with_rows(self):
        ds, model = self._model()
        X = ds.to_dense()[:10]
        with pytest.raises(ModelError, match="rows"):
            model.predict_matrix(X, ["brand-new-task"] * 10, policy="strict")

    def test_matrix_requires_task_ids(self):
        ds, model = self._model()
        with pytest.raises(ConfigError):
            predict(model, ds.to_dense()[:5])
