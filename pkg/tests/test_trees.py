import json

import numpy as np
import pytest

from cogeffort.errors import DataError
from cogeffort.net import Trainer
from cogeffort.net.model import ModelConfig, init_params
from cogeffort.net.training import TrainedModel
from cogeffort.trees import (ForestModel, GbtModel, best_gini_split,
                             evaluate_latent_features, train_gbt,
                             train_random_forest)
from cogeffort.util import substream

from oracles import brute_force_best_gini


def _blobs(n=60, d=4, gap=2.0, seed=3):
    rng = substream(seed)
    half = n // 2
    X = np.vstack([rng.normal(0.0, 1.0, size=(half, d)),
                   rng.normal(gap, 1.0, size=(n - half, d))])
    y = np.concatenate([np.zeros(half, dtype=int), np.ones(n - half, dtype=int)])
    return X, y


class TestRandomForest:
    def test_single_class_predicts_it_everywhere(self):
        rng = substream(1)
        X = rng.normal(size=(20, 3))
        model = train_random_forest(X, np.ones(20, dtype=int), n_trees=5, seed=0)
        assert np.all(model.predict(rng.normal(size=(10, 3))) == 1)

    def test_separable_1d_stump(self):
        X = np.concatenate([np.linspace(-2, -0.5, 10),
                            np.linspace(0.5, 2, 10)])[:, None]
        y = (X[:, 0] > 0).astype(int)
        model = train_random_forest(X, y, n_trees=1, max_depth=1, seed=4)
        assert np.array_equal(model.predict(X), y)

    def test_root_split_matches_brute_force_oracle(self):
        X, y = _blobs()
        split = best_gini_split(X, y, range(X.shape[1]))
        oracle = brute_force_best_gini(X, y, range(X.shape[1]))
        assert split is not None
        assert split[0] == pytest.approx(oracle[0], abs=1e-12)
        assert split[1] == oracle[1]
        assert split[2] == pytest.approx(oracle[2], abs=1e-12)

    def test_deterministic(self):
        X, y = _blobs()
        a = train_random_forest(X, y, n_trees=10, seed=9)
        b = train_random_forest(X, y, n_trees=10, seed=9)
        assert a.to_dict() == b.to_dict()

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            train_random_forest(np.zeros((0, 3)), np.zeros(0, dtype=int))

    def test_json_round_trip(self):
        X, y = _blobs(n=30)
        model = train_random_forest(X, y, n_trees=3, max_depth=3, seed=2)
        blob = json.dumps(model.to_dict())
        restored = ForestModel.from_dict(json.loads(blob))
        assert np.array_equal(model.predict(X), restored.predict(X))


class TestGbt:
    def test_zero_rounds_returns_class_frequency(self):
        X, y = _blobs(n=40)
        y[:30] = 1  # 0.75 positive
        model = train_gbt(X, y, n_rounds=0)
        probs = model.predict_proba(X[:5])
        assert np.allclose(probs, y.mean(), atol=1e-12)

    def test_toy_separable_set_reaches_perfect_accuracy(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0], [10.0], [11.0], [12.0], [13.0]])
        y = np.array([0, 0, 0, 0, 1, 1, 1, 1])
        model = train_gbt(X, y, n_rounds=50, max_depth=1)
        assert np.array_equal(model.predict(X), y)

    def test_first_round_matches_exhaustive_stump_oracle(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0], [10.0], [11.0], [12.0], [13.0]])
        y = np.array([0, 0, 0, 0, 1, 1, 1, 1])
        model = train_gbt(X, y, n_rounds=1, max_depth=1)
        stump = model.trees[0]
        # residuals are constant per class, so the best squared-error split is
        # any boundary separating the classes; exhaustive enumeration puts the
        # first-best at the class gap
        p = y.mean()
        residual = y - p
        best_gain, best_thr = -np.inf, None
        for lo, hi in zip(np.unique(X[:, 0])[:-1], np.unique(X[:, 0])[1:]):
            thr = (lo + hi) / 2
            mask = X[:, 0] <= thr
            sse = residual.var() * len(y) - (
                residual[mask].var() * mask.sum()
                + residual[~mask].var() * (~mask).sum())
            if sse > best_gain:
                best_gain, best_thr = sse, thr
        assert stump.threshold == pytest.approx(best_thr, abs=1e-12)

    def test_monotone_transform_invariance(self):
        X, y = _blobs(n=50)
        model_a = train_gbt(X, y, n_rounds=20)
        X2 = X.copy()
        X2[:, 1] = np.exp(X2[:, 1])  # strictly monotone on feature 1
        model_b = train_gbt(X2, y, n_rounds=20)
        assert np.array_equal(model_a.predict(X), model_b.predict(X2))

    def test_forest_monotone_transform_invariance(self):
        X, y = _blobs(n=50)
        model_a = train_random_forest(X, y, n_trees=10, seed=5)
        X2 = X.copy()
        X2[:, 0] = np.arctan(X2[:, 0]) * 3.0
        model_b = train_random_forest(X2, y, n_trees=10, seed=5)
        assert np.array_equal(model_a.predict(X), model_b.predict(X2))

    def test_training_loss_nonincreasing(self):
        X, y = _blobs(n=60, gap=1.0, seed=8)
        model = train_gbt(X, y, n_rounds=30, shrinkage=0.3)
        losses = []
        partial = GbtModel(base_score=model.base_score, shrinkage=model.shrinkage,
                           n_features=model.n_features)
        for r in range(len(model.trees) + 1):
            partial.trees = model.trees[:r]
            p = np.clip(partial.predict_proba(X), 1e-12, 1 - 1e-12)
            losses.append(float(-(y * np.log(p) + (1 - y) * np.log(1 - p)).mean()))
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_json_round_trip(self):
        X, y = _blobs(n=30)
        model = train_gbt(X, y, n_rounds=5)
        restored = GbtModel.from_dict(json.loads(json.dumps(model.to_dict())))
        assert np.allclose(model.predict_proba(X), restored.predict_proba(X), atol=0)


class TestLatentComparison:
    def _trained_net(self, x, y, **cfg):
        config = ModelConfig(input_features=x.shape[2], conv_filters=6, gru_units=4,
                             dense_units=7, seed=1, dropout_rate=0.0, batch_size=8,
                             max_epochs=10, patience=10, **cfg)
        return Trainer(config).train(x, y, x, y)

    def test_report_contents(self):
        X, y = _blobs(n=40, d=12)
        x3 = X[:, None, :]
        trained = self._trained_net(x3, y)
        report = evaluate_latent_features(trained, X, y, X, y, n_rounds=20)
        assert report.architecture == "cnn_gru"
        assert 0.0 <= report.raw_accuracy <= 1.0
        assert 0.0 <= report.latent_accuracy <= 1.0
        assert report.delta == pytest.approx(report.latent_accuracy
                                             - report.raw_accuracy)
        d = report.to_dict()
        assert set(d) == {"raw_accuracy", "latent_accuracy", "delta", "architecture"}

    def test_constant_latents_give_majority_rate(self):
        X, y = _blobs(n=40, d=12)
        config = ModelConfig(input_features=12, conv_filters=6, gru_units=4,
                             dense_units=7, seed=1, dropout_rate=0.0)
        params, state = init_params(config)
        for name in list(params):
            if name.startswith("gru."):
                params[name] = np.zeros_like(params[name])
        trained = TrainedModel(config=config, params=params, state=state)
        report = evaluate_latent_features(trained, X, y, X, y, n_rounds=10)
        majority = max(y.mean(), 1 - y.mean())
        assert report.latent_accuracy == pytest.approx(majority, abs=1e-12)

    @pytest.mark.slow
    def test_default_cohort_latents_not_much_worse_than_raw(self, default_cohort):
        # seeded end-to-end pattern check on the standard synthetic cohort
        from cogeffort import prep
        from cogeffort.synth import CohortSpec, generate_cohort

        trials = generate_cohort(CohortSpec(seed=7))
        rows = [prep.FeatureRow(t.participant_id, t.question_id, t.session,
                                t.segment, prep.aggregate_trial(prep.impute_missing(t)),
                                t.label) for t in trials]
        train_rows, val_rows, test_rows = prep.split_by_participant(rows, prep.SplitSpec())
        xt = np.stack([r.features for r in train_rows])
        std, _, mean, scale = prep.standardize(xt)
        pca = prep.pca_fit(std, 12, mean=mean, scale=scale)
        to_scores = lambda rs: prep.pca_project(pca, np.stack([r.features for r in rs]))
        y_of = lambda rs: np.array([r.label for r in rs])
        xb, yb = prep.smote(to_scores(train_rows), y_of(train_rows), seed=7)
        config = ModelConfig(seed=7)
        trained = Trainer(config).train(prep.reshape_for_model(xb), yb,
                                        prep.reshape_for_model(to_scores(val_rows)),
                                        y_of(val_rows))
        report = evaluate_latent_features(trained, xb, yb,
                                          to_scores(test_rows), y_of(test_rows),
                                          seed=7)
        assert report.latent_accuracy >= report.raw_accuracy - 0.05
