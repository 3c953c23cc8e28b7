import numpy as np
import pytest

from cogeffort.errors import ConfigError, DataError
from cogeffort.explain import (RegionMap, latent_pca_correlation,
                               region_contribution, shapley_exact)
from cogeffort.prep import PcaModel
from cogeffort.util import substream

from oracles import naive_pearson, permutation_shapley


def _pca_with_loadings(loadings):
    loadings = np.asarray(loadings, dtype=np.float64)
    d, k = loadings.shape
    return PcaModel(mean=np.zeros(d), scale=np.ones(d), loadings=loadings,
                    explained_variance=np.linspace(2.0, 1.0, k))


class TestRegionContribution:
    def test_uniform_magnitude_splits_evenly(self):
        model = _pca_with_loadings(np.full((16, 12), 0.25))
        out = region_contribution(model)
        assert np.allclose(out["LPFC"], 2.0, atol=1e-12)  # 8 optodes * 0.25
        assert np.allclose(out["VMPFC"], 2.0, atol=1e-12)

    def test_one_hot_loading_on_optode_five(self):
        loadings = np.zeros((16, 3))
        loadings[4, 1] = 1.0  # optode 5, second component
        out = region_contribution(_pca_with_loadings(loadings))
        assert out["VMPFC"][1] == 1.0 and out["LPFC"][1] == 0.0
        assert out["VMPFC"][0] == 0.0

    def test_regions_partition_total_mass(self):
        rng = substream(2)
        model = _pca_with_loadings(rng.normal(size=(16, 12)))
        out = region_contribution(model)
        totals = out["LPFC"] + out["VMPFC"]
        assert np.allclose(totals, np.abs(model.loadings).sum(axis=0), atol=1e-12)
        assert np.all(out["LPFC"] >= 0.0) and np.all(out["VMPFC"] >= 0.0)

    def test_bad_region_map_rejected(self):
        with pytest.raises(ConfigError):
            region_contribution(_pca_with_loadings(np.zeros((16, 2))),
                                RegionMap(lpfc=frozenset({1, 2}),
                                          vmpfc=frozenset({2, 3})))
        with pytest.raises(ConfigError):
            region_contribution(_pca_with_loadings(np.zeros((16, 2))),
                                RegionMap(lpfc=frozenset({1}),
                                          vmpfc=frozenset({2})))


class TestLatentPcaCorrelation:
    def test_identical_column_r_one(self):
        rng = substream(3)
        col = rng.normal(size=50)
        res = latent_pca_correlation(col[:, None], col[:, None])
        assert res.matrix[0, 0] == 1.0

    def test_negated_column_r_minus_one(self):
        rng = substream(4)
        col = rng.normal(size=50)
        res = latent_pca_correlation(col[:, None], -col[:, None])
        assert res.matrix[0, 0] == -1.0

    def test_matches_naive_two_pass_oracle(self):
        rng = substream(5)
        latents = rng.normal(size=(50, 8))
        scores = rng.normal(size=(50, 12))
        res = latent_pca_correlation(latents, scores)
        for i in range(8):
            for j in range(12):
                assert res.matrix[i, j] == pytest.approx(
                    naive_pearson(latents[:, i], scores[:, j]), abs=1e-12)

    def test_bounded(self):
        rng = substream(6)
        res = latent_pca_correlation(rng.normal(size=(30, 4)),
                                     rng.normal(size=(30, 5)))
        assert np.all(res.matrix <= 1.0) and np.all(res.matrix >= -1.0)

    def test_constant_column_flagged_as_zero(self):
        rng = substream(7)
        latents = rng.normal(size=(20, 2))
        latents[:, 1] = 3.0
        res = latent_pca_correlation(latents, rng.normal(size=(20, 3)))
        assert res.constant_latents == [1]
        assert np.all(res.matrix[1, :] == 0.0)

    def test_too_few_rows_rejected(self):
        with pytest.raises(DataError):
            latent_pca_correlation(np.zeros((2, 3)), np.zeros((2, 3)))


class TestShapleyExact:
    def test_linear_model_closed_form(self):
        rng = substream(8)
        w = rng.normal(size=6)
        predict = lambda rows: rows @ w
        x = rng.normal(size=6)
        background = rng.normal(size=(40, 6))
        result = shapley_exact(predict, x, background)
        expected = w * (x - background.mean(axis=0))
        assert np.max(np.abs(result.values - expected)) < 1e-10
        assert result.base_value == pytest.approx(float(background.mean(axis=0) @ w),
                                                  abs=1e-12)

    def test_efficiency_identity(self):
        rng = substream(9)
        w1 = rng.normal(size=(5, 4))
        w2 = rng.normal(size=4)
        predict = lambda rows: np.tanh(rows @ w1) @ w2
        x = rng.normal(size=5)
        background = rng.normal(size=(30, 5))
        result = shapley_exact(predict, x, background)
        assert result.values.sum() == pytest.approx(
            float(predict(x[None, :])[0]) - result.base_value, abs=1e-10)

    def test_matches_permutation_enumeration_oracle(self):
        rng = substream(10)
        w1 = rng.normal(size=(4, 3))
        w2 = rng.normal(size=3)
        predict = lambda rows: np.tanh(rows @ w1) @ w2
        x = rng.normal(size=4)
        background = rng.normal(size=(12, 4))
        result = shapley_exact(predict, x, background)
        oracle = permutation_shapley(predict, x, background)
        assert np.max(np.abs(result.values - oracle)) < 1e-10

    def test_symmetry_axiom(self):
        # exchangeable features (same weight, same value, same background)
        predict = lambda rows: rows[:, 0] + rows[:, 1] + 0.5 * rows[:, 2] ** 2
        x = np.array([0.7, 0.7, -0.2])
        rng = substream(11)
        shared = rng.normal(size=(25, 1))
        background = np.hstack([shared, shared, rng.normal(size=(25, 1))])
        result = shapley_exact(predict, x, background)
        assert result.values[0] == pytest.approx(result.values[1], abs=1e-10)

    def test_dummy_axiom(self):
        predict = lambda rows: rows[:, 0] * 2.0 - rows[:, 2]
        x = np.array([1.0, 5.0, -2.0])
        background = substream(12).normal(size=(20, 3))
        result = shapley_exact(predict, x, background)
        assert abs(result.values[1]) < 1e-10

    def test_width_limit(self):
        predict = lambda rows: rows.sum(axis=1)
        with pytest.raises(ConfigError):
            shapley_exact(predict, np.zeros(17), np.zeros((4, 17)))

    def test_empty_background_rejected(self):
        with pytest.raises(DataError):
            shapley_exact(lambda rows: rows.sum(axis=1), np.zeros(3),
                          np.zeros((0, 3)))
