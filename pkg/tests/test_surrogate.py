"""
GP 서로게이트 테스트: 특성 벡터, trim, 닫힌 형태 예측 (조밀 행렬 계산과 비교), 적합, 드로우
"""

import math

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from adamcmc.core import InvalidInputError, LikelihoodSource, RngStream
from adamcmc.surrogate import (
    ChainAligned,
    GpFitConfig,
    GpModel,
    TrainingDataset,
    build_feature_matrix,
    build_features,
    fit_gp,
    gp_holdout_diagnostics,
    gp_log_marginal_likelihood,
    gp_predict,
    gp_sample_loglik,
    trim_training_data,
)


def _dense_reference(X, y, Q, s2, ls, nugget):
    """역행렬을 직접 쓰는 GLS 평균 + GP 예측"""
    def k(A, B):
        return s2 * np.exp(-0.5 * cdist(A / ls, B / ls, 'sqeuclidean'))

    K = k(X, X) + nugget * np.eye(len(X))
    Kinv = np.linalg.inv(K)
    H = build_feature_matrix(X)
    beta = np.linalg.solve(H.T @ Kinv @ H, H.T @ Kinv @ y)
    ks = k(Q, X)
    mean = build_feature_matrix(Q) @ beta + ks @ Kinv @ (y - H @ beta)
    var = s2 + nugget - np.einsum('ij,jk,ik->i', ks, Kinv, ks)
    resid = y - H @ beta
    _, logdet = np.linalg.slogdet(K)
    loglik = -0.5 * resid @ Kinv @ resid - 0.5 * logdet - 0.5 * len(y) * math.log(2 * math.pi)
    return mean, var, beta, loglik


class TestFeatures:

    def test_two_dimensions(self):
        np.testing.assert_allclose(build_features([2.0, 3.0]), [1, 2, 3, 4, 9, 6])

    def test_one_dimension(self):
        np.testing.assert_allclose(build_features([4.0]), [1, 4, 16])

    def test_length(self):
        assert build_features(np.arange(7.0)).size == 1 + 14 + 21


class TestTrainingData:

    def test_trim_keeps_order(self):
        data = TrainingDataset(np.arange(5.0)[:, None], [5.0, 1.0, 3.0, 2.0, 4.0])
        trimmed = trim_training_data(data, 0.4)
        np.testing.assert_array_equal(trimmed.logliks, [5.0, 3.0, 4.0])
        np.testing.assert_array_equal(trimmed.proposals[:, 0], [0.0, 2.0, 4.0])

    def test_trim_zero_and_invalid(self):
        data = TrainingDataset(np.zeros((3, 1)), [1.0, 2.0, 3.0])
        assert len(trim_training_data(data, 0.0)) == 3
        assert len(trim_training_data(data, 0.2)) == 3
        with pytest.raises(InvalidInputError):
            trim_training_data(data, 1.0)

    def test_finite_rows_checks_both_tables(self):
        aligned = ChainAligned(np.zeros((3, 1)), [0.0, -np.inf, 0.0])
        data = TrainingDataset(np.arange(3.0)[:, None], [-np.inf, 0.0, 0.0], aligned)
        kept = data.finite_rows()
        np.testing.assert_array_equal(kept.proposals[:, 0], [2.0])

    def test_rejects_nan(self):
        with pytest.raises(InvalidInputError):
            TrainingDataset(np.zeros((2, 1)), [0.0, np.nan])

    def test_frames(self):
        aligned = ChainAligned(np.ones((2, 2)), [-1.0, -2.0])
        data = TrainingDataset(np.zeros((2, 2)), [-3.0, -4.0], aligned, ['a', 'b'])
        d, d_tilde = data.to_frames()
        assert list(d.columns) == ['a', 'b', 'loglik']
        restored = TrainingDataset.from_frames(d, d_tilde)
        np.testing.assert_array_equal(restored.chain_aligned.logliks, [-1.0, -2.0])


class TestGpPrediction:

    @pytest.fixture
    def training(self):
        rng = np.random.default_rng(42)
        X = rng.uniform(-2, 2, size=(30, 2))
        y = -0.5 * np.sum(X ** 2, axis=1) + 0.3 * np.sin(3 * X[:, 0])
        return TrainingDataset(X, y)

    def test_matches_dense_reference(self, training):
        s2, ls, nugget = 2.0, np.array([0.7, 1.3]), 0.01
        gp = GpModel.from_hyperparams(training, s2, ls, nugget)
        Q = np.array([[0.1, -0.3], [1.5, 1.5], [-3.0, 0.5]])
        mean, var, beta, _ = _dense_reference(training.proposals, training.logliks, Q, s2, ls, nugget)
        got_mean, got_var = gp.predict_batch(Q)
        assert gp.jitter == 0.0
        np.testing.assert_allclose(gp.hyperparams.beta, beta, rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(got_mean, mean, rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(got_var, var, rtol=1e-6, atol=1e-8)

    def test_log_marginal_likelihood(self, training):
        s2, ls, nugget = 2.0, np.array([0.7, 1.3]), 0.01
        *_, expected = _dense_reference(training.proposals, training.logliks, training.proposals[:1],
                                        s2, ls, nugget)
        assert gp_log_marginal_likelihood(training, s2, ls, nugget) == pytest.approx(expected, rel=1e-8)

    def test_interpolates_training_points(self):
        X = np.linspace(-3, 3, 15)[:, None]
        y = np.sin(X[:, 0]) - 0.5 * X[:, 0] ** 2
        gp = GpModel.from_hyperparams(TrainingDataset(X, y), 1.0, [1.0], 1e-8)
        pred = gp_predict(gp, X[3])
        assert pred['mean'] == pytest.approx(y[3], abs=1e-4)
        assert pred['variance'] < 1e-4

    def test_reverts_to_quadratic_mean_far_away(self):
        X = np.linspace(-3, 3, 15)[:, None]
        y = np.sin(X[:, 0]) - 0.5 * X[:, 0] ** 2
        gp = GpModel.from_hyperparams(TrainingDataset(X, y), 1.0, [1.0], 1e-8)
        mean, var = gp.predict([50.0])
        assert mean == pytest.approx(float(build_features([50.0]) @ gp.hyperparams.beta))
        assert var == pytest.approx(1.0 + 1e-8, abs=1e-6)

    def test_dict_round_trip_predictions(self, training):
        gp = GpModel.from_hyperparams(training, 2.0, [0.7, 1.3], 0.01)
        restored = GpModel.from_dict(gp.to_dict())
        Q = np.array([[0.2, 0.2]])
        np.testing.assert_allclose(restored.predict_batch(Q)[0], gp.predict_batch(Q)[0])


class TestGpFit:

    def test_recovers_smooth_surface(self):
        rng = np.random.default_rng(42)
        X = rng.uniform(-2, 2, size=(80, 2))
        y = -0.5 * np.sum(X ** 2, axis=1) + 0.3 * np.sin(3 * X[:, 0]) + 0.05 * rng.standard_normal(80)
        data = TrainingDataset(X, y)
        gp = fit_gp(data.subset(np.arange(70)), GpFitConfig(restarts=3, seed=1))
        diag = gp_holdout_diagnostics(gp, data.subset(np.arange(70, 80)))
        assert diag['n_holdout'] == 10
        assert diag['rmse'] < 0.3
        assert gp.hyperparams.nugget_variance > 0

    def test_needs_more_rows_than_features(self):
        data = TrainingDataset(np.random.default_rng(0).normal(size=(6, 2)), np.zeros(6))
        with pytest.raises(InvalidInputError):
            fit_gp(data)

    def test_drops_impossible_rows(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(-1, 1, size=(25, 1))
        y = -0.5 * X[:, 0] ** 2
        y[0] = -np.inf
        gp = fit_gp(TrainingDataset(X, y), GpFitConfig(restarts=2))
        assert len(gp.training) == 24

    def test_empty_holdout(self):
        gp = GpModel.from_hyperparams(TrainingDataset(np.arange(5.0)[:, None], np.zeros(5)), 1.0, [1.0], 0.1)
        assert gp_holdout_diagnostics(gp, TrainingDataset(np.zeros((0, 1)), []))['n_holdout'] == 0


class TestGpDraws:

    def test_always_consumes_one_normal(self):
        X = np.linspace(-1, 1, 6)[:, None]
        gp = GpModel.from_hyperparams(TrainingDataset(X, -X[:, 0] ** 2), 1.0, [1.0], 1e-10)
        a, b = RngStream(4), RngStream(4)
        est = gp_sample_loglik(gp, X[2], a)
        b.standard_normal()
        assert est.source is LikelihoodSource.GP_DRAW
        assert a.uniform() == b.uniform()

    def test_draws_match_predictive_moments(self):
        X = np.linspace(-1, 1, 6)[:, None]
        gp = GpModel.from_hyperparams(TrainingDataset(X, -X[:, 0] ** 2), 1.0, [0.5], 0.01)
        rng = RngStream(9)
        mean, var = gp.predict([0.3])
        draws = np.array([gp_sample_loglik(gp, [0.3], rng).value for _ in range(20000)])
        assert draws.mean() == pytest.approx(mean, abs=4 * math.sqrt(var / 20000) + 1e-9)
        assert draws.var() == pytest.approx(var, rel=0.05)

    def test_model_method_matches_module_draw(self):
        X = np.linspace(-1, 1, 6)[:, None]
        gp = GpModel.from_hyperparams(TrainingDataset(X, -X[:, 0] ** 2), 1.0, [0.5], 0.01)
        a, b = RngStream(6), RngStream(6)
        draws = [gp.sample_loglik([0.2], a) for _ in range(3)]
        expected = [gp_sample_loglik(gp, [0.2], b) for _ in range(3)]
        assert [d.value for d in draws] == [e.value for e in expected]
        assert all(d.source is LikelihoodSource.GP_DRAW for d in draws)

    def test_fitted_model_draws(self, toy_gp):
        est = toy_gp.sample_loglik([0.0], RngStream(1))
        assert math.isfinite(est.value)
        mean, _ = toy_gp.predict([0.0])
        assert abs(mean - (-0.5 * math.log(2 * math.pi))) < 0.3
