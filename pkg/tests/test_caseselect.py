"""
케이스 라벨링 / 선택 모델 테스트
"""

import numpy as np
import pytest

from adamcmc.caseselect import (
    BiasedCoinSelector,
    CaseGroup,
    CaseLabel,
    LabeledCases,
    OracleCaseSelector,
    RIDGE_FALLBACK,
    assess_selector,
    classify_case,
    fit_biased_coin,
    fit_decision_tree,
    fit_logistic,
    fit_logistic_model,
    fit_selector,
    fit_tree,
    label_training_cases,
    selector_from_dict,
)
from adamcmc.core import InvalidInputError, RngStream, SelectorFitError
from adamcmc.surrogate import ChainAligned, TrainingDataset

from conftest import NoisySurrogate


def _labels_from_counts(counts, d=1, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.concatenate([np.full(n, case) for case, n in counts.items()])
    return LabeledCases(rng.normal(size=(labels.size, d)), rng.normal(size=labels.size), labels)


def _irls(X, y, iterations=50):
    w = np.zeros(X.shape[1])
    for _ in range(iterations):
        p = 1.0 / (1.0 + np.exp(-X @ w))
        W = p * (1 - p)
        w = w + np.linalg.solve((X.T * W) @ X, X.T @ (y - p))
    return w


class TestClassification:

    def test_case_table(self):
        assert classify_case(True, True) is CaseLabel.CASE1
        assert classify_case(False, False) is CaseLabel.CASE2
        assert classify_case(True, False) is CaseLabel.CASE3
        assert classify_case(False, True) is CaseLabel.CASE4

    def test_groups(self):
        assert CaseGroup.of(CaseLabel.CASE3) is CaseGroup.GROUP13
        assert CaseGroup.from_surrogate(False) is CaseGroup.GROUP24
        assert CaseGroup.GROUP24.first is CaseLabel.CASE2
        assert CaseGroup.GROUP24.second is CaseLabel.CASE4

    def test_group_rows(self):
        labels = LabeledCases(np.arange(4.0)[:, None], np.zeros(4), [1, 3, 2, 4])
        theta, _, y = labels.group_rows(CaseGroup.GROUP13)
        np.testing.assert_array_equal(theta[:, 0], [0.0, 1.0])
        np.testing.assert_array_equal(y, [1, 0])

    def test_invalid_labels(self):
        with pytest.raises(InvalidInputError):
            LabeledCases(np.zeros((1, 1)), [0.0], [5])


class TestLabeling:

    def _dataset(self, toy_target):
        rng = np.random.default_rng(1)
        proposals = rng.normal(size=(40, 1))
        states = rng.normal(size=(40, 1))
        exact = np.vectorize(lambda v: toy_target.exact_loglik([v]))
        aligned = ChainAligned(states, exact(states[:, 0]))
        return TrainingDataset(proposals, exact(proposals[:, 0]), aligned, ['x'])

    def test_exact_surrogate_agrees_with_truth(self, toy_target, exact_surrogate):
        labels = label_training_cases(self._dataset(toy_target), exact_surrogate, RngStream(3))
        assert set(np.unique(labels.labels)) <= {1, 2}
        np.testing.assert_allclose(
            labels.gp_log_ratios,
            self._dataset(toy_target).logliks - self._dataset(toy_target).chain_aligned.logliks)

    def test_reversed_surrogate_disagrees(self, toy_target):
        reversed_gp = NoisySurrogate(lambda v: -toy_target.exact_loglik(v), sd=0.0)
        labels = label_training_cases(self._dataset(toy_target), reversed_gp, RngStream(3))
        assert set(np.unique(labels.labels)) <= {3, 4}

    def test_two_draws_per_row(self, toy_target, noisy_surrogate):
        rng, reference = RngStream(5), RngStream(5)
        label_training_cases(self._dataset(toy_target), noisy_surrogate, rng)
        reference.standard_normal(80)
        assert rng.uniform() == reference.uniform()

    def test_needs_chain_aligned_table(self, noisy_surrogate):
        data = TrainingDataset(np.zeros((3, 1)), np.zeros(3))
        with pytest.raises(InvalidInputError):
            label_training_cases(data, noisy_surrogate, RngStream(1))

    def test_fitted_gp_labels_mostly_agree(self, toy_harvest, toy_gp):
        labels = label_training_cases(toy_harvest, toy_gp, RngStream(3))
        counts = labels.counts()
        assert sum(counts.values()) == len(toy_harvest)
        assert counts[1] + counts[2] > 0.7 * len(toy_harvest)
        again = label_training_cases(toy_harvest, toy_gp, RngStream(3))
        np.testing.assert_array_equal(again.gp_log_ratios, labels.gp_log_ratios)

    def test_fitted_gp_feeds_coin_selector(self, toy_harvest, toy_gp):
        labels = label_training_cases(toy_harvest, toy_gp, RngStream(4))
        coin = fit_biased_coin(labels)
        assert 0.0 <= coin.p1 <= 1.0 and 0.0 <= coin.p2 <= 1.0
        assert fit_selector('coin', labels).kind == 'coin'


class TestBiasedCoin:

    def test_probabilities(self):
        labels = _labels_from_counts({1: 59, 3: 41, 2: 91, 4: 9})
        coin = fit_biased_coin(labels)
        probs = coin.probabilities()
        assert probs['p1'] == pytest.approx(0.59)
        assert probs['p2'] == pytest.approx(0.91)
        assert probs['p3'] == pytest.approx(0.41)
        assert probs['p4'] == pytest.approx(0.09)

    def test_empty_group(self):
        with pytest.raises(SelectorFitError):
            fit_biased_coin(_labels_from_counts({1: 5, 3: 5}))

    def test_selection_frequencies(self):
        coin = BiasedCoinSelector(0.59, 0.91)
        rng = RngStream(2)
        picks = np.array([int(coin.select([0.0], 0.1, True, rng)) for _ in range(20000)])
        assert set(np.unique(picks)) <= {1, 3}
        assert np.mean(picks == 1) == pytest.approx(0.59, abs=0.02)
        picks = np.array([int(coin.select([0.0], -0.1, False, rng)) for _ in range(20000)])
        assert set(np.unique(picks)) <= {2, 4}
        assert np.mean(picks == 2) == pytest.approx(0.91, abs=0.02)

    def test_invalid_probability(self):
        with pytest.raises(InvalidInputError):
            BiasedCoinSelector(1.2, 0.5)


class TestLogistic:

    def test_matches_irls(self):
        rng = np.random.default_rng(42)
        theta = rng.normal(size=(300, 2))
        eta = 0.3 + 1.2 * theta[:, 0] - 0.8 * theta[:, 1]
        y = (rng.uniform(size=300) < 1 / (1 + np.exp(-eta))).astype(int)
        model = fit_logistic_model(theta, y)
        expected = _irls(np.column_stack([np.ones(300), theta]), y)
        assert model.ridge == 0.0
        np.testing.assert_allclose(model.coef, expected, rtol=1e-4, atol=1e-6)

    def test_separation_falls_back_to_ridge(self):
        theta = np.linspace(-2, 2, 40)[:, None]
        y = (theta[:, 0] > 0).astype(int)
        model = fit_logistic_model(theta, y)
        assert model.ridge == RIDGE_FALLBACK
        assert np.all(np.isfinite(model.coef))
        probs = model.probability(np.array([[-1.5], [1.5]]))
        assert probs[0] < 0.5 < probs[1]

    def test_selector_per_group(self):
        rng = np.random.default_rng(0)
        thetas = rng.normal(size=(400, 1))
        gp_higher = rng.uniform(size=400) < 0.5
        labels = np.where(gp_higher, np.where(thetas[:, 0] > 0, 1, 3), np.where(thetas[:, 0] > 0, 4, 2))
        selector = fit_logistic(LabeledCases(thetas, np.zeros(400), labels))
        first = selector.predict_first(CaseGroup.GROUP13, np.array([[2.0], [-2.0]]), np.zeros(2))
        np.testing.assert_array_equal(first, [True, False])
        first = selector.predict_first(CaseGroup.GROUP24, np.array([[2.0], [-2.0]]), np.zeros(2))
        np.testing.assert_array_equal(first, [False, True])


class TestDecisionTree:

    def test_single_split(self):
        X = np.arange(100.0)[:, None]
        y = (X[:, 0] >= 50).astype(int)
        tree = fit_decision_tree(X, y, max_depth=6, min_leaf=10)
        assert tree.n_nodes == 3
        assert tree.depth == 1
        assert tree.feature[0] == 0
        assert tree.threshold[0] == pytest.approx(49.5)
        np.testing.assert_array_equal(tree.predict(np.array([[10.0], [49.5], [49.6], [90.0]])), [0, 0, 1, 1])

    def test_min_leaf_blocks_splits(self):
        X = np.arange(15.0)[:, None]
        y = (X[:, 0] >= 7).astype(int)
        tree = fit_decision_tree(X, y, max_depth=6, min_leaf=10)
        assert tree.n_nodes == 1

    def test_depth_cap(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(500, 3))
        y = rng.integers(0, 2, size=500)
        tree = fit_decision_tree(X, y, max_depth=2, min_leaf=10)
        assert tree.depth <= 2

    def test_leaf_sizes(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(300, 2))
        y = (X[:, 0] + 0.3 * rng.normal(size=300) > 0).astype(int)
        tree = fit_decision_tree(X, y, max_depth=6, min_leaf=10)
        leaves = [i for i in range(tree.n_nodes) if tree.feature[i] < 0]
        # 각 리프에 도달하는 학습 행 수
        reach = {leaf: 0 for leaf in leaves}
        for row in X:
            i = 0
            while tree.feature[i] >= 0:
                i = tree.left[i] if row[tree.feature[i]] <= tree.threshold[i] else tree.right[i]
            reach[i] += 1
        assert min(reach.values()) >= 10

    def test_tree_selector_uses_gp_ratio(self):
        rng = np.random.default_rng(3)
        n = 400
        gp_ratio = rng.normal(size=n)
        gp_higher = gp_ratio > 0
        true_first = np.abs(gp_ratio) > 0.5
        labels = np.where(gp_higher, np.where(true_first, 1, 3), np.where(true_first, 2, 4))
        selector = fit_tree(LabeledCases(rng.normal(size=(n, 1)), gp_ratio, labels))
        assert selector.tree13.feature[0] == 1
        restored = selector_from_dict(selector.to_dict())
        for theta, ratio in ((np.array([0.0]), 2.0), (np.array([0.0]), 0.1)):
            assert restored.select(theta, ratio, True, RngStream(1)) == selector.select(theta, ratio, True, RngStream(1))

    def test_empty_tree_input(self):
        with pytest.raises(SelectorFitError):
            fit_decision_tree(np.zeros((0, 1)), np.zeros(0))


class TestOracleAndFactory:

    def test_oracle_is_always_right(self, toy_target):
        oracle = OracleCaseSelector(toy_target.exact_loglik)
        # theta* = 0 이 theta_prev = 2 보다 우도가 높음
        assert oracle.select([0.0], 1.0, True, RngStream(1), theta_prev=[2.0]) is CaseLabel.CASE1
        assert oracle.select([0.0], -1.0, False, RngStream(1), theta_prev=[2.0]) is CaseLabel.CASE4
        assert oracle.select([2.0], 1.0, True, RngStream(1), theta_prev=[0.0]) is CaseLabel.CASE3
        assert oracle.select([2.0], -1.0, False, RngStream(1), theta_prev=[0.0]) is CaseLabel.CASE2

    def test_oracle_consumes_no_randomness(self, toy_target):
        oracle = OracleCaseSelector(toy_target.exact_loglik)
        rng, reference = RngStream(4), RngStream(4)
        oracle.select([0.0], 1.0, True, rng, theta_prev=[1.0])
        assert rng.uniform() == reference.uniform()

    def test_oracle_needs_current_state(self, toy_target):
        with pytest.raises(InvalidInputError):
            OracleCaseSelector(toy_target.exact_loglik).select([0.0], 1.0, True, RngStream(1))
        with pytest.raises(InvalidInputError):
            OracleCaseSelector(toy_target.exact_loglik).to_dict()

    def test_fit_selector_kinds(self):
        labels = _labels_from_counts({1: 30, 3: 30, 2: 30, 4: 30})
        assert fit_selector('coin', labels).kind == 'coin'
        assert fit_selector('logistic', labels).kind == 'logistic'
        assert fit_selector('tree', labels).kind == 'tree'
        with pytest.raises(InvalidInputError):
            fit_selector('forest', labels)

    def test_coin_round_trip(self):
        coin = BiasedCoinSelector(0.3, 0.7, {1: 3, 2: 7, 3: 7, 4: 3})
        restored = selector_from_dict(coin.to_dict())
        assert restored.probabilities() == coin.probabilities()
        assert restored.counts == coin.counts


class TestAssessment:

    def test_always_first_selector(self):
        labels = _labels_from_counts({1: 60, 3: 40, 2: 90, 4: 10})
        result = assess_selector(BiasedCoinSelector(1.0, 1.0), labels, RngStream(1))
        table = result['table'].set_index('case')
        assert table.loc[1, 'n_selected'] == 100
        assert table.loc[1, 'pct_holds'] == pytest.approx(60.0)
        assert table.loc[2, 'pct_holds'] == pytest.approx(90.0)
        assert table.loc[3, 'n_selected'] == 0
        assert table.loc[3, 'pct_holds'] is None or np.isnan(table.loc[3, 'pct_holds'])
        assert result['accuracy'] == pytest.approx(75.0)
        assert result['majority_baseline'] == pytest.approx(75.0)
        assert result['case_fraction'][4] == pytest.approx(0.05)
