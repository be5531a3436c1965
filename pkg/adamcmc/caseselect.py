"""
ADA 케이스 라벨링과 케이스 선택 모델 (biased coin / logistic / decision tree)

케이스 정의 (L~ = GP 서로게이트, L = 파티클 필터 우도):
    Case1: L~(theta*) > L~(prev) and L(theta*) > L(prev)
    Case2: L~(theta*) < L~(prev) and L(theta*) < L(prev)
    Case3: L~(theta*) > L~(prev) and L(theta*) < L(prev)
    Case4: L~(theta*) < L~(prev) and L(theta*) > L(prev)
동률은 '높지 않음' 쪽으로 분류한다.
"""

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Any, Callable, Dict, List, Optional, Tuple
import logging

import numpy as np
import pandas as pd
from scipy.optimize import minimize
from scipy.special import expit

from adamcmc.core import InvalidInputError, RngStream, SelectorFitError
from adamcmc.surrogate import TrainingDataset
from adamcmc.utils import safe_divide, safe_percent

logger = logging.getLogger(__name__)

RIDGE_FALLBACK = 1e-4
SEPARATION_LOGIT = 25.0


class CaseLabel(IntEnum):
    CASE1 = 1
    CASE2 = 2
    CASE3 = 3
    CASE4 = 4


class CaseGroup(str, Enum):
    GROUP13 = "13"
    GROUP24 = "24"

    @classmethod
    def of(cls, label: CaseLabel) -> 'CaseGroup':
        return cls.GROUP13 if CaseLabel(label) in (CaseLabel.CASE1, CaseLabel.CASE3) else cls.GROUP24

    @classmethod
    def from_surrogate(cls, gp_star_higher: bool) -> 'CaseGroup':
        return cls.GROUP13 if gp_star_higher else cls.GROUP24

    @property
    def first(self) -> CaseLabel:
        """그룹 내 '양성' 클래스 (Case1 또는 Case2)"""
        return CaseLabel.CASE1 if self is CaseGroup.GROUP13 else CaseLabel.CASE2

    @property
    def second(self) -> CaseLabel:
        return CaseLabel.CASE3 if self is CaseGroup.GROUP13 else CaseLabel.CASE4


def classify_case(gp_star_higher: bool, true_star_higher: bool) -> CaseLabel:
    """두 부등식 방향으로 케이스 결정"""
    if gp_star_higher:
        return CaseLabel.CASE1 if true_star_higher else CaseLabel.CASE3
    return CaseLabel.CASE4 if true_star_higher else CaseLabel.CASE2


@dataclass
class LabeledCases:
    """
    Attributes:
        thetas: (n, d) 제안값 theta*
        gp_log_ratios: l_GP(theta*) - l_GP(prev)
        labels: 케이스 번호 (1-4) 정수 배열
    """
    thetas: np.ndarray
    gp_log_ratios: np.ndarray
    labels: np.ndarray
    parameter_names: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        self.gp_log_ratios = np.asarray(self.gp_log_ratios, dtype=float).reshape(-1)
        self.labels = np.asarray(self.labels, dtype=int).reshape(-1)
        n = self.labels.size
        if self.thetas.shape[0] != n or self.gp_log_ratios.size != n:
            raise InvalidInputError("LabeledCases arrays must have one entry per row")
        if n and not np.isin(self.labels, [1, 2, 3, 4]).all():
            raise InvalidInputError("labels must be case numbers 1-4")
        if not self.parameter_names:
            self.parameter_names = [f"theta{i + 1}" for i in range(self.thetas.shape[1])]

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def groups(self) -> np.ndarray:
        return np.where(np.isin(self.labels, [1, 3]), CaseGroup.GROUP13.value, CaseGroup.GROUP24.value)

    def counts(self) -> Dict[int, int]:
        return {c: int(np.sum(self.labels == c)) for c in (1, 2, 3, 4)}

    def group_rows(self, group: CaseGroup) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(theta 행렬, gp 비율, y) - y=1 은 그룹의 첫 클래스(Case1/Case2)"""
        group = CaseGroup(group)
        mask = np.isin(self.labels, [group.first, group.second])
        y = (self.labels[mask] == group.first).astype(int)
        return self.thetas[mask], self.gp_log_ratios[mask], y

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.thetas, columns=self.parameter_names)
        df['gp_log_ratio'] = self.gp_log_ratios
        df['case'] = self.labels
        df['group'] = self.groups
        return df


def label_training_cases(data: TrainingDataset, gp, rng: RngStream) -> LabeledCases:
    """
    D와 행 정렬된 D~에 대해 GP 독립 추출값과 저장된 PF 로그 우도를 비교해 케이스 부여

    Args:
        data: chain_aligned(D~)가 채워진 학습 데이터
        gp: sample_loglik(theta, rng)를 제공하는 서로게이트
        rng: GP 추출용 스트림 (행마다 theta*, prev 순서로 두 번 소비)

    Raises:
        InvalidInputError: D~가 없음
    """
    if data.chain_aligned is None:
        raise InvalidInputError("case labeling needs the chain-aligned harvest table (D~)")
    n = len(data)
    gp_ratios = np.empty(n)
    labels = np.empty(n, dtype=int)
    for i in range(n):
        gp_star = gp.sample_loglik(data.proposals[i], rng).value
        gp_prev = gp.sample_loglik(data.chain_aligned.states[i], rng).value
        gp_ratios[i] = gp_star - gp_prev
        true_higher = data.logliks[i] > data.chain_aligned.logliks[i]
        labels[i] = classify_case(gp_star > gp_prev, bool(true_higher))
    labeled = LabeledCases(data.proposals, gp_ratios, labels, list(data.parameter_names))
    logger.info(f"Labeled {n} training proposals: {labeled.counts()}")
    return labeled


# ---------------------------------------------------------------------------
# 선택 모델
# ---------------------------------------------------------------------------

class CaseSelector:
    """select(theta*, gp_log_ratio, gp_star_higher, rng) -> CaseLabel"""

    kind: str = 'base'

    def choose_first(self, group: CaseGroup, theta_star: np.ndarray, gp_log_ratio: float,
                     rng: RngStream, theta_prev: Optional[np.ndarray]) -> bool:
        raise NotImplementedError

    def select(self, theta_star, gp_log_ratio: float, gp_star_higher: bool, rng: RngStream,
               theta_prev=None) -> CaseLabel:
        group = CaseGroup.from_surrogate(gp_star_higher)
        theta_star = np.asarray(getattr(theta_star, 'values', theta_star), dtype=float).reshape(-1)
        first = self.choose_first(group, theta_star, float(gp_log_ratio), rng, theta_prev)
        return group.first if first else group.second

    def to_dict(self) -> Dict[str, Any]:
        raise NotImplementedError


@dataclass
class BiasedCoinSelector(CaseSelector):
    """전역 상대빈도 p1 = P(Case1 | 13), p2 = P(Case2 | 24)"""
    p1: float
    p2: float
    counts: Dict[int, int] = field(default_factory=dict)
    kind: str = field(default='coin', init=False)

    def __post_init__(self):
        for name, p in (('p1', self.p1), ('p2', self.p2)):
            if not 0.0 <= p <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1], got {p}")

    @property
    def p3(self) -> float:
        return 1.0 - self.p1

    @property
    def p4(self) -> float:
        return 1.0 - self.p2

    def probabilities(self) -> Dict[str, float]:
        return {'p1': self.p1, 'p2': self.p2, 'p3': self.p3, 'p4': self.p4}

    def choose_first(self, group, theta_star, gp_log_ratio, rng, theta_prev):
        p = self.p1 if group is CaseGroup.GROUP13 else self.p2
        return rng.uniform() < p

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'p1': self.p1, 'p2': self.p2,
                'counts': {str(k): v for k, v in self.counts.items()}}


def fit_biased_coin(labels: LabeledCases) -> BiasedCoinSelector:
    """p1 = #C1/(#C1+#C3), p2 = #C2/(#C2+#C4)"""
    counts = labels.counts()
    n13 = counts[1] + counts[3]
    n24 = counts[2] + counts[4]
    if n13 == 0 or n24 == 0:
        empty = 'Case1/Case3' if n13 == 0 else 'Case2/Case4'
        raise SelectorFitError(f"no training rows in group {empty}; run a longer harvest")
    selector = BiasedCoinSelector(counts[1] / n13, counts[2] / n24, counts)
    logger.info(f"Biased coin: p1={selector.p1:.3f} p2={selector.p2:.3f}")
    return selector


# --- logistic regression ---

@dataclass
class LogisticModel:
    """P(first class | theta) = expit([1, theta] . coef)"""
    coef: np.ndarray
    ridge: float = 0.0

    def __post_init__(self):
        self.coef = np.asarray(self.coef, dtype=float).reshape(-1)

    def probability(self, theta: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(theta)
        return expit(self.coef[0] + X @ self.coef[1:])


def _logistic_objective(w, X, y, weights, ridge):
    eta = X @ w
    return float(np.sum(weights * (np.logaddexp(0.0, eta) - y * eta)) + 0.5 * ridge * w @ w)


def _logistic_grad(w, X, y, weights, ridge):
    return X.T @ (weights * (expit(X @ w) - y)) + ridge * w


def _logistic_hess(w, X, y, weights, ridge):
    p = expit(X @ w)
    return (X.T * (weights * p * (1.0 - p))) @ X + ridge * np.eye(w.size)


def fit_logistic_model(theta: np.ndarray, y: np.ndarray,
                       sample_weight: Optional[np.ndarray] = None) -> LogisticModel:
    """
    최대우도 로지스틱 회귀 (Newton-CG); 완전 분리 감지 시 ridge 1e-4로 재적합
    """
    X = np.column_stack([np.ones(len(y)), np.atleast_2d(theta)])
    y = np.asarray(y, dtype=float)
    weights = np.ones(y.size) if sample_weight is None else np.asarray(sample_weight, dtype=float)

    def solve(ridge: float):
        return minimize(_logistic_objective, np.zeros(X.shape[1]), args=(X, y, weights, ridge),
                        jac=_logistic_grad, hess=_logistic_hess, method='Newton-CG',
                        options={'xtol': 1e-12, 'maxiter': 500})

    res = solve(0.0)
    separated = (not res.success) or np.max(np.abs(X @ res.x)) > SEPARATION_LOGIT
    if separated:
        logger.warning("logistic fit: complete separation detected, refitting with ridge penalty 1e-4")
        res = solve(RIDGE_FALLBACK)
        return LogisticModel(res.x, ridge=RIDGE_FALLBACK)
    return LogisticModel(res.x)


@dataclass
class LogisticSelector(CaseSelector):
    """그룹별 로지스틱 모델 s13(theta*), s24(theta*) - 확률로 Bernoulli 추출"""
    model13: LogisticModel
    model24: LogisticModel
    kind: str = field(default='logistic', init=False)

    def choose_first(self, group, theta_star, gp_log_ratio, rng, theta_prev):
        model = self.model13 if group is CaseGroup.GROUP13 else self.model24
        return rng.uniform() < float(model.probability(theta_star)[0])

    def predict_first(self, group: CaseGroup, thetas: np.ndarray, gp_log_ratios: np.ndarray) -> np.ndarray:
        model = self.model13 if group is CaseGroup.GROUP13 else self.model24
        return model.probability(thetas) >= 0.5

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind,
                'model13': {'coef': self.model13.coef.tolist(), 'ridge': self.model13.ridge},
                'model24': {'coef': self.model24.coef.tolist(), 'ridge': self.model24.ridge}}


def _class_weights(y: np.ndarray) -> np.ndarray:
    """balanced: n / (2 * n_class)"""
    n = y.size
    n1 = max(int(y.sum()), 1)
    n0 = max(n - int(y.sum()), 1)
    return np.where(y == 1, n / (2.0 * n1), n / (2.0 * n0))


def _checked_group(labels: LabeledCases, group: CaseGroup):
    theta, gp_ratio, y = labels.group_rows(group)
    if y.size == 0:
        raise SelectorFitError(f"no training rows in group {CaseGroup(group).value}; run a longer harvest")
    return theta, gp_ratio, y


def fit_logistic(labels: LabeledCases, class_weighting: bool = False) -> LogisticSelector:
    models = {}
    for group in CaseGroup:
        theta, _, y = _checked_group(labels, group)
        weights = _class_weights(y) if class_weighting else None
        models[group] = fit_logistic_model(theta, y, weights)
    return LogisticSelector(models[CaseGroup.GROUP13], models[CaseGroup.GROUP24])


# --- CART decision tree ---

@dataclass
class DecisionTree:
    """
    배열 기반 이진 분류 트리 (Gini)

    노드 i: feature[i] < 0 이면 리프, 예측 클래스는 value[i]
    """
    feature: List[int] = field(default_factory=list)
    threshold: List[float] = field(default_factory=list)
    left: List[int] = field(default_factory=list)
    right: List[int] = field(default_factory=list)
    value: List[int] = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        def walk(i: int) -> int:
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))
        return walk(0) if self.n_nodes else 0

    def _add(self, feature: int, threshold: float, value: int) -> int:
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.feature) - 1

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.empty(X.shape[0], dtype=int)
        for r, row in enumerate(X):
            i = 0
            while self.feature[i] >= 0:
                i = self.left[i] if row[self.feature[i]] <= self.threshold[i] else self.right[i]
            out[r] = self.value[i]
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {'feature': list(self.feature), 'threshold': list(self.threshold),
                'left': list(self.left), 'right': list(self.right), 'value': list(self.value)}

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'DecisionTree':
        return cls([int(v) for v in payload['feature']], [float(v) for v in payload['threshold']],
                   [int(v) for v in payload['left']], [int(v) for v in payload['right']],
                   [int(v) for v in payload['value']])


def _gini(w1: np.ndarray, w_total: np.ndarray) -> np.ndarray:
    with np.errstate(invalid='ignore', divide='ignore'):
        p = np.where(w_total > 0, w1 / w_total, 0.0)
    return 2.0 * p * (1.0 - p)


def _best_split(X: np.ndarray, y: np.ndarray, w: np.ndarray, min_leaf: int):
    """가중 Gini 감소가 최대인 (feature, threshold); 유효 분할이 없으면 None"""
    n = y.size
    best = None
    best_score = np.inf
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind='stable')
        xs, ys, ws = X[order, j], y[order], w[order]
        cw = np.cumsum(ws)
        cw1 = np.cumsum(ws * ys)
        total, total1 = cw[-1], cw1[-1]
        # 분할 위치 k: 왼쪽 = 앞의 k개
        k = np.arange(min_leaf, n - min_leaf + 1)
        if k.size == 0:
            continue
        k = k[xs[k - 1] < xs[np.minimum(k, n - 1)]]
        if k.size == 0:
            continue
        lw, lw1 = cw[k - 1], cw1[k - 1]
        rw, rw1 = total - lw, total1 - lw1
        score = lw * _gini(lw1, lw) + rw * _gini(rw1, rw)
        idx = int(np.argmin(score))
        if score[idx] < best_score - 1e-12:
            best_score = float(score[idx])
            kk = int(k[idx])
            best = (j, 0.5 * (xs[kk - 1] + xs[kk]))
    return best


def fit_decision_tree(X: np.ndarray, y: np.ndarray, max_depth: int = 6, min_leaf: int = 10,
                      sample_weight: Optional[np.ndarray] = None) -> DecisionTree:
    """CART 이진 트리 (분할 조건: 불순 노드, 깊이 < max_depth, 양쪽 리프 >= min_leaf)"""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=int).reshape(-1)
    w = np.ones(y.size) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    if y.size == 0:
        raise SelectorFitError("cannot fit a decision tree on zero rows")
    tree = DecisionTree()

    def majority(idx: np.ndarray) -> int:
        w1 = float(np.sum(w[idx] * y[idx]))
        return int(w1 > 0.5 * float(np.sum(w[idx])))

    def build(idx: np.ndarray, depth: int) -> int:
        node = tree._add(-1, 0.0, majority(idx))
        pure = np.all(y[idx] == y[idx][0])
        if pure or depth >= max_depth or idx.size < 2 * min_leaf:
            return node
        split = _best_split(X[idx], y[idx], w[idx], min_leaf)
        if split is None:
            return node
        j, thr = split
        go_left = X[idx, j] <= thr
        tree.feature[node] = j
        tree.threshold[node] = float(thr)
        left = build(idx[go_left], depth + 1)
        right = build(idx[~go_left], depth + 1)
        tree.left[node] = left
        tree.right[node] = right
        return node

    build(np.arange(y.size), 0)
    return tree


def _tree_features(thetas: np.ndarray, gp_log_ratios: np.ndarray) -> np.ndarray:
    return np.column_stack([np.atleast_2d(thetas), np.asarray(gp_log_ratios, dtype=float).reshape(-1)])


@dataclass
class TreeSelector(CaseSelector):
    """그룹별 분류 트리 - 공변량 theta* + GP 로그 우도 비율, 결정론적 클래스 결정"""
    tree13: DecisionTree
    tree24: DecisionTree
    kind: str = field(default='tree', init=False)

    def choose_first(self, group, theta_star, gp_log_ratio, rng, theta_prev):
        tree = self.tree13 if group is CaseGroup.GROUP13 else self.tree24
        return bool(tree.predict(_tree_features(theta_star[None, :], [gp_log_ratio]))[0])

    def predict_first(self, group: CaseGroup, thetas: np.ndarray, gp_log_ratios: np.ndarray) -> np.ndarray:
        tree = self.tree13 if group is CaseGroup.GROUP13 else self.tree24
        return tree.predict(_tree_features(thetas, gp_log_ratios)).astype(bool)

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'tree13': self.tree13.to_dict(), 'tree24': self.tree24.to_dict()}


def fit_tree(labels: LabeledCases, max_depth: int = 6, min_leaf: int = 10,
             class_weighting: bool = False) -> TreeSelector:
    trees = {}
    for group in CaseGroup:
        theta, gp_ratio, y = _checked_group(labels, group)
        weights = _class_weights(y) if class_weighting else None
        trees[group] = fit_decision_tree(_tree_features(theta, gp_ratio), y, max_depth, min_leaf, weights)
        logger.info(f"Tree for group {group.value}: {trees[group].n_nodes} nodes, depth {trees[group].depth}")
    return TreeSelector(trees[CaseGroup.GROUP13], trees[CaseGroup.GROUP24])


@dataclass
class OracleCaseSelector(CaseSelector):
    """정확한 로그 우도로 실제 케이스를 판정 (검증용, 난수 미사용)"""
    exact_loglik: Callable[[np.ndarray], float]
    kind: str = field(default='oracle', init=False)

    def choose_first(self, group, theta_star, gp_log_ratio, rng, theta_prev):
        if theta_prev is None:
            raise InvalidInputError("the oracle selector needs the current chain state")
        prev = np.asarray(getattr(theta_prev, 'values', theta_prev), dtype=float)
        true_higher = self.exact_loglik(theta_star) > self.exact_loglik(prev)
        return classify_case(group is CaseGroup.GROUP13, bool(true_higher)) is group.first

    def to_dict(self) -> Dict[str, Any]:
        raise InvalidInputError("the oracle selector cannot be serialized")


def select_case(selector: CaseSelector, theta_star, gp_log_ratio: float, gp_star_higher: bool,
                rng: RngStream, theta_prev=None) -> CaseLabel:
    return selector.select(theta_star, gp_log_ratio, gp_star_higher, rng, theta_prev)


def fit_selector(kind: str, labels: LabeledCases, max_depth: int = 6, min_leaf: int = 10,
                 class_weighting: bool = False) -> CaseSelector:
    if kind == 'coin':
        return fit_biased_coin(labels)
    if kind == 'logistic':
        return fit_logistic(labels, class_weighting=class_weighting)
    if kind == 'tree':
        return fit_tree(labels, max_depth=max_depth, min_leaf=min_leaf, class_weighting=class_weighting)
    raise InvalidInputError(f"unknown selector '{kind}' (expected coin | logistic | tree)")


def selector_from_dict(payload: Dict[str, Any]) -> CaseSelector:
    kind = payload.get('kind')
    if kind == 'coin':
        counts = {int(k): int(v) for k, v in payload.get('counts', {}).items()}
        return BiasedCoinSelector(float(payload['p1']), float(payload['p2']), counts)
    if kind == 'logistic':
        return LogisticSelector(LogisticModel(payload['model13']['coef'], payload['model13'].get('ridge', 0.0)),
                                LogisticModel(payload['model24']['coef'], payload['model24'].get('ridge', 0.0)))
    if kind == 'tree':
        return TreeSelector(DecisionTree.from_dict(payload['tree13']), DecisionTree.from_dict(payload['tree24']))
    raise InvalidInputError(f"unknown selector kind in container: {kind!r}")


# ---------------------------------------------------------------------------
# 학습 데이터 위 선택 모델 평가
# ---------------------------------------------------------------------------

def assess_selector(selector: CaseSelector, labels: LabeledCases, rng: RngStream) -> Dict[str, Any]:
    """
    학습 행마다 케이스를 선택해 실제 라벨과 비교

    Returns:
        {'table': 케이스별 선택 수 / 가정 성립 비율 DataFrame,
         'accuracy': 전체 정확도 %, 'majority_baseline': 그룹별 다수 클래스 정확도 %}
    """
    n = len(labels)
    chosen = np.empty(n, dtype=int)
    for i in range(n):
        gp_higher = labels.labels[i] in (1, 3)
        chosen[i] = select_case(selector, labels.thetas[i], labels.gp_log_ratios[i], gp_higher, rng)

    rows = []
    for case in CaseLabel:
        picked = chosen == case
        holds = int(np.sum(picked & (labels.labels == case)))
        rows.append({
            'case': int(case),
            'n_true': int(np.sum(labels.labels == case)),
            'n_selected': int(picked.sum()),
            'n_holds': holds,
            'pct_holds': safe_percent(holds, int(picked.sum())),
        })

    majority_hits = 0
    for group in CaseGroup:
        _, _, y = labels.group_rows(group)
        majority_hits += max(int(y.sum()), int(y.size - y.sum()))

    return {
        'table': pd.DataFrame(rows),
        'accuracy': safe_percent(int(np.sum(chosen == labels.labels)), n),
        'majority_baseline': safe_percent(majority_hits, n),
        'case_fraction': {int(c): safe_divide(int(np.sum(labels.labels == c)), n) for c in CaseLabel},
    }
