"""
가우시안 프로세스 회귀 서로게이트 로그 우도

평균함수: 파라미터의 거듭제곱/상호작용 다항 특성 (GLS로 beta 추정)
공분산: 원좌표 theta 위의 비등방 squared-exponential 커널 + nugget
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
import pandas as pd
from scipy.linalg import cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from adamcmc.core import (
    GpFitError,
    InvalidInputError,
    LikelihoodSource,
    LogLikEstimate,
    RngStream,
)

logger = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)
LOG_2PI = math.log(2.0 * math.pi)


def _values(theta) -> np.ndarray:
    vals = getattr(theta, 'values', theta)
    return np.asarray(vals, dtype=float).reshape(-1)


# ---------------------------------------------------------------------------
# 학습 데이터
# ---------------------------------------------------------------------------

@dataclass
class ChainAligned:
    """D~: 각 제안 시점의 현재 체인 상태 theta^{r-1}와 그 로그 우도"""
    states: np.ndarray
    logliks: np.ndarray

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.logliks = np.asarray(self.logliks, dtype=float).reshape(-1)
        if self.states.shape[0] != self.logliks.size:
            raise InvalidInputError("chain-aligned states and logliks differ in length")


@dataclass
class TrainingDataset:
    """
    D = {theta*_i, l_u*_i} (+ 선택적으로 행 정렬된 D~)

    Attributes:
        proposals: (n, d) 제안값 행렬 Theta
        logliks: 길이 n 로그 우도 (파티클 필터 추정치)
        chain_aligned: i번째 제안 당시의 체인 상태와 로그 우도
        parameter_names: 좌표 이름
    """
    proposals: np.ndarray
    logliks: np.ndarray
    chain_aligned: Optional[ChainAligned] = None
    parameter_names: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.proposals = np.atleast_2d(np.asarray(self.proposals, dtype=float))
        self.logliks = np.asarray(self.logliks, dtype=float).reshape(-1)
        if self.proposals.shape[0] != self.logliks.size:
            raise InvalidInputError(
                f"{self.proposals.shape[0]} proposal rows but {self.logliks.size} logliks")
        if np.isnan(self.proposals).any() or np.isnan(self.logliks).any():
            raise InvalidInputError("training data contains NaN entries")
        if self.chain_aligned is not None and self.chain_aligned.states.shape != self.proposals.shape:
            raise InvalidInputError("chain-aligned data must match the proposal matrix shape")
        if not self.parameter_names:
            self.parameter_names = [f"theta{i + 1}" for i in range(self.proposals.shape[1])]

    def __len__(self) -> int:
        return int(self.logliks.size)

    @property
    def dim(self) -> int:
        return int(self.proposals.shape[1])

    def subset(self, idx: np.ndarray) -> 'TrainingDataset':
        aligned = None
        if self.chain_aligned is not None:
            aligned = ChainAligned(self.chain_aligned.states[idx], self.chain_aligned.logliks[idx])
        return TrainingDataset(self.proposals[idx], self.logliks[idx], aligned,
                               list(self.parameter_names))

    def finite_rows(self) -> 'TrainingDataset':
        """-inf 로그 우도(필터 붕괴) 행 제거"""
        ok = np.isfinite(self.logliks)
        if self.chain_aligned is not None:
            ok &= np.isfinite(self.chain_aligned.logliks)
        return self.subset(np.flatnonzero(ok))

    def to_frames(self) -> Tuple[pd.DataFrame, Optional[pd.DataFrame]]:
        d = pd.DataFrame(self.proposals, columns=self.parameter_names)
        d['loglik'] = self.logliks
        d_tilde = None
        if self.chain_aligned is not None:
            d_tilde = pd.DataFrame(self.chain_aligned.states, columns=self.parameter_names)
            d_tilde['loglik'] = self.chain_aligned.logliks
        return d, d_tilde

    @classmethod
    def from_frames(cls, d: pd.DataFrame, d_tilde: Optional[pd.DataFrame] = None) -> 'TrainingDataset':
        names = [c for c in d.columns if c != 'loglik']
        aligned = None
        if d_tilde is not None:
            aligned = ChainAligned(d_tilde[names].to_numpy(float), d_tilde['loglik'].to_numpy(float))
        return cls(d[names].to_numpy(float), d['loglik'].to_numpy(float), aligned, names)


def build_features(theta) -> np.ndarray:
    """
    [1, theta_1..theta_d, theta_1^2..theta_d^2, theta_i*theta_j (i<j)]
    길이 1 + 2d + d(d-1)/2
    """
    v = _values(theta)
    if v.size < 1:
        raise InvalidInputError("build_features needs d >= 1")
    return build_feature_matrix(v[None, :])[0]


def build_feature_matrix(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    iu, ju = np.triu_indices(d, k=1)
    return np.hstack([np.ones((n, 1)), X, X ** 2, X[:, iu] * X[:, ju]])


def trim_training_data(data: TrainingDataset, fraction: float) -> TrainingDataset:
    """로그 우도가 가장 낮은 floor(fraction * n) 행 제거 (나머지 순서 유지)"""
    if not 0.0 <= fraction < 1.0:
        raise InvalidInputError(f"trim fraction must lie in [0, 1), got {fraction}")
    n = len(data)
    n_drop = int(math.floor(fraction * n))
    if n_drop == 0:
        return data
    order = np.argsort(data.logliks, kind='stable')
    keep = np.sort(order[n_drop:])
    return data.subset(keep)


# ---------------------------------------------------------------------------
# GP 모델
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GpHyperparams:
    """eta = [phi, beta]"""
    beta: np.ndarray
    signal_variance: float
    length_scales: np.ndarray
    nugget_variance: float

    def __post_init__(self):
        object.__setattr__(self, 'beta', np.asarray(self.beta, dtype=float).reshape(-1))
        object.__setattr__(self, 'length_scales', np.asarray(self.length_scales, dtype=float).reshape(-1))
        if not self.signal_variance > 0 or not self.nugget_variance > 0:
            raise InvalidInputError("signal and nugget variances must be > 0")
        if np.any(self.length_scales <= 0):
            raise InvalidInputError("length scales must be > 0")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'beta': self.beta.tolist(),
            'signal_variance': float(self.signal_variance),
            'length_scales': self.length_scales.tolist(),
            'nugget_variance': float(self.nugget_variance),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'GpHyperparams':
        return cls(np.asarray(payload['beta']), float(payload['signal_variance']),
                   np.asarray(payload['length_scales']), float(payload['nugget_variance']))


def _se_kernel(A: np.ndarray, B: np.ndarray, signal_variance: float,
               length_scales: np.ndarray) -> np.ndarray:
    sq = cdist(A / length_scales, B / length_scales, metric='sqeuclidean')
    return signal_variance * np.exp(-0.5 * sq)


def _stable_cholesky(K: np.ndarray, scale: float) -> Tuple[np.ndarray, float]:
    """jitter 사다리 0, 1e-10 ... 1e-4 (signal variance 배율)로 Cholesky"""
    n = K.shape[0]
    for jitter in JITTER_LADDER:
        try:
            L = cholesky(K + jitter * scale * np.eye(n), lower=True, check_finite=False)
            if np.all(np.isfinite(L)):
                return L, jitter * scale
        except np.linalg.LinAlgError:
            continue
    raise GpFitError("kernel matrix is not positive definite after the full jitter ladder")


class GpModel:
    """
    적합된 GP: 하이퍼파라미터 + (trim 후) 학습 집합 + 캐시된 Cholesky 인자

    예측은 질의당 O(n) 커널 평가 + 삼각 solve 한 번.
    """

    def __init__(self, hyperparams: GpHyperparams, training: TrainingDataset,
                 chol: np.ndarray, alpha: np.ndarray, jitter: float = 0.0):
        self.hyperparams = hyperparams
        self.training = training
        self.chol = chol
        self.alpha = alpha
        self.jitter = jitter
        self._X = training.proposals

    @classmethod
    def from_hyperparams(cls, training: TrainingDataset, signal_variance: float,
                         length_scales: Sequence[float], nugget_variance: float,
                         beta: Optional[np.ndarray] = None) -> 'GpModel':
        """
        주어진 커널 파라미터로 인자 분해; beta가 없으면 GLS로 추정
        """
        X = training.proposals
        y = training.logliks
        ls = np.broadcast_to(np.asarray(length_scales, dtype=float), (X.shape[1],)).copy()
        K = _se_kernel(X, X, signal_variance, ls)
        K[np.diag_indices_from(K)] += nugget_variance
        L, jitter = _stable_cholesky(K, signal_variance)
        H = build_feature_matrix(X)
        if beta is None:
            beta = _gls_beta(L, H, y)
        resid = y - H @ beta
        alpha = solve_triangular(L.T, solve_triangular(L, resid, lower=True), lower=False)
        hp = GpHyperparams(beta, signal_variance, ls, nugget_variance)
        return cls(hp, training, L, alpha, jitter)

    def predict(self, theta) -> Tuple[float, float]:
        means, variances = self.predict_batch(_values(theta)[None, :])
        return float(means[0]), float(variances[0])

    def predict_batch(self, thetas: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        Q = np.atleast_2d(np.asarray(thetas, dtype=float))
        hp = self.hyperparams
        k_star = _se_kernel(Q, self._X, hp.signal_variance, hp.length_scales)
        means = build_feature_matrix(Q) @ hp.beta + k_star @ self.alpha
        v = solve_triangular(self.chol, k_star.T, lower=True)
        variances = hp.signal_variance + hp.nugget_variance - np.sum(v * v, axis=0)
        return means, np.maximum(variances, 0.0)

    def sample_loglik(self, theta, rng: RngStream) -> LogLikEstimate:
        """샘플러/케이스 라벨링이 호출하는 대리 우도 추출 (gp_sample_loglik 참고)"""
        return gp_sample_loglik(self, theta, rng)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'hyperparams': self.hyperparams.to_dict(),
            'parameter_names': list(self.training.parameter_names),
            'training_proposals': self.training.proposals.tolist(),
            'training_logliks': self.training.logliks.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'GpModel':
        hp = GpHyperparams.from_dict(payload['hyperparams'])
        training = TrainingDataset(np.asarray(payload['training_proposals']),
                                   np.asarray(payload['training_logliks']),
                                   parameter_names=list(payload['parameter_names']))
        return cls.from_hyperparams(training, hp.signal_variance, hp.length_scales,
                                    hp.nugget_variance, beta=hp.beta)


def _gls_beta(L: np.ndarray, H: np.ndarray, y: np.ndarray) -> np.ndarray:
    Hw = solve_triangular(L, H, lower=True)
    yw = solve_triangular(L, y, lower=True)
    beta, *_ = np.linalg.lstsq(Hw, yw, rcond=None)
    return beta


def gp_log_marginal_likelihood(data: TrainingDataset, signal_variance: float,
                               length_scales: Sequence[float], nugget_variance: float) -> float:
    """GLS beta를 프로파일한 로그 주변우도"""
    X, y = data.proposals, data.logliks
    ls = np.broadcast_to(np.asarray(length_scales, dtype=float), (X.shape[1],))
    K = _se_kernel(X, X, signal_variance, ls)
    K[np.diag_indices_from(K)] += nugget_variance
    L = cholesky(K, lower=True, check_finite=False)
    H = build_feature_matrix(X)
    beta = _gls_beta(L, H, y)
    z = solve_triangular(L, y - H @ beta, lower=True)
    n = y.size
    return float(-0.5 * z @ z - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI)


@dataclass(frozen=True)
class GpFitConfig:
    """
    Attributes:
        restarts: 다중 시작점 수
        max_fit_rows: 하이퍼파라미터 최적화에 쓰는 최대 행 수 (등간격 부분표본)
        seed: 재시작점 난수 시드
        workers: 재시작 병렬 스레드 수
    """
    restarts: int = 8
    max_fit_rows: int = 1000
    seed: int = 0
    workers: int = 1


def _initial_log_params(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    H = build_feature_matrix(X)
    beta, *_ = np.linalg.lstsq(H, y, rcond=None)
    resid_var = max(float(np.var(y - H @ beta)), 1e-8)
    spread = np.std(X, axis=0)
    spread = np.where(spread > 0, spread, 1.0)
    return np.concatenate([[math.log(resid_var)], np.log(spread), [math.log(0.1 * resid_var)]])


def fit_gp(data: TrainingDataset, config: Optional[GpFitConfig] = None) -> GpModel:
    """
    로그 주변우도 최대화 (GLS beta 프로파일, 다중 시작 L-BFGS-B) 후 전체 행으로 인자 분해

    Raises:
        InvalidInputError: 행 수가 특성 차원 이하
        GpFitError: 최종 커널 행렬 분해 실패
    """
    config = config or GpFitConfig()
    data = data.finite_rows()
    n, d = data.proposals.shape
    p = 1 + 2 * d + d * (d - 1) // 2
    if n <= p:
        raise InvalidInputError(f"fit_gp needs more than {p} rows for d={d}, got {n}")

    if n > config.max_fit_rows:
        idx = np.linspace(0, n - 1, config.max_fit_rows).round().astype(int)
        fit_rows = data.subset(np.unique(idx))
    else:
        fit_rows = data
    X, y = fit_rows.proposals, fit_rows.logliks

    x0 = _initial_log_params(X, y)
    spread = x0[1:1 + d]
    lower = np.concatenate([[x0[0] - 14.0], spread - 7.0, [x0[0] - 25.0]])
    upper = np.concatenate([[x0[0] + 14.0], spread + 7.0, [x0[0] + 3.0]])
    bounds = list(zip(lower, upper))

    def objective(log_params: np.ndarray) -> float:
        try:
            value = gp_log_marginal_likelihood(
                fit_rows, math.exp(log_params[0]), np.exp(log_params[1:1 + d]),
                math.exp(log_params[-1]))
        except (np.linalg.LinAlgError, ValueError):
            return 1e25
        return -value if math.isfinite(value) else 1e25

    rng = np.random.default_rng(config.seed)
    starts = [x0] + [np.clip(x0 + rng.normal(0.0, 1.0, x0.size), lower, upper)
                     for _ in range(max(config.restarts, 1) - 1)]

    def run(start: np.ndarray):
        return minimize(objective, start, method='L-BFGS-B', bounds=bounds)

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(s) for s in starts]

    best = min(results, key=lambda r: r.fun)
    if best.fun >= 1e25:
        raise GpFitError("marginal likelihood could not be evaluated at any restart")
    logger.info(f"GP fit on {fit_rows.logliks.size} rows: best -logML={best.fun:.3f} "
                f"over {len(results)} restarts")

    log_params = best.x
    return GpModel.from_hyperparams(
        data, math.exp(log_params[0]), np.exp(log_params[1:1 + d]), math.exp(log_params[-1]))


def gp_predict(model: GpModel, theta) -> Dict[str, float]:
    """닫힌 형태 예측 평균/분산 (분산은 0 아래로 클리핑)"""
    mean, variance = model.predict(theta)
    return {'mean': mean, 'variance': variance}


def gp_predict_batch(model: GpModel, thetas: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return model.predict_batch(thetas)


def gp_sample_loglik(model: GpModel, theta, rng: RngStream) -> LogLikEstimate:
    """
    mean + sqrt(variance) * zeta, zeta ~ N(0, 1)

    분산이 0이어도 zeta 하나를 소비한다 (스트림 정렬 유지).
    """
    mean, variance = model.predict(theta)
    zeta = float(rng.standard_normal())
    return LogLikEstimate(mean + math.sqrt(variance) * zeta, LikelihoodSource.GP_DRAW)


def gp_holdout_diagnostics(model: GpModel, holdout: TrainingDataset) -> Dict[str, Any]:
    """보류 집합 RMSE와 95% 예측구간 적중률"""
    if len(holdout) == 0:
        return {'rmse': None, 'coverage_95': None, 'n_holdout': 0}
    means, variances = model.predict_batch(holdout.proposals)
    err = holdout.logliks - means
    inside = np.abs(err) <= 1.96 * np.sqrt(variances)
    return {
        'rmse': float(np.sqrt(np.mean(err ** 2))),
        'coverage_95': float(np.mean(inside)),
        'n_holdout': int(len(holdout)),
    }
