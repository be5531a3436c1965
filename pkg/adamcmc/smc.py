"""
부트스트랩 파티클 필터: 비편향 우도 추정 L_u(theta)와 복제 평균
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional
import logging
import math

import numpy as np

from adamcmc.core import (
    FilterFailureError,
    InvalidInputError,
    LikelihoodSource,
    LogLikEstimate,
    RngStream,
    log_mean_exp,
)
from adamcmc.models import StateSpaceModel, TimeSeries

logger = logging.getLogger(__name__)


class ResamplingScheme(str, Enum):
    MULTINOMIAL = "multinomial"
    SYSTEMATIC = "systematic"


@dataclass(frozen=True)
class PfConfig:
    """
    Attributes:
        n_particles: 필터당 파티클 수 N
        n_replicates: 평균낼 독립 필터 수 R
        resampling: 리샘플링 방식 (기본 systematic)
        euler_substeps: 관측 간 Euler 스텝 수 (None이면 모델 자체 설정, 이산 시간 모델은 무시)
    """
    n_particles: int = 1000
    n_replicates: int = 1
    resampling: ResamplingScheme = ResamplingScheme.SYSTEMATIC
    euler_substeps: Optional[int] = None

    def __post_init__(self):
        if self.n_particles < 1:
            raise InvalidInputError(f"n_particles must be >= 1, got {self.n_particles}")
        if self.n_replicates < 1:
            raise InvalidInputError(f"n_replicates must be >= 1, got {self.n_replicates}")
        if self.euler_substeps is not None and self.euler_substeps < 1:
            raise InvalidInputError(f"euler_substeps must be >= 1, got {self.euler_substeps}")
        object.__setattr__(self, 'resampling', ResamplingScheme(self.resampling))


@dataclass
class ParticleSystem:
    """시점 t의 파티클과 로그 가중치"""
    particles: np.ndarray
    log_weights: np.ndarray
    t: int = 0

    def __post_init__(self):
        self.particles = np.asarray(self.particles, dtype=float)
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if self.particles.size < 1:
            raise InvalidInputError("ParticleSystem needs N >= 1")
        if self.particles.shape != self.log_weights.shape:
            raise InvalidInputError("particles and log_weights must have equal shapes")

    @property
    def n(self) -> int:
        return int(self.particles.size)


def _normalized_weights(log_weights: np.ndarray) -> np.ndarray:
    top = np.max(log_weights)
    if not np.isfinite(top):
        raise FilterFailureError("cannot resample: all particle weights are -inf")
    w = np.exp(log_weights - top)
    return w / w.sum()


def resample_indices(log_weights: np.ndarray, scheme: ResamplingScheme,
                     rng: RngStream) -> np.ndarray:
    """exp(log_weights)에 비례하는 조상 인덱스 N개"""
    w = _normalized_weights(np.asarray(log_weights, dtype=float))
    n = w.size
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    if ResamplingScheme(scheme) is ResamplingScheme.SYSTEMATIC:
        positions = (rng.uniform() + np.arange(n)) / n
    else:
        positions = rng.generator.random(n)
    return np.searchsorted(cdf, positions, side='right').clip(max=n - 1)


def resample(system: ParticleSystem, scheme: ResamplingScheme, rng: RngStream) -> ParticleSystem:
    """리샘플링 후 균등 가중치 ParticleSystem 반환"""
    idx = resample_indices(system.log_weights, scheme, rng)
    n = system.n
    return ParticleSystem(system.particles[idx], np.full(n, -math.log(n)), system.t)


def bootstrap_loglik(model: StateSpaceModel, theta, data: TimeSeries, cfg: PfConfig,
                     rng: RngStream) -> LogLikEstimate:
    """
    부트스트랩 필터로 log p_hat(z | theta) = sum_t log((1/N) sum_n w_t^n) 계산

    매 가중치 갱신 후 리샘플링한다. 어떤 시점에서 모든 가중치가 -inf이면
    예외 대신 failed 플래그가 붙은 -inf 추정치를 반환.
    """
    if len(data) == 0:
        raise InvalidInputError("bootstrap_loglik needs nonempty data")
    if cfg.euler_substeps is not None:
        model = model.with_substeps(cfg.euler_substeps)
    n = cfg.n_particles
    intervals = data.intervals()
    prev = model.initial_particles(theta, n, data)
    total = 0.0
    for t in range(len(data)):
        current = model.propagate(prev, theta, float(intervals[t]), rng)
        system = ParticleSystem(current, model.log_obs_weights(t, current, prev, theta, data), t)
        increment = log_mean_exp(system.log_weights)
        if increment == -math.inf:
            point = np.asarray(getattr(theta, 'values', theta))
            logger.warning(f"particle filter collapsed at t={t + 1} for theta={point}")
            return LogLikEstimate(-math.inf, LikelihoodSource.PARTICLE_FILTER, failed=True)
        total += increment
        if t < len(data) - 1:
            prev = resample(system, cfg.resampling, rng).particles
    return LogLikEstimate(total, LikelihoodSource.PARTICLE_FILTER)


def averaged_loglik(model: StateSpaceModel, theta, data: TimeSeries, cfg: PfConfig,
                    rng: RngStream, workers: int = 1) -> LogLikEstimate:
    """
    독립 필터 R개의 우도를 선형 도메인에서 평균 (log_mean_exp) - 비편향 유지, 분산 감소

    Args:
        workers: 복제 필터를 병렬 실행할 스레드 수 (결과는 복제 인덱스 순서로 결합)
    """
    if cfg.n_replicates == 1:
        return bootstrap_loglik(model, theta, data, cfg, rng)

    streams = rng.spawn(cfg.n_replicates)

    def run(stream: RngStream) -> LogLikEstimate:
        return bootstrap_loglik(model, theta, data, cfg, stream)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            estimates: List[LogLikEstimate] = list(pool.map(run, streams))
    else:
        estimates = [run(s) for s in streams]

    value = log_mean_exp([e.value for e in estimates])
    return LogLikEstimate(value, LikelihoodSource.PARTICLE_FILTER,
                          failed=all(e.failed for e in estimates))


class ParticleLikelihood:
    """
    샘플러가 호출하는 우도 추정기: theta -> averaged_loglik

    Attributes:
        calls: 누적 필터(복제 평균 1회 = 1) 호출 수
        failures: -inf(failed) 추정치를 돌려준 호출 수
    """

    def __init__(self, model: StateSpaceModel, data: TimeSeries, cfg: PfConfig,
                 workers: int = 1):
        self.model = model
        self.data = data
        self.cfg = cfg
        self.workers = max(1, int(workers))
        self.calls = 0
        self.failures = 0

    def __call__(self, theta, rng: RngStream) -> LogLikEstimate:
        self.calls += 1
        estimate = averaged_loglik(self.model, theta, self.data, self.cfg, rng, workers=self.workers)
        if estimate.failed:
            self.failures += 1
        return estimate

    def collapse_warning(self) -> Optional[str]:
        """필터 붕괴가 있었으면 리포트용 경고 문구"""
        if not self.failures:
            return None
        return (f"particle filter collapsed in {self.failures} of {self.calls} likelihood calls "
                f"(estimate -inf, proposal rejected)")
