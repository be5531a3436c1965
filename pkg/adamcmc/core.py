"""
공통 수치 타입, 재현 가능한 RNG 스트림, 로그 도메인 연산, 체인 진단

모든 우도 비율은 로그 우도의 차이로만 계산한다 (선형 도메인으로 exp 하지 않음).
"""

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Any, Dict, List, Optional, Sequence
import logging
import math

import numpy as np
import pandas as pd
from scipy.special import logsumexp

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# 예외 계층
# ---------------------------------------------------------------------------

class AdaMcmcError(Exception):
    """패키지 공통 기본 예외"""


class InvalidInputError(AdaMcmcError, ValueError):
    """잘못된 인자 (빈 벡터, NaN 비율, 잘못된 prior 스펙 등)"""


class SimulationDivergedError(AdaMcmcError):
    """SDE 경로가 유한하지 않은 값으로 발산"""

    def __init__(self, message: str, time_index: Optional[int] = None):
        super().__init__(message)
        self.time_index = time_index


class FilterFailureError(AdaMcmcError):
    """모든 파티클 가중치가 -inf"""


class GpFitError(AdaMcmcError):
    """jitter 사다리를 모두 시도해도 커널 행렬이 양정치가 아님"""


class SelectorFitError(AdaMcmcError):
    """케이스 선택 모델 학습 불가 (빈 그룹 등)"""


class PipelineError(AdaMcmcError):
    """파이프라인 선행 산출물 누락, 경로 충돌, 비교 불가능한 설정"""


# ---------------------------------------------------------------------------
# 도메인 타입
# ---------------------------------------------------------------------------

class LikelihoodSource(str, Enum):
    PARTICLE_FILTER = "particle_filter"
    GP_DRAW = "gp_draw"
    EXACT = "exact"


@dataclass(frozen=True)
class ParameterPoint:
    """로그 스케일 모델 파라미터 벡터 (샘플링 좌표)"""
    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float).reshape(-1)
        if arr.size == 0:
            raise InvalidInputError("ParameterPoint needs at least one coordinate")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError(f"ParameterPoint entries must be finite, got {arr}")
        arr.setflags(write=False)
        object.__setattr__(self, 'values', arr)

    @property
    def dim(self) -> int:
        return int(self.values.size)

    def __len__(self) -> int:
        return self.dim

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ParameterPoint):
            return NotImplemented
        return bool(np.array_equal(self.values, other.values))

    def __hash__(self) -> int:
        return hash(self.values.tobytes())


@dataclass(frozen=True)
class LogLikEstimate:
    """
    출처가 태그된 로그 우도 값

    Attributes:
        value: 자연로그 밀도 (유한값 또는 -inf)
        source: 파티클 필터 추정 / GP 드로우 / 정확한 값
        failed: 파티클 필터 붕괴(모든 가중치 -inf) 여부
    """
    value: float
    source: LikelihoodSource
    failed: bool = False

    def __post_init__(self):
        v = float(self.value)
        if math.isnan(v) or v == math.inf:
            raise InvalidInputError(f"log-likelihood must be finite or -inf, got {v}")
        object.__setattr__(self, 'value', v)
        object.__setattr__(self, 'source', LikelihoodSource(self.source))

    @property
    def is_impossible(self) -> bool:
        return self.value == -math.inf


class StreamPurpose(IntEnum):
    """용도별로 분리된 RNG 스트림"""
    PROPOSAL = 0
    PARTICLE_FILTER = 1
    GP_DRAW = 2
    STAGE_DECISION = 3
    SECOND_STAGE = 4
    CASE_SELECTION = 5
    BRANCH_SELECTION = 6


class RngStream:
    """
    (seed, stream_id)로 결정되는 단일 소유 난수 스트림

    같은 (seed, stream_id)와 같은 드로우 순서는 항상 같은 출력을 낸다.
    서로 다른 stream_id는 SeedSequence spawn_key로 분리되어 통계적으로 독립.
    """

    def __init__(self, seed: int, stream_id: int = 0,
                 _seed_sequence: Optional[np.random.SeedSequence] = None):
        if seed < 0 or seed >= 2 ** 64:
            raise InvalidInputError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        if _seed_sequence is None:
            _seed_sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self._seed_sequence = _seed_sequence
        self.generator = np.random.Generator(np.random.PCG64(_seed_sequence))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def uniform(self) -> float:
        return float(self.generator.random())

    def standard_normal(self, size: Any = None) -> Any:
        return self.generator.standard_normal(size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size: Any = None) -> Any:
        return self.generator.normal(loc, scale, size)

    def spawn(self, n: int) -> List['RngStream']:
        """독립 자식 스트림 n개 (호출 순서에 대해 결정적)"""
        children = self._seed_sequence.spawn(n)
        return [RngStream(self.seed, self.stream_id, _seed_sequence=child) for child in children]


class StreamFamily:
    """한 체인이 사용하는 용도별 스트림 묶음"""

    def __init__(self, seed: int, chain_id: int = 0):
        self.seed = int(seed)
        self.chain_id = int(chain_id)
        self._streams: Dict[StreamPurpose, RngStream] = {}

    def stream(self, purpose: StreamPurpose) -> RngStream:
        purpose = StreamPurpose(purpose)
        if purpose not in self._streams:
            stream_id = self.chain_id * len(StreamPurpose) + int(purpose)
            self._streams[purpose] = RngStream(self.seed, stream_id)
        return self._streams[purpose]

    @property
    def proposal(self) -> RngStream:
        return self.stream(StreamPurpose.PROPOSAL)

    @property
    def particle_filter(self) -> RngStream:
        return self.stream(StreamPurpose.PARTICLE_FILTER)

    @property
    def gp_draw(self) -> RngStream:
        return self.stream(StreamPurpose.GP_DRAW)

    @property
    def stage_decision(self) -> RngStream:
        return self.stream(StreamPurpose.STAGE_DECISION)

    @property
    def second_stage(self) -> RngStream:
        return self.stream(StreamPurpose.SECOND_STAGE)

    @property
    def case_selection(self) -> RngStream:
        return self.stream(StreamPurpose.CASE_SELECTION)

    @property
    def branch_selection(self) -> RngStream:
        return self.stream(StreamPurpose.BRANCH_SELECTION)


@dataclass
class ChainEvent:
    """반복 1회의 이벤트 기록"""
    stage1_passed: bool = False
    case: Optional[int] = None
    pf_calls: int = 0
    accepted: bool = False
    used_mh_branch: bool = False
    early_accept: bool = False

    def __post_init__(self):
        if self.pf_calls < 0:
            raise InvalidInputError("pf_calls must be >= 0")
        if self.case is not None and self.case not in (1, 2, 3, 4):
            raise InvalidInputError(f"case must be 1-4, got {self.case}")


@dataclass
class ChainResult:
    """
    샘플링 결과

    Attributes:
        algorithm: 'pmcmc' | 'mcwm' | 'da' | 'ada'
        samples: (R, d) 체인 (반복 r의 상태 theta^r)
        loglik_values: 반복별 보유 상태의 로그 우도
        loglik_sources: 반복별 로그 우도 출처
        events: 반복별 ChainEvent
        wall_time: 초 단위 실행 시간
        parameter_names: 좌표 이름
        burnin: 요약에서 제외할 앞부분 반복 수
        proposals: (R, d) 반복별 제안값 (리포트/학습 데이터용)
        final_covariance: 적응 종료 시점의 제안 공분산 (pmcmc/mcwm)
    """
    algorithm: str
    samples: np.ndarray
    loglik_values: np.ndarray
    loglik_sources: List[LikelihoodSource]
    events: List[ChainEvent]
    wall_time: float
    parameter_names: List[str]
    burnin: int = 0
    proposals: Optional[np.ndarray] = None
    final_covariance: Optional[np.ndarray] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        self.loglik_values = np.asarray(self.loglik_values, dtype=float)
        n = self.samples.shape[0]
        if len(self.events) != n or self.loglik_values.shape[0] != n or len(self.loglik_sources) != n:
            raise InvalidInputError("ChainResult arrays must all have one entry per iteration")

    @property
    def n_iterations(self) -> int:
        return int(self.samples.shape[0])

    @property
    def points(self) -> List[ParameterPoint]:
        return [ParameterPoint(row) for row in self.samples]

    @property
    def logliks(self) -> List[LogLikEstimate]:
        return [LogLikEstimate(v, s) for v, s in zip(self.loglik_values, self.loglik_sources)]

    def post_burnin(self) -> np.ndarray:
        return self.samples[self.burnin:]

    def to_frame(self) -> pd.DataFrame:
        """체인 CSV용 DataFrame (파라미터 좌표, loglik, 이벤트 컬럼)"""
        df = pd.DataFrame(self.samples, columns=self.parameter_names)
        df.insert(0, 'iteration', np.arange(1, self.n_iterations + 1))
        df['loglik'] = self.loglik_values
        df['loglik_source'] = [s.value for s in self.loglik_sources]
        df['stage1_passed'] = [e.stage1_passed for e in self.events]
        df['case'] = pd.array([e.case for e in self.events], dtype='Int64')
        df['pf_calls'] = [e.pf_calls for e in self.events]
        df['accepted'] = [e.accepted for e in self.events]
        df['early_accept'] = [e.early_accept for e in self.events]
        df['branch'] = [_branch_label(self.algorithm, e) for e in self.events]
        df['burnin'] = df['iteration'] <= self.burnin
        return df

    @classmethod
    def from_frame(cls, df: pd.DataFrame, algorithm: str, parameter_names: Sequence[str],
                   wall_time: float = 0.0) -> 'ChainResult':
        names = list(parameter_names)
        events = []
        for row in df.itertuples(index=False):
            row = row._asdict()
            case = row.get('case')
            events.append(ChainEvent(
                stage1_passed=bool(row['stage1_passed']),
                case=None if pd.isna(case) else int(case),
                pf_calls=int(row['pf_calls']),
                accepted=bool(row['accepted']),
                used_mh_branch=row['branch'] == 'mh',
                early_accept=bool(row.get('early_accept', False)),
            ))
        burnin = int(df['burnin'].sum()) if 'burnin' in df.columns else 0
        return cls(
            algorithm=algorithm,
            samples=df[names].to_numpy(dtype=float),
            loglik_values=df['loglik'].to_numpy(dtype=float),
            loglik_sources=[LikelihoodSource(s) for s in df['loglik_source']],
            events=events,
            wall_time=wall_time,
            parameter_names=names,
            burnin=burnin,
        )


def _branch_label(algorithm: str, event: ChainEvent) -> str:
    if algorithm in ('da', 'ada'):
        return 'mh' if event.used_mh_branch else 'da'
    return 'plain'


# ---------------------------------------------------------------------------
# 로그 도메인 연산 / 진단
# ---------------------------------------------------------------------------

def log_mean_exp(values: Sequence[float]) -> float:
    """
    log((1/R) * sum(exp(v_i))) 를 max-shift로 안정적으로 계산

    Args:
        values: 로그 값 벡터 (-inf 허용)

    Returns:
        로그 평균; 모든 값이 -inf이면 -inf
    """
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise InvalidInputError("log_mean_exp needs a nonempty vector")
    if np.any(np.isnan(arr)):
        raise InvalidInputError("log_mean_exp got NaN input")
    top = arr.max()
    if top == -np.inf:
        return -math.inf
    if top == np.inf:
        return math.inf
    return float(logsumexp(arr) - math.log(arr.size))


def effective_sample_size(chain: Sequence[float]) -> float:
    """
    초기 양수 수열(initial positive sequence) 자기상관 합으로 ESS 계산

    Args:
        chain: 길이 >= 10인 1차원 체인

    Returns:
        ESS in (0, n]; 상수 체인은 1
    """
    x = np.asarray(chain, dtype=float).reshape(-1)
    n = x.size
    if n < 10:
        raise InvalidInputError(f"effective_sample_size needs at least 10 draws, got {n}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("chain contains non-finite values")
    if np.ptp(x) == 0:
        return 1.0

    centered = x - x.mean()
    # FFT 기반 자기공분산 (zero padding으로 순환 상관 제거)
    size = 1 << int(2 * n - 1).bit_length()
    spectrum = np.fft.rfft(centered, size)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), size)[:n] / n
    rho = acov / acov[0]

    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair

    if tau <= 0:
        return float(n)
    return float(min(n, n / tau))


def mh_accept(log_ratio: float, u: float) -> bool:
    """
    로그 도메인 Metropolis-Hastings 판정 (엔진의 모든 수락 판정이 이 함수를 거침)

    log_ratio >= 0 이면 항상 수락, 그 외에는 log(u) < log_ratio 일 때 수락.

    Args:
        log_ratio: 로그 수락 비율
        u: [0, 1] 균등 난수

    Returns:
        수락 여부
    """
    log_ratio = float(log_ratio)
    if math.isnan(log_ratio):
        raise InvalidInputError("mh_accept got a NaN log-ratio")
    if not 0.0 <= u <= 1.0:
        raise InvalidInputError(f"uniform draw must lie in [0, 1], got {u}")
    if log_ratio >= 0.0:
        return True
    if u == 0.0:
        return log_ratio > -math.inf
    return math.log(u) < log_ratio
