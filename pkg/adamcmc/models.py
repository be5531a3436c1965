"""
상태공간 모델: Ricker, DWP-SDE (double-well potential + OU 오차), 선형-가우시안 SSM, 1차원 토이 타깃

전이 커널 / 관측 밀도 / prior를 제공하며, 파티클 배열에 대해 벡터화되어 있다.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union
import logging
import math

import numpy as np
import pandas as pd
from scipy.special import gammaln, xlogy

from adamcmc.core import (
    InvalidInputError,
    LikelihoodSource,
    LogLikEstimate,
    ParameterPoint,
    RngStream,
    SimulationDivergedError,
)

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _as_values(theta: Union[ParameterPoint, Sequence[float], np.ndarray]) -> np.ndarray:
    if isinstance(theta, ParameterPoint):
        return theta.values
    return np.asarray(theta, dtype=float).reshape(-1)


def _check_logs(name: str, values: Dict[str, float]) -> None:
    # 시뮬레이션에서 잡음 0 (log = -inf)은 허용, NaN/+inf는 거부
    for key, val in values.items():
        if math.isnan(val) or val == math.inf:
            raise InvalidInputError(f"{name}.{key} must be finite (or -inf for zero noise), got {val}")


# ---------------------------------------------------------------------------
# 파라미터 / 데이터 타입
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RickerParams:
    """theta = [log r, log phi, log sigma]"""
    log_r: float
    log_phi: float
    log_sigma: float

    def __post_init__(self):
        _check_logs('RickerParams', {'log_r': self.log_r, 'log_phi': self.log_phi,
                                     'log_sigma': self.log_sigma})

    @property
    def r(self) -> float:
        return math.exp(self.log_r)

    @property
    def phi(self) -> float:
        return math.exp(self.log_phi)

    @property
    def sigma(self) -> float:
        return math.exp(self.log_sigma)

    @classmethod
    def from_theta(cls, theta) -> 'RickerParams':
        v = _as_values(theta)
        if v.size != 3:
            raise InvalidInputError(f"Ricker theta has 3 coordinates, got {v.size}")
        return cls(float(v[0]), float(v[1]), float(v[2]))

    def to_theta(self) -> ParameterPoint:
        return ParameterPoint([self.log_r, self.log_phi, self.log_sigma])


DWP_PARAMETER_NAMES = ['log_kappa', 'log_gamma', 'log_c', 'log_d', 'log_p1', 'log_p2', 'log_sigma']


@dataclass(frozen=True)
class DwpParams:
    """
    theta = [log kappa, log gamma, log c, log d, log p1, log p2, log sigma]
    A, g는 추론 중 고정되는 상수
    """
    log_kappa: float
    log_gamma: float
    log_c: float
    log_d: float
    log_p1: float
    log_p2: float
    log_sigma: float
    A: float = -0.0025
    g: float = 0.0

    def __post_init__(self):
        _check_logs('DwpParams', {k: getattr(self, k) for k in DWP_PARAMETER_NAMES})
        if not (math.isfinite(self.A) and math.isfinite(self.g)):
            raise InvalidInputError("DwpParams.A and DwpParams.g must be finite")

    kappa = property(lambda self: math.exp(self.log_kappa))
    gamma = property(lambda self: math.exp(self.log_gamma))
    c = property(lambda self: math.exp(self.log_c))
    d = property(lambda self: math.exp(self.log_d))
    p1 = property(lambda self: math.exp(self.log_p1))
    p2 = property(lambda self: math.exp(self.log_p2))
    sigma = property(lambda self: math.exp(self.log_sigma))

    @classmethod
    def from_theta(cls, theta, A: float = -0.0025, g: float = 0.0) -> 'DwpParams':
        v = _as_values(theta)
        if v.size != 7:
            raise InvalidInputError(f"DWP theta has 7 coordinates, got {v.size}")
        return cls(*[float(x) for x in v], A=A, g=g)

    @classmethod
    def from_natural(cls, kappa: float, gamma: float, c: float, d: float, p1: float,
                     p2: float, sigma: float, A: float = -0.0025, g: float = 0.0) -> 'DwpParams':
        """자연 스케일 값으로 생성 (0은 log = -inf 로 허용)"""
        def lg(v: float) -> float:
            return math.log(v) if v > 0 else -math.inf
        return cls(lg(kappa), lg(gamma), lg(c), lg(d), lg(p1), lg(p2), lg(sigma), A=A, g=g)

    def to_theta(self) -> ParameterPoint:
        return ParameterPoint([getattr(self, k) for k in DWP_PARAMETER_NAMES])


@dataclass
class TimeSeries:
    """
    관측 시계열

    Attributes:
        times: 순증가 시점
        values: 관측값 (y_t 또는 z_t)
        x0: 알려진 초기 잠재 상태
    """
    times: np.ndarray
    values: np.ndarray
    x0: float = 0.0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.times.size != self.values.size:
            raise InvalidInputError("times and values must have equal lengths")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise InvalidInputError("times must be strictly increasing")

    def __len__(self) -> int:
        return int(self.values.size)

    def intervals(self) -> np.ndarray:
        """각 관측 직전의 시간 간격 (첫 간격은 0 시점 기준)"""
        return np.diff(np.concatenate([[0.0], self.times]))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'time': self.times, 'value': self.values})

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format='%.17g')

    @classmethod
    def from_csv(cls, path: Union[str, Path], x0: float = 0.0) -> 'TimeSeries':
        df = pd.read_csv(path)
        missing = {'time', 'value'} - set(df.columns)
        if missing:
            raise InvalidInputError(f"{path}: CSV needs columns time,value (missing {sorted(missing)})")
        return cls(df['time'].to_numpy(), df['value'].to_numpy(), x0=float(x0))


# ---------------------------------------------------------------------------
# Ricker
# ---------------------------------------------------------------------------

def ricker_propagate(x: ArrayLike, params: RickerParams, rng: Optional[RngStream] = None,
                     noise: Optional[ArrayLike] = None) -> ArrayLike:
    """
    x_{t+1} = r * x_t * exp(-x_t + eps), eps ~ N(0, sigma^2)

    Args:
        x: 현재 개체수 (스칼라 또는 파티클 배열, >= 0)
        params: Ricker 파라미터
        rng: 잡음 스트림 (noise가 없을 때 필요)
        noise: 표준정규 잡음을 직접 지정 (0이면 결정적 스텝)
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise InvalidInputError("Ricker state must be finite and >= 0")
    if noise is None:
        if rng is None:
            raise InvalidInputError("ricker_propagate needs an rng or explicit noise")
        noise = rng.standard_normal(arr.shape if arr.ndim else None)
    eps = params.sigma * np.asarray(noise, dtype=float)
    out = params.r * arr * np.exp(-arr + eps)
    return float(out) if np.ndim(out) == 0 else out


def ricker_obs_logpdf(y: ArrayLike, x: ArrayLike, params: RickerParams) -> ArrayLike:
    """
    Poisson(phi * x) 로그 pmf; x = 0 이면 y = 0 에서 0, 그 외 -inf
    """
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr < 0) or np.any(y_arr != np.floor(y_arr)):
        raise InvalidInputError("Ricker observations must be nonnegative integers")
    lam = params.phi * np.asarray(x, dtype=float)
    out = xlogy(y_arr, lam) - lam - gammaln(y_arr + 1.0)
    return float(out) if np.ndim(out) == 0 else out


def ricker_simulate(params: RickerParams, T: int, x0: float, rng: RngStream) -> TimeSeries:
    """정수 시점 1..T 에서 Ricker 관측 시계열 생성"""
    if T < 1:
        raise InvalidInputError(f"T must be >= 1, got {T}")
    x = float(x0)
    ys = np.empty(T)
    for t in range(T):
        x = ricker_propagate(x, params, rng)
        ys[t] = rng.generator.poisson(params.phi * x)
    return TimeSeries(np.arange(1, T + 1, dtype=float), ys, x0=float(x0))


# ---------------------------------------------------------------------------
# DWP-SDE
# ---------------------------------------------------------------------------

def dwp_potential(x: ArrayLike, params: DwpParams) -> ArrayLike:
    """V(x) = 1/2 |1/2 |x - c|^p1 - d + g x|^p2 + 1/2 A x^2"""
    x = np.asarray(x, dtype=float)
    u = 0.5 * np.abs(x - params.c) ** params.p1 - params.d + params.g * x
    out = 0.5 * np.abs(u) ** params.p2 + 0.5 * params.A * x ** 2
    return float(out) if np.ndim(out) == 0 else out


def dwp_potential_grad(x: ArrayLike, params: DwpParams) -> ArrayLike:
    """
    dV/dx; 꺾이는 점(x = c 또는 u = 0)에서 발산하는 항의 subgradient는 0
    """
    x = np.asarray(x, dtype=float)
    p1, p2 = params.p1, params.p2
    dx = x - params.c
    adx = np.abs(dx)
    u = 0.5 * adx ** p1 - params.d + params.g * x
    au = np.abs(u)
    with np.errstate(divide='ignore', invalid='ignore'):
        inner = np.where(adx > 0, 0.5 * p1 * adx ** (p1 - 1.0) * np.sign(dx), 0.0)
        outer = np.where(au > 0, 0.5 * p2 * au ** (p2 - 1.0) * np.sign(u), 0.0)
    out = outer * (inner + params.g) + params.A * x
    return float(out) if np.ndim(out) == 0 else out


def dwp_em_step(x: ArrayLike, params: DwpParams, dt: float, rng: Optional[RngStream] = None,
                noise: Optional[ArrayLike] = None, check_finite: bool = True) -> ArrayLike:
    """
    Euler-Maruyama 한 스텝: x - grad V(x) dt + sigma * eps, eps ~ N(0, dt)

    Args:
        check_finite: True이면 발산 시 SimulationDivergedError, False이면 NaN 그대로 반환
    """
    if dt <= 0:
        raise InvalidInputError(f"dt must be > 0, got {dt}")
    x = np.asarray(x, dtype=float)
    if noise is None:
        if rng is None:
            raise InvalidInputError("dwp_em_step needs an rng or explicit noise")
        noise = rng.standard_normal(x.shape if x.ndim else None)
    with np.errstate(over='ignore', invalid='ignore'):
        out = x - dwp_potential_grad(x, params) * dt + params.sigma * math.sqrt(dt) * np.asarray(noise)
    if check_finite and not np.all(np.isfinite(out)):
        raise SimulationDivergedError("Euler-Maruyama step produced a non-finite state")
    return float(out) if np.ndim(out) == 0 else out


def ou_transition_sample(y: ArrayLike, kappa: float, gamma: float, dT: float,
                         rng: Optional[RngStream] = None,
                         noise: Optional[ArrayLike] = None) -> ArrayLike:
    """OU 정확 전이: N(y e^{-kappa dT}, gamma^2 (1 - e^{-2 kappa dT}))"""
    if kappa <= 0 or gamma < 0 or dT <= 0:
        raise InvalidInputError("OU transition needs kappa > 0, gamma >= 0, dT > 0")
    y = np.asarray(y, dtype=float)
    if noise is None:
        if rng is None:
            raise InvalidInputError("ou_transition_sample needs an rng or explicit noise")
        noise = rng.standard_normal(y.shape if y.ndim else None)
    decay = math.exp(-kappa * dT)
    sd = gamma * math.sqrt(-math.expm1(-2.0 * kappa * dT))
    out = y * decay + sd * np.asarray(noise)
    return float(out) if np.ndim(out) == 0 else out


def dwp_simulate(params: DwpParams, T: int, dT: float, n_substeps: int, x0: float,
                 rng: RngStream) -> TimeSeries:
    """
    z_t = x_t + y_t 를 시점 dT, 2dT, ..., T dT 에서 생성

    x는 n_substeps 개의 Euler 스텝, y는 정확한 OU 전이 (y_1은 정상분포 N(0, gamma^2)).
    """
    if T < 1:
        raise InvalidInputError(f"T must be >= 1, got {T}")
    if n_substeps < 1:
        raise InvalidInputError(f"n_substeps must be >= 1, got {n_substeps}")
    dt = dT / n_substeps
    x = float(x0)
    y = 0.0
    z = np.empty(T)
    for t in range(T):
        for _ in range(n_substeps):
            try:
                x = dwp_em_step(x, params, dt, rng)
            except SimulationDivergedError as e:
                raise SimulationDivergedError(f"DWP path diverged at time index {t + 1}",
                                              time_index=t + 1) from e
        if t == 0:
            y = params.gamma * float(rng.standard_normal())
        else:
            y = ou_transition_sample(y, params.kappa, params.gamma, dT, rng) if params.gamma > 0 else 0.0
        z[t] = x + y
    times = dT * np.arange(1, T + 1, dtype=float)
    return TimeSeries(times, z, x0=float(x0))


def dwp_obs_log_weight(z_t: float, z_prev: float, x_t: ArrayLike, x_prev: ArrayLike,
                       params: DwpParams, dT: float, is_first: bool) -> ArrayLike:
    """
    OU 관측 채널의 로그 가중치

    t = 1: log[(1/gamma) phi((z_1 - x_1)/gamma)]
    t >= 2: log[(1/s) phi((z_t - x_t - e^{-kappa dT}(z_{t-1} - x_{t-1}))/s)],
            s = gamma sqrt(1 - e^{-2 kappa dT})
    """
    if not math.isfinite(params.log_gamma):
        raise InvalidInputError("observation weight needs gamma > 0")
    x_t = np.asarray(x_t, dtype=float)
    if is_first:
        scale = params.gamma
        resid = z_t - x_t
    else:
        scale = params.gamma * math.sqrt(-math.expm1(-2.0 * params.kappa * dT))
        resid = z_t - x_t - math.exp(-params.kappa * dT) * (z_prev - np.asarray(x_prev, dtype=float))
    with np.errstate(invalid='ignore'):
        out = -0.5 * (resid / scale) ** 2 - math.log(scale) - LOG_SQRT_2PI
    out = np.where(np.isfinite(out), out, -np.inf)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Prior
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PriorComponent:
    """좌표별 prior: uniform(a, b) | normal(mean, sd) | flat (generic target 모드)"""
    kind: str
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ('uniform', 'normal', 'flat'):
            raise InvalidInputError(f"unknown prior kind '{self.kind}'")
        if self.kind == 'uniform' and not self.a < self.b:
            raise InvalidInputError(f"uniform prior needs a < b, got ({self.a}, {self.b})")
        if self.kind == 'normal' and not self.b > 0:
            raise InvalidInputError(f"normal prior needs sd > 0, got {self.b}")

    def logpdf(self, value: float) -> float:
        if self.kind == 'flat':
            return 0.0
        if self.kind == 'uniform':
            if self.a <= value <= self.b:
                return -math.log(self.b - self.a)
            return -math.inf
        z = (value - self.a) / self.b
        return -0.5 * z * z - math.log(self.b) - LOG_SQRT_2PI

    def to_dict(self) -> Dict[str, Any]:
        if self.kind == 'uniform':
            return {'kind': 'uniform', 'low': self.a, 'high': self.b}
        if self.kind == 'normal':
            return {'kind': 'normal', 'mean': self.a, 'sd': self.b}
        return {'kind': 'flat'}


@dataclass(frozen=True)
class PriorSpec:
    components: tuple

    def __len__(self) -> int:
        return len(self.components)

    @classmethod
    def from_dicts(cls, entries: Sequence[Dict[str, Any]]) -> 'PriorSpec':
        """[{'kind': 'uniform', 'low': 0, 'high': 10}, {'kind': 'normal', 'mean': -0.7, 'sd': 0.8}, ...]"""
        comps = []
        for i, entry in enumerate(entries):
            if not isinstance(entry, dict) or 'kind' not in entry:
                raise InvalidInputError(f"prior entry {i} is malformed: {entry!r}")
            kind = entry['kind']
            try:
                if kind == 'uniform':
                    comps.append(PriorComponent('uniform', float(entry['low']), float(entry['high'])))
                elif kind == 'normal':
                    comps.append(PriorComponent('normal', float(entry['mean']), float(entry['sd'])))
                elif kind == 'flat':
                    comps.append(PriorComponent('flat'))
                else:
                    raise InvalidInputError(f"prior entry {i}: unknown kind '{kind}'")
            except KeyError as e:
                raise InvalidInputError(f"prior entry {i} ({kind}) is missing field {e}") from e
        return cls(tuple(comps))

    def to_dicts(self) -> List[Dict[str, Any]]:
        return [c.to_dict() for c in self.components]


def eval_log_prior(theta, prior_spec: PriorSpec) -> float:
    """좌표별 로그 prior 밀도의 합 (uniform 지지 밖은 -inf)"""
    values = _as_values(theta)
    if not isinstance(prior_spec, PriorSpec):
        raise InvalidInputError("prior_spec must be a PriorSpec")
    if len(prior_spec) != values.size:
        raise InvalidInputError(
            f"prior has {len(prior_spec)} components but theta has {values.size} coordinates")
    total = 0.0
    for comp, v in zip(prior_spec.components, values):
        total += comp.logpdf(float(v))
        if total == -math.inf:
            return -math.inf
    return total


# ---------------------------------------------------------------------------
# 파티클 필터가 소비하는 상태공간 모델 인터페이스
# ---------------------------------------------------------------------------

class StateSpaceModel(ABC):
    """부트스트랩 필터용 모델: 전이 샘플링 + 관측 로그 가중치"""

    name: str = 'model'
    parameter_names: List[str] = []

    @property
    def dim(self) -> int:
        return len(self.parameter_names)

    def initial_particles(self, theta, n: int, data: TimeSeries) -> np.ndarray:
        """x0가 알려진 상수이므로 모든 파티클이 x0에서 시작"""
        return np.full(n, float(data.x0))

    @abstractmethod
    def propagate(self, particles: np.ndarray, theta, dt: float, rng: RngStream) -> np.ndarray:
        """파티클을 다음 관측 시점까지 전파 (발산 파티클은 NaN)"""

    @abstractmethod
    def log_obs_weights(self, t: int, particles: np.ndarray, prev_particles: np.ndarray,
                        theta, data: TimeSeries) -> np.ndarray:
        """시점 인덱스 t (0부터)의 관측 로그 가중치"""

    @abstractmethod
    def simulate(self, theta, T: int, rng: RngStream, x0: Optional[float] = None,
                 dT: float = 1.0) -> TimeSeries:
        """theta로부터 데이터 생성"""

    @abstractmethod
    def default_prior(self) -> PriorSpec:
        ...

    def default_x0(self, theta) -> float:
        return 0.0

    def with_substeps(self, n_substeps: int) -> 'StateSpaceModel':
        """관측 간 Euler 스텝 수를 바꾼 모델 (이산 시간 모델은 자기 자신)"""
        return self


class RickerModel(StateSpaceModel):
    name = 'ricker'
    parameter_names = ['log_r', 'log_phi', 'log_sigma']
    true_theta = [3.80, 2.30, -1.20]

    def propagate(self, particles, theta, dt, rng):
        params = RickerParams.from_theta(theta)
        noise = rng.standard_normal(particles.shape)
        with np.errstate(over='ignore', invalid='ignore'):
            out = params.r * particles * np.exp(-particles + params.sigma * noise)
        return np.where(np.isfinite(out), out, np.nan)

    def log_obs_weights(self, t, particles, prev_particles, theta, data):
        params = RickerParams.from_theta(theta)
        ok = np.isfinite(particles)
        out = np.full(particles.shape, -np.inf)
        out[ok] = ricker_obs_logpdf(data.values[t], particles[ok], params)
        return out

    def simulate(self, theta, T, rng, x0=None, dT=1.0):
        x0 = 7.0 if x0 is None else x0
        return ricker_simulate(RickerParams.from_theta(theta), T, x0, rng)

    def default_prior(self) -> PriorSpec:
        return PriorSpec.from_dicts([
            {'kind': 'uniform', 'low': 0.0, 'high': 10.0},
            {'kind': 'uniform', 'low': 0.0, 'high': 4.0},
            {'kind': 'uniform', 'low': -10.0, 'high': 1.0},
        ])

    def default_x0(self, theta) -> float:
        return 7.0


class DwpSdeModel(StateSpaceModel):
    name = 'dwp-sde'
    parameter_names = list(DWP_PARAMETER_NAMES)
    true_theta = [0.74, 0.52, 3.10, 3.32, 0.45, -0.07, 0.68]

    def __init__(self, A: float = -0.0025, g: float = 0.0, n_substeps: int = 10):
        if n_substeps < 1:
            raise InvalidInputError(f"n_substeps must be >= 1, got {n_substeps}")
        self.A = float(A)
        self.g = float(g)
        self.n_substeps = int(n_substeps)

    def with_substeps(self, n_substeps: int) -> 'DwpSdeModel':
        if int(n_substeps) == self.n_substeps:
            return self
        return DwpSdeModel(A=self.A, g=self.g, n_substeps=n_substeps)

    def params(self, theta) -> DwpParams:
        return DwpParams.from_theta(theta, A=self.A, g=self.g)

    def propagate(self, particles, theta, dt, rng):
        params = self.params(theta)
        h = dt / self.n_substeps
        x = particles
        for _ in range(self.n_substeps):
            x = dwp_em_step(x, params, h, rng, check_finite=False)
        return np.where(np.isfinite(x), x, np.nan)

    def log_obs_weights(self, t, particles, prev_particles, theta, data):
        params = self.params(theta)
        dT = float(data.intervals()[t])
        z_prev = float(data.values[t - 1]) if t > 0 else 0.0
        out = dwp_obs_log_weight(float(data.values[t]), z_prev, particles, prev_particles,
                                 params, dT, is_first=(t == 0))
        return np.where(np.isfinite(particles), out, -np.inf)

    def simulate(self, theta, T, rng, x0=None, dT=1.0):
        params = self.params(theta)
        x0 = params.c if x0 is None else x0
        return dwp_simulate(params, T, dT, self.n_substeps, x0, rng)

    def default_prior(self) -> PriorSpec:
        return PriorSpec.from_dicts([
            {'kind': 'normal', 'mean': -0.7, 'sd': 0.8},
            {'kind': 'normal', 'mean': -0.7, 'sd': 0.8},
            {'kind': 'normal', 'mean': 3.34, 'sd': 0.173},
            {'kind': 'normal', 'mean': 2.3, 'sd': 0.4},
            {'kind': 'normal', 'mean': 0.0, 'sd': 0.5},
            {'kind': 'normal', 'mean': 0.0, 'sd': 0.5},
            {'kind': 'normal', 'mean': 0.69, 'sd': 0.5},
        ])

    def default_x0(self, theta) -> float:
        return self.params(theta).c


class LinearGaussianModel(StateSpaceModel):
    """
    x_t = a x_{t-1} + N(0, q^2),  y_t = x_t + mu + N(0, r^2)

    자유 파라미터는 관측 오프셋 mu 하나 (theta = [mu]); Kalman 필터로 정확한 로그 우도 계산.
    """
    name = 'linear-gaussian'
    parameter_names = ['mu']

    def __init__(self, a: float = 0.8, q: float = 1.0, r: float = 1.0):
        if q <= 0 or r <= 0:
            raise InvalidInputError("LinearGaussianModel needs q > 0 and r > 0")
        self.a = float(a)
        self.q = float(q)
        self.r = float(r)

    def propagate(self, particles, theta, dt, rng):
        return self.a * particles + self.q * rng.standard_normal(particles.shape)

    def log_obs_weights(self, t, particles, prev_particles, theta, data):
        mu = float(_as_values(theta)[0])
        resid = (data.values[t] - particles - mu) / self.r
        return -0.5 * resid ** 2 - math.log(self.r) - LOG_SQRT_2PI

    def simulate(self, theta, T, rng, x0=None, dT=1.0):
        mu = float(_as_values(theta)[0])
        x = 0.0 if x0 is None else float(x0)
        ys = np.empty(T)
        for t in range(T):
            x = self.a * x + self.q * float(rng.standard_normal())
            ys[t] = x + mu + self.r * float(rng.standard_normal())
        return TimeSeries(np.arange(1, T + 1, dtype=float), ys, x0=0.0 if x0 is None else float(x0))

    def exact_loglik(self, theta, data: TimeSeries) -> float:
        """Kalman 필터 로그 우도 (x0 고정)"""
        mu = float(_as_values(theta)[0])
        m, P = float(data.x0), 0.0
        total = 0.0
        for y in data.values:
            m_pred = self.a * m
            P_pred = self.a * self.a * P + self.q * self.q
            S = P_pred + self.r * self.r
            resid = y - m_pred - mu
            total += -0.5 * resid * resid / S - 0.5 * math.log(S) - LOG_SQRT_2PI
            K = P_pred / S
            m = m_pred + K * resid
            P = (1.0 - K) * P_pred
        return total

    def default_prior(self) -> PriorSpec:
        return PriorSpec.from_dicts([{'kind': 'normal', 'mean': 0.0, 'sd': 10.0}])


# ---------------------------------------------------------------------------
# 정확한 우도 (토이 타깃 / generic target 모드)
# ---------------------------------------------------------------------------

class ExactLikelihood:
    """
    해석적 로그 우도를 LogLikEstimate(source=Exact)로 감싸는 추정기 (난수 미사용)

    Attributes:
        calls: 호출 횟수 (second-stage 평가 수 집계용)
    """

    def __init__(self, log_density: Callable[[np.ndarray], float]):
        self.log_density = log_density
        self.calls = 0

    def __call__(self, theta, rng: Optional[RngStream] = None) -> LogLikEstimate:
        self.calls += 1
        return LogLikEstimate(float(self.log_density(_as_values(theta))), LikelihoodSource.EXACT)


@dataclass
class GaussianToyTarget:
    """1차원 해석적 타깃: 로그 우도 = log N(theta | mean, sd^2) (prior는 flat 가능)"""
    mean: float = 0.0
    sd: float = 1.0
    name: str = field(default='toy', init=False)
    parameter_names: List[str] = field(default_factory=lambda: ['x'], init=False)

    def exact_loglik(self, theta) -> float:
        z = (float(_as_values(theta)[0]) - self.mean) / self.sd
        return -0.5 * z * z - math.log(self.sd) - LOG_SQRT_2PI

    def likelihood(self) -> ExactLikelihood:
        return ExactLikelihood(self.exact_loglik)

    def default_prior(self) -> PriorSpec:
        return PriorSpec.from_dicts([{'kind': 'flat'}])


def build_model(name: str, **kwargs) -> Any:
    """설정 문자열로 모델 생성"""
    if name == 'ricker':
        return RickerModel()
    if name == 'dwp-sde':
        return DwpSdeModel(**{k: v for k, v in kwargs.items() if k in ('A', 'g', 'n_substeps')})
    if name == 'toy':
        return GaussianToyTarget(**{k: v for k, v in kwargs.items() if k in ('mean', 'sd')})
    if name == 'linear-gaussian':
        return LinearGaussianModel(**{k: v for k, v in kwargs.items() if k in ('a', 'q', 'r')})
    raise InvalidInputError(f"unknown model '{name}' (expected ricker | dwp-sde | toy | linear-gaussian)")
