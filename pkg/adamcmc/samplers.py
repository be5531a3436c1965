"""
MCMC 커널: 적응형 random-walk Metropolis, PMCMC, MCWM(학습 데이터 수집),
DA-GP-MCMC (beta_MH 분기 포함), ADA-GP-MCMC (4-케이스 second stage)

likelihood 인자는 (theta, rng) -> LogLikEstimate 인 callable
(ParticleLikelihood 또는 ExactLikelihood), surrogate는 sample_loglik(theta, rng)를 제공.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple
import logging
import math
import time

import numpy as np
from scipy.linalg import cholesky
from tqdm import tqdm

from adamcmc.caseselect import CaseLabel, CaseSelector
from adamcmc.core import (
    ChainEvent,
    ChainResult,
    InvalidInputError,
    LikelihoodSource,
    LogLikEstimate,
    StreamFamily,
    mh_accept,
)
from adamcmc.models import PriorSpec, eval_log_prior
from adamcmc.surrogate import ChainAligned, TrainingDataset

logger = logging.getLogger(__name__)

Likelihood = Callable[..., LogLikEstimate]

COVARIANCE_RIDGE = 1e-10


def _log_diff(a: float, b: float) -> float:
    """a - b (로그 도메인, -inf 처리)"""
    if a == -math.inf:
        return -math.inf
    if b == -math.inf:
        return math.inf
    return a - b


def _log_ratio(ll_num: float, ll_den: float, lp_num: float, lp_den: float) -> float:
    """(ll_num - ll_den) + (lp_num - lp_den); 정의되지 않는 조합은 -inf (거부)"""
    if lp_num == -math.inf:
        return -math.inf
    value = _log_diff(ll_num, ll_den) + _log_diff(lp_num, lp_den)
    return -math.inf if math.isnan(value) else value


# ---------------------------------------------------------------------------
# 제안 커널 / 적응
# ---------------------------------------------------------------------------

@dataclass
class ProposalKernel:
    """
    대칭 Gaussian random walk: theta* = theta + scale * chol(covariance) z

    scale = a 이면 제안 공분산은 a^2 * covariance (DA의 wide kernel g).
    """
    covariance: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        self.covariance = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if not self.scale > 0:
            raise InvalidInputError(f"proposal scale must be > 0, got {self.scale}")
        if not np.allclose(self.covariance, self.covariance.T):
            raise InvalidInputError("proposal covariance must be symmetric")
        try:
            self._chol = cholesky(self.covariance, lower=True)
        except np.linalg.LinAlgError as e:
            raise InvalidInputError(f"proposal covariance is not positive definite: {e}")

    @property
    def dim(self) -> int:
        return int(self.covariance.shape[0])

    def propose(self, theta: np.ndarray, rng) -> np.ndarray:
        z = np.asarray(rng.standard_normal(self.dim), dtype=float)
        return theta + self.scale * (self._chol @ z)

    def widened(self, factor: float) -> 'ProposalKernel':
        return ProposalKernel(self.covariance, self.scale * factor)


@dataclass
class AmState:
    """
    일반화 AM 상태

    Attributes:
        mean, covariance: 체인 이력의 추정 평균/공분산 (warm-up 후 Robbins-Monro 갱신)
        log_scale: 전역 log lambda (제안 공분산 = exp(log_scale) * covariance)
        target_rate: 목표 수락률
        iteration: 누적 갱신 횟수
        warmup: 공분산 적응 시작 전 반복 수 (그 동안은 누적 합만 기록)
        frozen: True면 am_adapt는 항등 함수
    """
    mean: np.ndarray
    covariance: np.ndarray
    log_scale: float
    target_rate: float
    iteration: int = 0
    warmup: int = 500
    frozen: bool = False
    sum_x: Optional[np.ndarray] = None
    sum_xx: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0.0 < self.target_rate < 1.0:
            raise InvalidInputError(f"target acceptance rate must lie in (0, 1), got {self.target_rate}")

    @classmethod
    def initial(cls, start: np.ndarray, target_rate: float, initial_scale: float = 0.1,
                covariance: Optional[np.ndarray] = None, warmup: int = 500) -> 'AmState':
        start = np.asarray(start, dtype=float)
        d = start.size
        cov = np.eye(d) if covariance is None else np.asarray(covariance, dtype=float)
        return cls(start.copy(), cov, 2.0 * math.log(initial_scale), target_rate, warmup=warmup,
                   sum_x=np.zeros(d), sum_xx=np.zeros((d, d)))

    def kernel(self) -> ProposalKernel:
        return ProposalKernel(self.covariance, math.exp(0.5 * self.log_scale))

    def proposal_covariance(self) -> np.ndarray:
        return math.exp(self.log_scale) * self.covariance

    def freeze(self) -> 'AmState':
        return replace(self, frozen=True)


def am_adapt(state: AmState, accepted: bool, current_sample) -> AmState:
    """
    gamma_r = r^-0.6;
    log_scale += gamma_r * (1[accepted] - target),
    warm-up 종료 시 표본 공분산으로 초기화 후 mu, Sigma를 Robbins-Monro로 갱신
    """
    if state.frozen:
        return state
    x = np.asarray(getattr(current_sample, 'values', current_sample), dtype=float)
    r = state.iteration + 1
    gamma = r ** -0.6
    log_scale = state.log_scale + gamma * (float(accepted) - state.target_rate)
    mean, cov = state.mean, state.covariance
    sum_x, sum_xx = state.sum_x, state.sum_xx

    if r <= state.warmup:
        sum_x = sum_x + x
        sum_xx = sum_xx + np.outer(x, x)
        if r == state.warmup and r > 1:
            mean = sum_x / r
            emp = (sum_xx - r * np.outer(mean, mean)) / (r - 1)
            emp = 0.5 * (emp + emp.T)
            eig = np.linalg.eigvalsh(emp)
            # 계수 부족(예: warm-up 동안 수락 없음)이면 초기 공분산 유지
            if eig[-1] > 0 and eig[0] > 1e-8 * eig[-1]:
                cov = emp + COVARIANCE_RIDGE * np.eye(x.size)
    else:
        diff = x - mean
        mean = mean + gamma * diff
        cov = (1.0 - gamma) * cov + gamma * np.outer(diff, diff)
        cov = 0.5 * (cov + cov.T)

    return replace(state, mean=mean, covariance=cov, log_scale=log_scale, iteration=r,
                   sum_x=sum_x, sum_xx=sum_xx)


# ---------------------------------------------------------------------------
# 설정
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SamplerConfig:
    """
    Attributes:
        iterations: 총 반복 수 R
        start: 시작점 theta^0
        burnin: 요약/수집에서 제외할 앞부분 반복 수
        target_acceptance: AM 목표 수락률
        adapt: AM 적응 사용 여부 (False면 proposal_covariance 고정)
        adapt_until: 이 반복 이후 적응 동결 (None이면 끝까지)
        adapt_warmup: 공분산 적응 시작 전 반복 수
        initial_scale: 초기 제안 표준편차 배율
        proposal_covariance: 고정/초기 제안 공분산 (None이면 단위행렬)
        harvest_rows: MCWM 수집 시 burnin 이후 앞에서부터 사용할 행 수 (None이면 전부)
        show_progress: tqdm 진행 표시
    """
    iterations: int
    start: Tuple[float, ...]
    burnin: int = 0
    target_acceptance: float = 0.4
    adapt: bool = True
    adapt_until: Optional[int] = None
    adapt_warmup: int = 500
    initial_scale: float = 0.1
    proposal_covariance: Optional[Tuple[Tuple[float, ...], ...]] = None
    harvest_rows: Optional[int] = None
    show_progress: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidInputError(f"iterations must be >= 1, got {self.iterations}")
        if not 0 <= self.burnin < self.iterations:
            raise InvalidInputError(f"burnin must lie in [0, iterations), got {self.burnin}")
        object.__setattr__(self, 'start', tuple(float(v) for v in self.start))

    def initial_covariance(self) -> Optional[np.ndarray]:
        if self.proposal_covariance is None:
            return None
        return np.asarray(self.proposal_covariance, dtype=float)


@dataclass
class DaConfig:
    """
    Attributes:
        beta_mh: 반복마다 일반 MH 분기(g~)를 택할 확률
        refresh_second_stage: second stage에서 theta^{r-1}의 우도를 재추정할지 여부
        wide_scale: DA 커널 g = a^2 Sigma 의 a
        selector: ADA 케이스 선택 모델
    """
    beta_mh: float = 0.15
    refresh_second_stage: bool = True
    wide_scale: float = 1.25
    selector: Optional[CaseSelector] = None

    def __post_init__(self):
        if not 0.0 <= self.beta_mh <= 1.0:
            raise InvalidInputError(f"beta_mh must lie in [0, 1], got {self.beta_mh}")
        if not self.wide_scale > 0:
            raise InvalidInputError(f"wide_scale must be > 0, got {self.wide_scale}")


@dataclass
class _Trace:
    samples: List[np.ndarray] = field(default_factory=list)
    proposals: List[np.ndarray] = field(default_factory=list)
    values: List[float] = field(default_factory=list)
    sources: List[LikelihoodSource] = field(default_factory=list)
    events: List[ChainEvent] = field(default_factory=list)

    def record(self, theta, proposal, value, source, event):
        self.samples.append(np.array(theta, dtype=float))
        self.proposals.append(np.array(proposal, dtype=float))
        self.values.append(float(value))
        self.sources.append(source)
        self.events.append(event)

    def result(self, algorithm: str, wall_time: float, names: Sequence[str], burnin: int,
               final_covariance: Optional[np.ndarray] = None, **metadata) -> ChainResult:
        return ChainResult(
            algorithm=algorithm,
            samples=np.vstack(self.samples),
            loglik_values=np.asarray(self.values),
            loglik_sources=list(self.sources),
            events=list(self.events),
            wall_time=wall_time,
            parameter_names=list(names),
            burnin=burnin,
            proposals=np.vstack(self.proposals),
            final_covariance=final_covariance,
            metadata=dict(metadata),
        )


def _names(names: Optional[Sequence[str]], d: int) -> List[str]:
    return list(names) if names else [f"theta{i + 1}" for i in range(d)]


def _initial_state(likelihood: Likelihood, prior: PriorSpec, start: np.ndarray,
                   streams: StreamFamily) -> Tuple[float, float]:
    lp = eval_log_prior(start, prior)
    if lp == -math.inf:
        raise InvalidInputError(f"start point {start.tolist()} has zero prior density; choose a new start point")
    ll = likelihood(start, streams.particle_filter)
    if ll.is_impossible:
        raise InvalidInputError(
            f"log-likelihood at the start point {start.tolist()} is -inf; choose a new start point")
    return lp, ll.value


def _progress(n: int, cfg: SamplerConfig, desc: str):
    return tqdm(range(n), desc=desc, disable=not cfg.show_progress, leave=False)


# ---------------------------------------------------------------------------
# PMCMC / MCWM
# ---------------------------------------------------------------------------

def _run_pseudo_marginal(likelihood: Likelihood, prior: PriorSpec, cfg: SamplerConfig,
                         streams: StreamFamily, names: Optional[Sequence[str]],
                         refresh_current: bool, algorithm: str,
                         harvest: Optional[List[Tuple[np.ndarray, float, np.ndarray, float]]] = None
                         ) -> Tuple[ChainResult, AmState]:
    theta = np.asarray(cfg.start, dtype=float)
    lp, ll = _initial_state(likelihood, prior, theta, streams)
    am = AmState.initial(theta, cfg.target_acceptance, cfg.initial_scale,
                         cfg.initial_covariance(), cfg.adapt_warmup)
    base_cov = cfg.initial_covariance()
    fixed_kernel = ProposalKernel(np.eye(theta.size) if base_cov is None else base_cov, cfg.initial_scale)
    trace = _Trace()
    n_accepted = 0
    started = time.perf_counter()

    for r in _progress(cfg.iterations, cfg, algorithm):
        if cfg.adapt and cfg.adapt_until is not None and r == cfg.adapt_until:
            am = am.freeze()
        kernel = am.kernel() if cfg.adapt else fixed_kernel
        proposal = kernel.propose(theta, streams.proposal)
        lp_star = eval_log_prior(proposal, prior)
        pf_calls = 0

        if refresh_current:
            ll = likelihood(theta, streams.particle_filter).value
            pf_calls += 1
        ll_prev = ll

        if lp_star == -math.inf:
            ll_star = -math.inf
        else:
            ll_star = likelihood(proposal, streams.particle_filter).value
            pf_calls += 1

        u = streams.stage_decision.uniform()
        accepted = mh_accept(_log_ratio(ll_star, ll, lp_star, lp), u)
        if harvest is not None:
            harvest.append((proposal, ll_star, theta.copy(), ll_prev))
        if accepted:
            theta, lp, ll = proposal, lp_star, ll_star
            n_accepted += 1
        if cfg.adapt:
            am = am_adapt(am, accepted, theta)
        trace.record(theta, proposal, ll, LikelihoodSource.PARTICLE_FILTER,
                     ChainEvent(pf_calls=pf_calls, accepted=accepted))

    if cfg.adapt:
        am = am.freeze()
    wall = time.perf_counter() - started
    final_cov = am.proposal_covariance() if cfg.adapt else fixed_kernel.scale ** 2 * fixed_kernel.covariance
    logger.info(f"{algorithm}: {cfg.iterations} iterations in {wall:.1f}s, "
                f"acceptance {100.0 * n_accepted / cfg.iterations:.2f}%")
    result = trace.result(algorithm, wall, _names(names, theta.size), cfg.burnin, final_cov,
                          target_acceptance=cfg.target_acceptance)
    return result, am


def run_pmcmc(likelihood: Likelihood, prior: PriorSpec, cfg: SamplerConfig, streams: StreamFamily,
              parameter_names: Optional[Sequence[str]] = None) -> ChainResult:
    """
    Pseudo-marginal MH: 보유 상태의 로그 우도 추정치를 재사용 (재추정 없음)

    Raises:
        InvalidInputError: 시작점의 로그 우도가 -inf
    """
    result, _ = _run_pseudo_marginal(likelihood, prior, cfg, streams, parameter_names,
                                     refresh_current=False, algorithm='pmcmc')
    return result


def run_mcwm(likelihood: Likelihood, prior: PriorSpec, cfg: SamplerConfig, streams: StreamFamily,
             parameter_names: Optional[Sequence[str]] = None,
             harvest: bool = True) -> Tuple[ChainResult, Optional[TrainingDataset]]:
    """
    MCWM: 매 반복 theta^{r-1}와 theta* 모두 재추정.

    harvest=True면 burnin 이후 (수락 여부와 무관하게) 모든 제안과 그 로그 우도를 D에,
    같은 행 순서로 당시 체인 상태와 재추정 로그 우도를 D~에 기록.
    """
    rows: Optional[List] = [] if harvest else None
    result, _ = _run_pseudo_marginal(likelihood, prior, cfg, streams, parameter_names,
                                     refresh_current=True, algorithm='mcwm', harvest=rows)
    if not harvest:
        return result, None

    kept = rows[cfg.burnin:]
    if cfg.harvest_rows is not None:
        kept = kept[:cfg.harvest_rows]
    if not kept:
        raise InvalidInputError("harvest has zero post-burnin iterations; increase iterations or reduce burnin")
    dataset = TrainingDataset(
        proposals=np.vstack([k[0] for k in kept]),
        logliks=np.array([k[1] for k in kept]),
        chain_aligned=ChainAligned(np.vstack([k[2] for k in kept]), np.array([k[3] for k in kept])),
        parameter_names=list(result.parameter_names),
    )
    logger.info(f"Harvested {len(dataset)} training rows")
    return result, dataset


# ---------------------------------------------------------------------------
# DA / ADA
# ---------------------------------------------------------------------------

@dataclass
class ChainState:
    """
    현재 체인 상태. loglik이 None이면 (ADA early-accept 이후) 아직 추정되지 않은 값.
    """
    theta: np.ndarray
    log_prior: float
    loglik: Optional[float]
    recorded_loglik: float
    recorded_source: LikelihoodSource = LikelihoodSource.PARTICLE_FILTER


@dataclass
class DaKernels:
    """g~ (MH 분기)와 g = a^2 Sigma (DA 분기)"""
    mh: ProposalKernel
    wide: ProposalKernel

    @classmethod
    def from_covariance(cls, covariance: np.ndarray, wide_scale: float) -> 'DaKernels':
        base = ProposalKernel(covariance, 1.0)
        return cls(base, base.widened(wide_scale))


@dataclass
class StepOutcome:
    state: ChainState
    proposal: np.ndarray
    event: ChainEvent
    early_rejected: bool = False


@dataclass
class SecondStageOutcome:
    accepted: bool
    pf_called: bool

    @property
    def early_decision(self) -> bool:
        return not self.pf_called


def ada_second_stage(case: CaseLabel, u: float, gp_log_ratio_prev_over_star: float,
                     pf_log_ratio_provider: Callable[[], float]) -> SecondStageOutcome:
    """
    선택된 케이스의 가정 아래 second stage 결정 (PF는 필요할 때만 provider로 호출)

    Case1: u < L~비율이면 조기 수락, 아니면 PF 호출 후 같은 u로 판정
    Case2: 항상 PF 호출
    Case3: u > L~비율이면 조기 거부, 아니면 PF 호출
    Case4: PF 없이 수락
    """
    g = float(gp_log_ratio_prev_over_star)
    case = CaseLabel(case)
    if case is CaseLabel.CASE4:
        return SecondStageOutcome(True, False)
    if case is CaseLabel.CASE1 and mh_accept(g, u):
        return SecondStageOutcome(True, False)
    if case is CaseLabel.CASE3 and not mh_accept(g, u):
        return SecondStageOutcome(False, False)
    total = pf_log_ratio_provider() + g
    return SecondStageOutcome(mh_accept(-math.inf if math.isnan(total) else total, u), True)


def _ensure_loglik(state: ChainState, likelihood: Likelihood, streams: StreamFamily) -> Tuple[float, int]:
    if state.loglik is not None:
        return state.loglik, 0
    value = likelihood(state.theta, streams.particle_filter).value
    state.loglik = value
    state.recorded_loglik = value
    state.recorded_source = LikelihoodSource.PARTICLE_FILTER
    return value, 1


def da_step(state: ChainState, surrogate, likelihood: Likelihood, prior: PriorSpec,
            kernels: DaKernels, cfg: DaConfig, streams: StreamFamily,
            adaptive: bool = False) -> StepOutcome:
    """
    DA(adaptive=False) 또는 ADA(adaptive=True) 한 반복

    1) branch_selection 스트림 동전으로 beta_MH 분기 여부 결정 (케이스 동전과 분리)
    2) DA 분기: wide kernel 제안 -> GP 독립 추출 두 번 -> stage 1
    3) stage 1 통과 시 second_stage 스트림 u 하나를 뽑고 DA 또는 ADA second stage
    """
    theta = state.theta
    if streams.branch_selection.uniform() < cfg.beta_mh:
        return _mh_branch_step(state, likelihood, prior, kernels.mh, streams)

    proposal = kernels.wide.propose(theta, streams.proposal)
    lp_star = eval_log_prior(proposal, prior)
    gp_star = surrogate.sample_loglik(proposal, streams.gp_draw).value
    gp_prev = surrogate.sample_loglik(theta, streams.gp_draw).value

    u1 = streams.stage_decision.uniform()
    if not mh_accept(_log_ratio(gp_star, gp_prev, lp_star, state.log_prior), u1):
        return StepOutcome(state, proposal, ChainEvent(stage1_passed=False), early_rejected=True)

    pf_calls = 0
    refreshed: Dict[str, float] = {}

    def pf_log_ratio() -> float:
        nonlocal pf_calls
        if cfg.refresh_second_stage:
            ll_prev = likelihood(theta, streams.particle_filter).value
            pf_calls += 1
            refreshed['prev'] = ll_prev
        else:
            ll_prev, extra = _ensure_loglik(state, likelihood, streams)
            pf_calls += extra
        ll_star = likelihood(proposal, streams.particle_filter).value
        pf_calls += 1
        refreshed['star'] = ll_star
        return _log_diff(ll_star, ll_prev)

    g = _log_diff(gp_prev, gp_star)
    case = None
    u2 = None
    if adaptive:
        if cfg.selector is None:
            raise InvalidInputError("ADA needs a fitted case selector")
        case = cfg.selector.select(proposal, gp_star - gp_prev, gp_star > gp_prev,
                                   streams.case_selection, theta_prev=theta)
        u2 = streams.second_stage.uniform()
        outcome = ada_second_stage(case, u2, g, pf_log_ratio)
    else:
        u2 = streams.second_stage.uniform()
        total = pf_log_ratio() + g
        outcome = SecondStageOutcome(mh_accept(-math.inf if math.isnan(total) else total, u2), True)

    if 'prev' in refreshed:
        state = replace(state, loglik=refreshed['prev'], recorded_loglik=refreshed['prev'],
                        recorded_source=LikelihoodSource.PARTICLE_FILTER)

    if outcome.accepted:
        if 'star' in refreshed:
            state = ChainState(proposal, lp_star, refreshed['star'], refreshed['star'])
        else:
            state = ChainState(proposal, lp_star, None, gp_star, LikelihoodSource.GP_DRAW)

    event = ChainEvent(stage1_passed=True, case=None if case is None else int(case),
                       pf_calls=pf_calls, accepted=outcome.accepted,
                       early_accept=outcome.accepted and not outcome.pf_called)
    return StepOutcome(state, proposal, event)


def _mh_branch_step(state: ChainState, likelihood: Likelihood, prior: PriorSpec,
                    kernel: ProposalKernel, streams: StreamFamily) -> StepOutcome:
    """g~로 제안하고 비싼 우도로 일반 MH 판정"""
    proposal = kernel.propose(state.theta, streams.proposal)
    lp_star = eval_log_prior(proposal, prior)
    ll_prev, pf_calls = _ensure_loglik(state, likelihood, streams)
    if lp_star == -math.inf:
        ll_star = -math.inf
    else:
        ll_star = likelihood(proposal, streams.particle_filter).value
        pf_calls += 1
    u = streams.stage_decision.uniform()
    accepted = mh_accept(_log_ratio(ll_star, ll_prev, lp_star, state.log_prior), u)
    if accepted:
        state = ChainState(proposal, lp_star, ll_star, ll_star)
    event = ChainEvent(stage1_passed=False, pf_calls=pf_calls, accepted=accepted, used_mh_branch=True)
    return StepOutcome(state, proposal, event)


def _run_delayed(likelihood: Likelihood, surrogate, prior: PriorSpec, proposal_covariance: np.ndarray,
                 cfg: SamplerConfig, da: DaConfig, streams: StreamFamily,
                 parameter_names: Optional[Sequence[str]], adaptive: bool) -> ChainResult:
    algorithm = 'ada' if adaptive else 'da'
    theta = np.asarray(cfg.start, dtype=float)
    lp, ll = _initial_state(likelihood, prior, theta, streams)
    kernels = DaKernels.from_covariance(proposal_covariance, da.wide_scale)
    state = ChainState(theta, lp, ll, ll)
    trace = _Trace()
    n_early_reject = 0
    started = time.perf_counter()

    for _ in _progress(cfg.iterations, cfg, algorithm):
        outcome = da_step(state, surrogate, likelihood, prior, kernels, da, streams, adaptive=adaptive)
        state = outcome.state
        n_early_reject += int(outcome.early_rejected)
        trace.record(state.theta, outcome.proposal, state.recorded_loglik, state.recorded_source,
                     outcome.event)

    wall = time.perf_counter() - started
    logger.info(f"{algorithm}: {cfg.iterations} iterations in {wall:.1f}s, "
                f"stage-1 early rejections {n_early_reject}")
    return trace.result(algorithm, wall, _names(parameter_names, theta.size), cfg.burnin,
                        kernels.mh.covariance, beta_mh=da.beta_mh, wide_scale=da.wide_scale,
                        refresh_second_stage=da.refresh_second_stage,
                        selector=None if da.selector is None else da.selector.kind)


def run_da(likelihood: Likelihood, surrogate, prior: PriorSpec, proposal_covariance: np.ndarray,
           cfg: SamplerConfig, da: DaConfig, streams: StreamFamily,
           parameter_names: Optional[Sequence[str]] = None) -> ChainResult:
    """DA-GP-MCMC (커널 g, g~는 실행 내내 고정)"""
    return _run_delayed(likelihood, surrogate, prior, proposal_covariance, cfg, da, streams,
                        parameter_names, adaptive=False)


def run_ada(likelihood: Likelihood, surrogate, prior: PriorSpec, proposal_covariance: np.ndarray,
            cfg: SamplerConfig, da: DaConfig, streams: StreamFamily,
            parameter_names: Optional[Sequence[str]] = None) -> ChainResult:
    """ADA-GP-MCMC: second stage에서 선택된 케이스에 따라 조기 수락/거부"""
    if da.selector is None:
        raise InvalidInputError("run_ada needs DaConfig.selector")
    return _run_delayed(likelihood, surrogate, prior, proposal_covariance, cfg, da, streams,
                        parameter_names, adaptive=True)
