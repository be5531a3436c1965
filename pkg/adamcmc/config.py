"""
PipelineConfig: TOML 실행 설정 로딩과 모델별 기본값

우선순위: 모델 기본값 < TOML 파일 < CLI 플래그(--seed, --out, --workers)
"""

from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union
import json
import logging

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from adamcmc.core import InvalidInputError
from adamcmc.models import PriorSpec, build_model

logger = logging.getLogger(__name__)

MODEL_CHOICES = ('ricker', 'dwp-sde', 'toy', 'linear-gaussian')
SELECTOR_CHOICES = ('coin', 'logistic', 'tree')
FORMAT_VERSION = 1


@dataclass
class DataSection:
    T: int = 50
    x0: Optional[float] = None
    dT: float = 1.0
    n_substeps: int = 10
    true_theta: List[float] = field(default_factory=list)
    A: float = -0.0025
    g: float = 0.0
    toy_mean: float = 0.0
    toy_sd: float = 1.0
    input: Optional[str] = None


@dataclass
class PfSection:
    n_particles: int = 1000
    n_replicates: int = 1
    resampling: str = 'systematic'
    workers: int = 1


@dataclass
class SamplerSection:
    """PMCMC 실행 + MCWM 수집 설정"""
    iterations: int = 52000
    burnin: int = 2000
    start: List[float] = field(default_factory=list)
    target_acceptance: float = 0.4
    adapt_warmup: int = 500
    initial_scale: float = 0.1
    harvest_iterations: int = 4000
    harvest_burnin: int = 2000
    harvest_rows: Optional[int] = None


@dataclass
class DaSection:
    iterations: int = 52000
    burnin: int = 2000
    beta_mh: float = 0.15
    wide_scale: float = 1.25
    refresh_second_stage: bool = True
    start_from_harvest: bool = True
    algorithms: List[str] = field(default_factory=lambda: ['da', 'ada'])


@dataclass
class FitSection:
    trim_fraction: float = 0.1
    holdout_fraction: float = 0.1
    rmse_threshold: float = 2.0
    restarts: int = 8
    max_fit_rows: int = 1000
    selector: str = 'tree'
    class_weighting: bool = False
    tree_max_depth: int = 6
    tree_min_leaf: int = 10


@dataclass
class SeedSection:
    data: int = 1
    harvest: int = 2
    fit: int = 3
    run: int = 4
    predict: int = 5


@dataclass
class PredictSection:
    n_draws: int = 100
    T: Optional[int] = None
    high_density_fraction: float = 0.5


@dataclass
class PipelineConfig:
    model: str = 'ricker'
    data: DataSection = field(default_factory=DataSection)
    prior: List[Dict[str, Any]] = field(default_factory=list)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    pf: PfSection = field(default_factory=PfSection)
    da: DaSection = field(default_factory=DaSection)
    fit: FitSection = field(default_factory=FitSection)
    seeds: SeedSection = field(default_factory=SeedSection)
    predict: PredictSection = field(default_factory=PredictSection)
    out: str = 'runs/ricker'

    def validate(self) -> 'PipelineConfig':
        if self.model not in MODEL_CHOICES:
            raise InvalidInputError(f"model must be one of {MODEL_CHOICES}, got '{self.model}'")
        if self.fit.selector not in SELECTOR_CHOICES:
            raise InvalidInputError(f"selector must be one of {SELECTOR_CHOICES}, got '{self.fit.selector}'")
        if self.data.T < 1:
            raise InvalidInputError(f"data.T must be >= 1, got {self.data.T}")
        if not 0.0 <= self.fit.trim_fraction < 1.0:
            raise InvalidInputError("fit.trim_fraction must lie in [0, 1)")
        if not 0.0 <= self.fit.holdout_fraction < 1.0:
            raise InvalidInputError("fit.holdout_fraction must lie in [0, 1)")
        for algo in self.da.algorithms:
            if algo not in ('pmcmc', 'mcwm', 'da', 'ada'):
                raise InvalidInputError(f"unknown algorithm '{algo}' in da.algorithms")
        dim = len(self.sampler.start)
        if self.prior and len(self.prior) != dim:
            raise InvalidInputError(f"prior has {len(self.prior)} components but start has {dim}")
        PriorSpec.from_dicts(self.prior)
        return self

    def build_model(self):
        return build_model(self.model, A=self.data.A, g=self.data.g, n_substeps=self.data.n_substeps,
                           mean=self.data.toy_mean, sd=self.data.toy_sd)

    def prior_spec(self) -> PriorSpec:
        return PriorSpec.from_dicts(self.prior)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def write_resolved(self, directory: Union[str, Path]) -> Path:
        """실행 산출물 옆에 config.resolved.json 기록"""
        path = Path(directory) / 'config.resolved.json'
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {'format_version': FORMAT_VERSION, **self.to_dict()}
        path.write_text(json.dumps(payload, indent=2, sort_keys=True))
        return path

    def with_overrides(self, seed: Optional[int] = None, out: Optional[str] = None,
                       workers: Optional[int] = None) -> 'PipelineConfig':
        """CLI 플래그 반영: --seed S 는 단계별 시드를 S, S+1, ... 로 설정"""
        if seed is not None:
            self.seeds = SeedSection(data=seed, harvest=seed + 1, fit=seed + 2, run=seed + 3,
                                     predict=seed + 4)
        if out is not None:
            self.out = out
        if workers is not None:
            self.pf.workers = int(workers)
        return self.validate()


def model_defaults(model: str) -> PipelineConfig:
    """실험 설정값으로 채운 모델별 기본 PipelineConfig"""
    if model == 'ricker':
        return PipelineConfig(
            model='ricker',
            data=DataSection(T=50, x0=7.0, true_theta=[3.80, 2.30, -1.20]),
            prior=build_model('ricker').default_prior().to_dicts(),
            sampler=SamplerSection(iterations=52000, burnin=2000, start=[1.10, 1.10, 0.0],
                                   target_acceptance=0.4, harvest_iterations=4000, harvest_burnin=2000),
            pf=PfSection(n_particles=1000, n_replicates=1),
            da=DaSection(iterations=52000, burnin=2000, beta_mh=0.15),
            out='runs/ricker',
        )
    if model == 'dwp-sde':
        return PipelineConfig(
            model='dwp-sde',
            data=DataSection(T=2000, dT=1.0, n_substeps=10,
                             true_theta=[0.74, 0.52, 3.10, 3.32, 0.45, -0.07, 0.68]),
            prior=build_model('dwp-sde').default_prior().to_dicts(),
            sampler=SamplerSection(iterations=20000, burnin=10000,
                                   start=[-0.693, 0.693, 2.996, 2.708, 0.405, 0.405, 0.916],
                                   target_acceptance=0.15, harvest_iterations=15000,
                                   harvest_burnin=10000, harvest_rows=5000),
            pf=PfSection(n_particles=250, n_replicates=4, workers=4),
            da=DaSection(iterations=20000, burnin=10000, beta_mh=0.15),
            out='runs/dwp-sde',
        )
    if model == 'toy':
        return PipelineConfig(
            model='toy',
            data=DataSection(T=1),
            prior=[{'kind': 'flat'}],
            sampler=SamplerSection(iterations=10000, burnin=1000, start=[0.5], target_acceptance=0.4,
                                   harvest_iterations=3000, harvest_burnin=1000),
            pf=PfSection(n_particles=1, n_replicates=1),
            da=DaSection(iterations=10000, burnin=1000, beta_mh=0.0, refresh_second_stage=False),
            fit=FitSection(trim_fraction=0.0, rmse_threshold=0.5),
            out='runs/toy',
        )
    if model == 'linear-gaussian':
        return PipelineConfig(
            model='linear-gaussian',
            data=DataSection(T=50, x0=0.0, true_theta=[1.0]),
            prior=build_model('linear-gaussian').default_prior().to_dicts(),
            sampler=SamplerSection(iterations=5000, burnin=1000, start=[0.0], target_acceptance=0.4,
                                   harvest_iterations=3000, harvest_burnin=1000),
            pf=PfSection(n_particles=200, n_replicates=1),
            da=DaSection(iterations=5000, burnin=1000),
            out='runs/linear-gaussian',
        )
    raise InvalidInputError(f"model must be one of {MODEL_CHOICES}, got '{model}'")


def _merge(target: Any, updates: Dict[str, Any], where: str) -> None:
    known = {f.name: f for f in fields(target)}
    for key, value in updates.items():
        if key not in known:
            raise InvalidInputError(f"unknown config key '{where}{key}'")
        current = getattr(target, key)
        if is_dataclass(current) and isinstance(value, dict):
            _merge(current, value, f"{where}{key}.")
        else:
            setattr(target, key, value)


def config_from_dict(payload: Dict[str, Any]) -> PipelineConfig:
    """model 키로 기본값을 고른 뒤 나머지 키를 덮어쓴다"""
    payload = dict(payload)
    payload.pop('format_version', None)
    model = payload.get('model', 'ricker')
    config = model_defaults(model)
    _merge(config, payload, '')
    return config.validate()


def load_config(path: Optional[Union[str, Path]] = None, model: Optional[str] = None) -> PipelineConfig:
    """
    TOML 파일(또는 기본값)에서 PipelineConfig 생성

    Args:
        path: TOML 경로 (None이면 model 기본값만 사용)
        model: path가 없을 때 사용할 모델 이름
    """
    if path is None:
        return model_defaults(model or 'ricker').validate()
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"config file not found: {path}")
    with path.open('rb') as fh:
        payload = tomllib.load(fh)
    if model is not None:
        payload['model'] = model
    logger.info(f"Loaded config {path} (model={payload.get('model', 'ricker')})")
    return config_from_dict(payload)
