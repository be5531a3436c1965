"""
공통 테스트 픽스처: 토이 타깃, 선형-가우시안 데이터, 잡음 서로게이트, 적합된 GP
"""

from pathlib import Path
import sys

import numpy as np
import pytest

# 프로젝트 루트를 import 경로에 추가 (설치 없이 실행)
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from adamcmc.core import LikelihoodSource, LogLikEstimate, RngStream, StreamFamily  # noqa: E402
from adamcmc.models import GaussianToyTarget, LinearGaussianModel, PriorSpec  # noqa: E402
from adamcmc.surrogate import ChainAligned, GpFitConfig, TrainingDataset, fit_gp  # noqa: E402


class NoisySurrogate:
    """정확한 로그 우도 + N(0, sd^2) 잡음 (GP 드로우 인터페이스와 동일하게 매번 1회 소비)"""

    def __init__(self, exact_loglik, sd: float = 0.5):
        self.exact_loglik = exact_loglik
        self.sd = float(sd)

    def sample_loglik(self, theta, rng: RngStream) -> LogLikEstimate:
        zeta = float(rng.standard_normal())
        value = self.exact_loglik(np.asarray(theta, dtype=float)) + self.sd * zeta
        return LogLikEstimate(value, LikelihoodSource.GP_DRAW)


@pytest.fixture
def toy_target():
    return GaussianToyTarget(mean=0.0, sd=1.0)


@pytest.fixture
def flat_prior():
    return PriorSpec.from_dicts([{'kind': 'flat'}])


@pytest.fixture
def streams():
    return StreamFamily(seed=42)


@pytest.fixture
def noisy_surrogate(toy_target):
    return NoisySurrogate(toy_target.exact_loglik, sd=0.5)


@pytest.fixture
def exact_surrogate(toy_target):
    return NoisySurrogate(toy_target.exact_loglik, sd=0.0)


@pytest.fixture
def linear_gaussian():
    return LinearGaussianModel(a=0.8, q=1.0, r=1.0)


@pytest.fixture
def linear_gaussian_data(linear_gaussian):
    return linear_gaussian.simulate([1.0], 20, RngStream(7), x0=0.0)


@pytest.fixture
def toy_harvest(toy_target):
    """토이 타깃의 수집 데이터 흉내: 로그 우도에 N(0, 0.2^2) 잡음, D~ 행 정렬"""
    rng = np.random.default_rng(3)
    proposals = rng.normal(0.0, 1.5, size=(80, 1))
    states = rng.normal(0.0, 1.0, size=(80, 1))

    def noisy(X):
        exact = np.array([toy_target.exact_loglik(x) for x in X])
        return exact + rng.normal(0.0, 0.2, size=len(X))

    logliks = noisy(proposals)
    return TrainingDataset(proposals, logliks, ChainAligned(states, noisy(states)), ['x'])


@pytest.fixture
def toy_gp(toy_harvest):
    return fit_gp(toy_harvest, GpFitConfig(restarts=2))
