"""
리포트 지표 테스트 (체인 DataFrame 기반)
"""

import numpy as np
import pandas as pd
import pytest

from adamcmc.core import InvalidInputError
from adamcmc.reporting import (
    case_statistics,
    compare_reports,
    count_density_peaks,
    count_regime_switches,
    divergence_warning,
    efficiency_metrics,
    marginal_densities,
    parameter_columns,
    posterior_summary,
)


@pytest.fixture
def chain_frame():
    rng = np.random.default_rng(42)
    n = 200
    branch = np.where(np.arange(n) % 5 == 0, 'mh', 'da')
    stage1 = (branch == 'da') & (np.arange(n) % 2 == 0)
    case = pd.array([(i % 4) + 1 if s else None for i, s in enumerate(stage1)], dtype='Int64')
    pf_calls = np.where(branch == 'mh', 2, np.where(stage1, 1, 0))
    return pd.DataFrame({
        'iteration': np.arange(1, n + 1),
        'x': rng.normal(size=n),
        'y': rng.normal(size=n),
        'loglik': rng.normal(size=n),
        'loglik_source': 'particle_filter',
        'stage1_passed': stage1,
        'case': case,
        'pf_calls': pf_calls,
        'accepted': np.arange(n) % 3 == 0,
        'early_accept': False,
        'branch': branch,
        'burnin': np.arange(1, n + 1) <= 20,
    })


class TestEfficiencyMetrics:

    def test_counts(self, chain_frame):
        m = efficiency_metrics(chain_frame, wall_time=120.0, time_unit='minutes')
        assert m['iterations'] == 200
        assert m['time_per_1000'] == pytest.approx(2.0 * 1000 / 200)
        assert m['mh_branch_pct'] == pytest.approx(20.0)
        # DA 분기 160회 중 절반이 stage 1 통과
        assert m['stage1_survivors'] == 80
        assert m['early_rejection_pct'] == pytest.approx(50.0)
        assert m['second_stage_pf_calls'] == 80
        assert m['total_pf_calls'] == 80 + 2 * 40
        assert set(m['ess']) == {'x', 'y'}
        assert m['min_ess'] == min(m['ess'].values())

    def test_invalid_unit(self, chain_frame):
        with pytest.raises(InvalidInputError):
            efficiency_metrics(chain_frame, 1.0, time_unit='hours')

    def test_parameter_columns(self, chain_frame):
        assert parameter_columns(chain_frame) == ['x', 'y']


class TestCaseStatistics:

    def test_case_rows(self, chain_frame):
        rows = {r['case']: r for r in case_statistics(chain_frame)}
        assert sum(r['count'] for r in rows.values()) == 80
        assert sum(r['pct_of_second_stage'] for r in rows.values()) == pytest.approx(100.0)
        assert rows[1]['pf_called_pct'] == pytest.approx(100.0)

    def test_no_second_stage(self, chain_frame):
        frame = chain_frame.assign(case=pd.array([None] * len(chain_frame), dtype='Int64'))
        assert case_statistics(frame) == []


class TestSummaries:

    def test_posterior_excludes_burnin(self, chain_frame):
        rows = {r['parameter']: r for r in posterior_summary(chain_frame)}
        assert rows['x']['mean'] == pytest.approx(chain_frame['x'].iloc[20:].mean())

    def test_marginal_densities(self, chain_frame):
        dens = marginal_densities(chain_frame, grid_points=50)
        assert set(dens['parameter']) == {'x', 'y'}
        assert len(dens) == 100
        assert (dens['density'] >= 0).all()

    def test_divergence_warning(self, chain_frame):
        assert divergence_warning(chain_frame, 'run') is None
        stuck = chain_frame.assign(accepted=False)
        assert 'stuck' in divergence_warning(stuck, 'run')


class TestDensityAndSwitches:

    def test_bimodal_peaks(self):
        rng = np.random.default_rng(0)
        values = np.concatenate([rng.normal(-4, 1, 3000), rng.normal(4, 1, 3000)])
        assert count_density_peaks(values) == 2
        assert count_density_peaks(rng.normal(0, 1, 3000)) == 1

    def test_regime_switches(self):
        assert count_regime_switches([1.0, 3.0, 1.0, 2.0, 3.0], midpoint=2.0) == 3
        assert count_regime_switches([5.0], midpoint=2.0) == 0


class TestCompare:

    def _report(self, algorithm, wall, pf_calls):
        return {'algorithm': algorithm, 'metrics': {
            'wall_time_seconds': wall, 'time_per_1000': wall, 'time_unit': 'seconds',
            'acceptance_pct': 30.0, 'second_stage_pf_calls': pf_calls}}

    def test_speed_up_against_da(self):
        table = compare_reports({'ada': self._report('ada', 50.0, 100), 'da': self._report('da', 100.0, 400)})
        row = table.set_index('run').loc['ada']
        assert row['speed_up_vs_baseline'] == pytest.approx(2.0)
        assert row['pf_reduction_vs_baseline'] == pytest.approx(4.0)
        assert row['baseline'] == 'da'

    def test_needs_two_runs(self):
        with pytest.raises(InvalidInputError):
            compare_reports({'da': self._report('da', 1.0, 1)})
