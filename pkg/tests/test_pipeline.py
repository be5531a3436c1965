"""
파이프라인 단계 인계와 CLI 테스트 (작은 설정, tmp_path 사용)
"""

import json

import pandas as pd
import pytest

from adamcmc.cli import main
from adamcmc.config import config_from_dict
from adamcmc.core import PipelineError
from adamcmc.pipeline import PipelineManager
from adamcmc.smc import ParticleLikelihood


def toy_config(out, selector='coin'):
    return config_from_dict({
        'model': 'toy',
        'out': str(out),
        'sampler': {'harvest_iterations': 500, 'harvest_burnin': 200, 'iterations': 300, 'burnin': 50},
        'da': {'iterations': 300, 'burnin': 50},
        'fit': {'restarts': 2, 'selector': selector},
    })


def linear_config(out):
    return config_from_dict({
        'model': 'linear-gaussian',
        'out': str(out),
        'data': {'T': 30},
        'pf': {'n_particles': 100},
        'sampler': {'iterations': 300, 'burnin': 100},
        'predict': {'n_draws': 5},
    })


class TestToyPipeline:

    def test_end_to_end(self, tmp_path):
        manager = PipelineManager(toy_config(tmp_path / 'toy'), show_progress=False)
        summary = manager.run_pipeline()

        root = tmp_path / 'toy'
        assert summary['harvest']['rows'] == 300
        assert set(summary['fit']['case_counts']) == {1, 2, 3, 4}
        for name in ('D.csv', 'D_tilde.csv', 'chain.csv', 'harvest.json', 'config.resolved.json'):
            assert (root / 'harvest' / name).exists()
        container = json.loads((root / 'fit' / 'model.json').read_text())
        assert container['format_version'] == 1
        assert container['selector']['kind'] == 'coin'

        for algorithm in ('da', 'ada'):
            chain = pd.read_csv(root / 'runs' / algorithm / 'chain.csv')
            assert len(chain) == 300
            assert chain['burnin'].sum() == 50
            assert (root / 'runs' / algorithm / 'trace.plotly.json').exists()
        ada_report = json.loads((root / 'runs' / 'ada' / 'report.json').read_text())
        assert len(ada_report['cases']) == 4

        runs = {row['run'] for row in summary['compare']['runs']}
        assert runs == {'da', 'ada'}
        assert (root / 'compare' / 'compare.csv').exists()

    def test_tree_selector_round_trip(self, tmp_path):
        manager = PipelineManager(toy_config(tmp_path / 'toy', selector='tree'), show_progress=False)
        manager.cmd_harvest()
        report = manager.cmd_fit()
        assert report['selector'] == 'tree'
        _, selector = manager.load_fit(need_selector=True)
        assert type(selector).__name__ == 'TreeSelector'
        metrics = manager.cmd_run('ada')['metrics']
        assert metrics['iterations'] == 300

    def test_da_needs_fit(self, tmp_path):
        manager = PipelineManager(toy_config(tmp_path / 'toy'), show_progress=False)
        with pytest.raises(PipelineError):
            manager.cmd_run('da')

    def test_rerun_is_byte_identical(self, tmp_path):
        chains = []
        for name in ('first', 'second'):
            root = tmp_path / name
            PipelineManager(toy_config(root), show_progress=False).run_pipeline()
            chains.append({a: (root / 'runs' / a / 'chain.csv').read_bytes() for a in ('da', 'ada')})
        assert chains[0] == chains[1]
        assert (tmp_path / 'first' / 'harvest' / 'D.csv').read_bytes() == \
            (tmp_path / 'second' / 'harvest' / 'D.csv').read_bytes()

    def test_toy_has_no_data(self, tmp_path):
        manager = PipelineManager(toy_config(tmp_path / 'toy'), show_progress=False)
        with pytest.raises(PipelineError):
            manager.cmd_simulate()
        with pytest.raises(PipelineError):
            manager.cmd_posterior_predictive()


class TestLinearGaussianPipeline:

    def test_simulate_run_predict(self, tmp_path):
        manager = PipelineManager(linear_config(tmp_path / 'lg'), show_progress=False)
        series = manager.cmd_simulate()
        assert len(series) == 30
        meta = json.loads((tmp_path / 'lg' / 'data.json').read_text())
        assert meta['source'] == 'simulated'

        report = manager.cmd_run('pmcmc')
        assert report['algorithm'] == 'pmcmc'
        assert report['metrics']['total_pf_calls'] == 300

        summary = manager.cmd_posterior_predictive()
        assert summary['n_draws'] == 5
        assert summary['T'] == 30
        trajectories = pd.read_csv(tmp_path / 'lg' / 'predict' / 'trajectories.csv')
        assert trajectories['draw'].nunique() == 5

    def test_refuses_overwrite(self, tmp_path):
        PipelineManager(linear_config(tmp_path / 'lg'), show_progress=False).cmd_simulate()
        with pytest.raises(PipelineError):
            PipelineManager(linear_config(tmp_path / 'lg'), show_progress=False).cmd_simulate()
        forced = PipelineManager(linear_config(tmp_path / 'lg'), force=True, show_progress=False)
        assert len(forced.cmd_simulate()) == 30

    def test_ingest_csv(self, tmp_path):
        source = tmp_path / 'obs.csv'
        pd.DataFrame({'time': [1.0, 2.0, 3.0], 'value': [0.1, -0.3, 0.7]}).to_csv(source, index=False)
        manager = PipelineManager(linear_config(tmp_path / 'lg'), show_progress=False)
        series = manager.cmd_simulate(source)
        assert len(series) == 3
        assert len(manager.load_data()) == 3

    def test_collapse_summary_reaches_report(self, tmp_path, monkeypatch):
        message = 'particle filter collapsed in 3 of 301 likelihood calls'
        monkeypatch.setattr(ParticleLikelihood, 'collapse_warning', lambda self: message)
        manager = PipelineManager(linear_config(tmp_path / 'lg'), show_progress=False)
        manager.cmd_simulate()
        report = manager.cmd_run('pmcmc')
        assert message in report['warnings']
        saved = json.loads((tmp_path / 'lg' / 'runs' / 'pmcmc' / 'report.json').read_text())
        assert message in saved['warnings']

    def test_no_collapse_no_warning(self, tmp_path):
        manager = PipelineManager(linear_config(tmp_path / 'lg'), show_progress=False)
        manager.cmd_simulate()
        likelihood = manager.build_likelihood(manager.load_data())
        assert PipelineManager.likelihood_warnings(likelihood) == []
        assert PipelineManager.likelihood_warnings(manager.model) == []


class TestDwpLikelihood:

    def test_filter_uses_configured_substeps(self, tmp_path):
        config = config_from_dict({'model': 'dwp-sde', 'out': str(tmp_path / 'dwp'), 'data': {'n_substeps': 4}})
        manager = PipelineManager(config, show_progress=False)
        likelihood = manager.build_likelihood(None)
        assert likelihood.cfg.euler_substeps == 4
        assert manager.model.n_substeps == 4


class TestCompare:

    def _write_run(self, path, n_particles, wall):
        path.mkdir(parents=True)
        report = {'algorithm': path.name, 'metrics': {
            'wall_time_seconds': wall, 'time_per_1000': wall, 'time_unit': 'seconds',
            'acceptance_pct': 20.0, 'second_stage_pf_calls': 10}}
        (path / 'report.json').write_text(json.dumps(report))
        config = {'model': 'ricker', 'data': {'T': 50}, 'pf': {'n_particles': n_particles, 'n_replicates': 1},
                  'seeds': {'data': 1}}
        (path / 'config.resolved.json').write_text(json.dumps(config))
        return path

    def test_mismatched_configs(self, tmp_path):
        a = self._write_run(tmp_path / 'a' / 'da', 1000, 10.0)
        b = self._write_run(tmp_path / 'b' / 'ada', 500, 5.0)
        manager = PipelineManager(toy_config(tmp_path / 'cmp'), show_progress=False)
        with pytest.raises(PipelineError, match='pf.n_particles'):
            manager.cmd_compare([a, b])

    def test_matching_configs(self, tmp_path):
        a = self._write_run(tmp_path / 'a' / 'da', 1000, 10.0)
        b = self._write_run(tmp_path / 'b' / 'ada', 1000, 5.0)
        manager = PipelineManager(toy_config(tmp_path / 'cmp'), show_progress=False)
        rows = {r['run']: r for r in manager.cmd_compare([a, b])['runs']}
        assert rows['ada']['speed_up_vs_baseline'] == pytest.approx(2.0)

    def test_needs_two(self, tmp_path):
        manager = PipelineManager(toy_config(tmp_path / 'cmp'), show_progress=False)
        with pytest.raises(PipelineError):
            manager.cmd_compare([tmp_path])


class TestCli:

    def test_simulate_then_conflict(self, tmp_path, capsys):
        argv = ['simulate', '--model', 'linear-gaussian', '--out', str(tmp_path / 'cli'), '--seed', '3']
        assert main(argv) == 0
        out = json.loads(capsys.readouterr().out)
        assert out['observations'] == 50
        resolved = json.loads((tmp_path / 'cli' / 'config.resolved.json').read_text())
        assert resolved['seeds']['data'] == 3

        assert main(argv + ['--quiet']) == 2
        assert 'refusing to overwrite' in capsys.readouterr().err
        assert main(argv + ['--quiet', '--force']) == 0

    def test_bad_config_path(self, tmp_path):
        assert main(['harvest', '--config', str(tmp_path / 'missing.toml'), '--quiet']) == 2
