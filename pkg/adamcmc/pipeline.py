"""
PipelineManager: simulate -> harvest -> fit -> run -> compare / predict 단계 실행과 파일 인계

실행 디렉터리 구조 (config.out 아래):
    data.csv, data.json
    harvest/  D.csv, D_tilde.csv, chain.csv, harvest.json
    fit/      model.json, fit_report.json, labeled_cases.csv, selector_assessment.csv
    runs/<algorithm>/  chain.csv, report.json, marginals.csv, marginals.plotly.json, trace.plotly.json
    compare/  compare.csv, compare.json, compare.plotly.json
    predict/  trajectories.csv, histogram.csv, predict.json, trajectories.plotly.json
각 단계 디렉터리에는 config.resolved.json이 함께 기록된다.
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union
import json
import logging

import numpy as np
import pandas as pd

from adamcmc.caseselect import (
    assess_selector,
    fit_biased_coin,
    fit_selector,
    label_training_cases,
    selector_from_dict,
)
from adamcmc.config import FORMAT_VERSION, PipelineConfig
from adamcmc.core import (
    InvalidInputError,
    PipelineError,
    RngStream,
    StreamFamily,
)
from adamcmc.models import DwpParams, TimeSeries
from adamcmc.reporting import (
    build_report,
    compare_figure,
    compare_reports,
    count_density_peaks,
    count_regime_switches,
    marginal_densities,
    marginal_figure,
    parameter_columns,
    trace_figure,
    trajectories_figure,
    write_figure,
)
from adamcmc.samplers import DaConfig, SamplerConfig, run_ada, run_da, run_mcwm, run_pmcmc
from adamcmc.smc import ParticleLikelihood, PfConfig
from adamcmc.surrogate import (
    GpFitConfig,
    GpModel,
    TrainingDataset,
    fit_gp,
    gp_holdout_diagnostics,
    trim_training_data,
)
from adamcmc.utils import safe_execute

logger = logging.getLogger(__name__)

ALGORITHMS = ('pmcmc', 'mcwm', 'da', 'ada')
CSV_FLOAT = '%.17g'


def _write_json(path: Path, payload: Dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_to_builtin))
    return path


def _to_builtin(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return str(value)


def _read_json(path: Path, prerequisite: str) -> Dict[str, Any]:
    if not path.exists():
        raise PipelineError(f"missing {path}; run '{prerequisite}' first")
    return json.loads(path.read_text())


class PipelineManager:
    """설정 하나로 파이프라인 단계를 실행하고 산출물을 디스크에 인계하는 클래스"""

    def __init__(self, config: PipelineConfig, force: bool = False, show_progress: bool = True):
        """
        Args:
            config: 검증된 PipelineConfig
            force: 기존 산출물 덮어쓰기 허용
            show_progress: 체인 진행 표시 (tqdm)
        """
        self.config = config.validate()
        self.force = force
        self.show_progress = show_progress
        self.root = Path(config.out)
        self.model = config.build_model()
        self.parameter_names = list(getattr(self.model, 'parameter_names', []))

    # ------------------------------------------------------------------
    # 경로 / 공통 헬퍼
    # ------------------------------------------------------------------

    def _stage_dir(self, *parts: str) -> Path:
        path = self.root.joinpath(*parts)
        path.mkdir(parents=True, exist_ok=True)
        return path

    def _claim(self, *paths: Path) -> None:
        """--force 없이 기존 산출물을 덮어쓰려 하면 PipelineError"""
        if self.force:
            return
        existing = [str(p) for p in paths if p.exists()]
        if existing:
            raise PipelineError(f"refusing to overwrite {', '.join(existing)} (use --force)")

    @property
    def time_unit(self) -> str:
        return 'minutes' if self.config.model == 'dwp-sde' else 'seconds'

    def _x0(self) -> float:
        if self.config.data.x0 is not None:
            return float(self.config.data.x0)
        return float(self.model.default_x0(self.config.data.true_theta))

    def load_data(self) -> Optional[TimeSeries]:
        if self.config.model == 'toy':
            return None
        path = self.root / 'data.csv'
        if not path.exists():
            raise PipelineError(f"missing {path}; run 'simulate' first")
        meta = _read_json(self.root / 'data.json', 'simulate')
        return TimeSeries.from_csv(path, x0=float(meta.get('x0', self._x0())))

    def build_likelihood(self, data: Optional[TimeSeries]):
        if self.config.model == 'toy':
            return self.model.likelihood()
        pf = self.config.pf
        cfg = PfConfig(n_particles=pf.n_particles, n_replicates=pf.n_replicates,
                       resampling=pf.resampling, euler_substeps=self.config.data.n_substeps)
        return ParticleLikelihood(self.model, data, cfg, workers=pf.workers)

    @staticmethod
    def likelihood_warnings(likelihood) -> List[str]:
        """파티클 필터 붕괴 요약 (리포트 warnings 항목)"""
        if isinstance(likelihood, ParticleLikelihood):
            message = likelihood.collapse_warning()
            if message:
                return [message]
        return []

    # ------------------------------------------------------------------
    # simulate
    # ------------------------------------------------------------------

    def cmd_simulate(self, input_csv: Optional[Union[str, Path]] = None) -> TimeSeries:
        """
        합성 데이터 생성 (또는 --input CSV 복사) 후 data.csv + data.json 기록

        Raises:
            PipelineError: toy 모델(데이터 없음) 또는 덮어쓰기 충돌
        """
        if self.config.model == 'toy':
            raise PipelineError("the toy target has an analytic likelihood and no dataset to simulate")
        data_cfg = self.config.data
        out_csv, out_meta = self.root / 'data.csv', self.root / 'data.json'
        self._claim(out_csv, out_meta)
        self.root.mkdir(parents=True, exist_ok=True)
        x0 = self._x0()

        source = input_csv or data_cfg.input
        if source:
            series = TimeSeries.from_csv(source, x0=x0)
            meta = {'source': str(source)}
            logger.info(f"Ingested {len(series)} observations from {source}")
        else:
            if data_cfg.T < 1:
                raise InvalidInputError("data.T must be >= 1")
            rng = RngStream(self.config.seeds.data)
            series = self.model.simulate(data_cfg.true_theta, data_cfg.T, rng, x0=x0, dT=data_cfg.dT)
            meta = {'source': 'simulated', 'true_theta': list(data_cfg.true_theta),
                    'seed': self.config.seeds.data}
            logger.info(f"Simulated {len(series)} observations from {self.config.model}")

        series.to_csv(out_csv)
        meta.update({'model': self.config.model, 'T': len(series), 'x0': x0,
                     'format_version': FORMAT_VERSION})
        if self.config.model == 'dwp-sde':
            meta['density_peaks'] = safe_execute(lambda: count_density_peaks(series.values), None,
                                                 "Error counting density peaks")
        _write_json(out_meta, meta)
        self.config.write_resolved(self.root)
        return series

    # ------------------------------------------------------------------
    # harvest
    # ------------------------------------------------------------------

    def cmd_harvest(self) -> Dict[str, Any]:
        """MCWM 실행으로 D, D~, 최종 적응 공분산 수집"""
        s = self.config.sampler
        out = self._stage_dir('harvest')
        files = [out / 'D.csv', out / 'D_tilde.csv', out / 'chain.csv', out / 'harvest.json']
        self._claim(*files)
        data = self.load_data()
        likelihood = self.build_likelihood(data)
        cfg = SamplerConfig(iterations=s.harvest_iterations, start=tuple(s.start), burnin=s.harvest_burnin,
                            target_acceptance=s.target_acceptance, adapt=True,
                            adapt_warmup=s.adapt_warmup, initial_scale=s.initial_scale,
                            harvest_rows=s.harvest_rows, show_progress=self.show_progress)
        streams = StreamFamily(self.config.seeds.harvest)
        result, dataset = run_mcwm(likelihood, self.config.prior_spec(), cfg, streams,
                                   self.parameter_names, harvest=True)

        d_frame, d_tilde = dataset.to_frames()
        d_frame.to_csv(files[0], index=False, float_format=CSV_FLOAT)
        d_tilde.to_csv(files[1], index=False, float_format=CSV_FLOAT)
        chain = result.to_frame()
        chain.to_csv(files[2], index=False, float_format=CSV_FLOAT)

        report = build_report(result, self.time_unit, self.likelihood_warnings(likelihood))
        warnings = list(report.warnings)
        summary = {
            'format_version': FORMAT_VERSION,
            'rows': len(dataset),
            'final_covariance': result.final_covariance,
            'last_state': result.samples[-1],
            'parameter_names': result.parameter_names,
            'report': report.to_dict(),
            'warnings': warnings,
        }
        _write_json(files[3], summary)
        self.config.write_resolved(out)
        logger.info(f"Harvest wrote {len(dataset)} rows to {out}")
        return summary

    def load_harvest(self) -> TrainingDataset:
        out = self.root / 'harvest'
        d_path, d_tilde_path = out / 'D.csv', out / 'D_tilde.csv'
        if not d_path.exists():
            raise PipelineError(f"missing {d_path}; run 'harvest' first")
        d_tilde = pd.read_csv(d_tilde_path) if d_tilde_path.exists() else None
        return TrainingDataset.from_frames(pd.read_csv(d_path), d_tilde)

    # ------------------------------------------------------------------
    # fit
    # ------------------------------------------------------------------

    def cmd_fit(self) -> Dict[str, Any]:
        """trim -> GP 적합(보류 집합 진단) -> 케이스 라벨링 -> 선택 모델 적합"""
        f = self.config.fit
        out = self._stage_dir('fit')
        files = [out / 'model.json', out / 'fit_report.json', out / 'labeled_cases.csv',
                 out / 'selector_assessment.csv']
        self._claim(*files)
        harvest = self.load_harvest().finite_rows()
        if len(harvest) == 0:
            raise PipelineError("harvest contains no finite log-likelihood rows; rerun 'harvest'")
        streams = StreamFamily(self.config.seeds.fit)

        trimmed = trim_training_data(harvest, f.trim_fraction)
        perm = np.random.default_rng(self.config.seeds.fit).permutation(len(trimmed))
        n_hold = int(np.floor(f.holdout_fraction * len(trimmed)))
        holdout, train = trimmed.subset(np.sort(perm[:n_hold])), trimmed.subset(np.sort(perm[n_hold:]))
        gp_cfg = GpFitConfig(restarts=f.restarts, max_fit_rows=f.max_fit_rows,
                             seed=self.config.seeds.fit, workers=self.config.pf.workers)
        gp_train = fit_gp(train, gp_cfg)
        diagnostics = gp_holdout_diagnostics(gp_train, holdout)
        hp = gp_train.hyperparams
        gp = GpModel.from_hyperparams(trimmed, hp.signal_variance, hp.length_scales, hp.nugget_variance)

        warnings = []
        rmse = diagnostics.get('rmse')
        if rmse is not None and rmse > f.rmse_threshold:
            message = f"surrogate held-out RMSE {rmse:.3f} exceeds threshold {f.rmse_threshold}"
            logger.warning(message)
            warnings.append(message)

        labels = label_training_cases(harvest, gp, streams.gp_draw)
        selector = fit_selector(f.selector, labels, max_depth=f.tree_max_depth,
                                min_leaf=f.tree_min_leaf, class_weighting=f.class_weighting)
        assessment = assess_selector(selector, labels, streams.case_selection)
        coin = safe_execute(lambda: fit_biased_coin(labels).probabilities(), None,
                            "Error estimating case probabilities")

        container = {
            'format_version': FORMAT_VERSION,
            'model': self.config.model,
            'parameter_names': list(harvest.parameter_names),
            'gp': gp.to_dict(),
            'selector': selector.to_dict(),
        }
        _write_json(files[0], container)
        labels.to_frame().to_csv(files[2], index=False, float_format=CSV_FLOAT)
        assessment['table'].to_csv(files[3], index=False)
        report = {
            'format_version': FORMAT_VERSION,
            'training_rows': len(harvest),
            'trimmed_rows': len(trimmed),
            'gp_hyperparams': gp.hyperparams.to_dict(),
            'gp_holdout': diagnostics,
            'case_counts': labels.counts(),
            'coin_probabilities': coin,
            'selector': f.selector,
            'selector_accuracy_pct': assessment['accuracy'],
            'majority_baseline_pct': assessment['majority_baseline'],
            'assumption_holds': assessment['table'].to_dict(orient='records'),
            'warnings': warnings,
        }
        _write_json(files[1], report)
        self.config.write_resolved(out)
        return report

    def load_fit(self, need_selector: bool = False):
        container = _read_json(self.root / 'fit' / 'model.json', 'fit')
        if container.get('format_version') != FORMAT_VERSION:
            raise PipelineError(f"model container format {container.get('format_version')} "
                                f"is not supported (expected {FORMAT_VERSION})")
        gp = GpModel.from_dict(container['gp'])
        selector = selector_from_dict(container['selector']) if need_selector else None
        return gp, selector

    # ------------------------------------------------------------------
    # run
    # ------------------------------------------------------------------

    def cmd_run(self, algorithm: str) -> Dict[str, Any]:
        """
        지정 샘플러 실행 후 체인 CSV, JSON 리포트, 주변 밀도 CSV, 그림 JSON 기록

        Raises:
            PipelineError: da/ada에 필요한 harvest/fit 산출물이 없음
        """
        if algorithm not in ALGORITHMS:
            raise InvalidInputError(f"algorithm must be one of {ALGORITHMS}, got '{algorithm}'")
        out = self._stage_dir('runs', algorithm)
        files = [out / 'chain.csv', out / 'report.json', out / 'marginals.csv']
        self._claim(*files)
        data = self.load_data()
        likelihood = self.build_likelihood(data)
        prior = self.config.prior_spec()
        streams = StreamFamily(self.config.seeds.run)
        s, d = self.config.sampler, self.config.da
        warnings: List[str] = []

        if algorithm in ('pmcmc', 'mcwm'):
            cfg = SamplerConfig(iterations=s.iterations, start=tuple(s.start), burnin=s.burnin,
                                target_acceptance=s.target_acceptance, adapt=True, adapt_until=s.burnin,
                                adapt_warmup=s.adapt_warmup, initial_scale=s.initial_scale,
                                show_progress=self.show_progress)
            if algorithm == 'pmcmc':
                result = run_pmcmc(likelihood, prior, cfg, streams, self.parameter_names)
            else:
                result, _ = run_mcwm(likelihood, prior, cfg, streams, self.parameter_names, harvest=False)
        else:
            harvest = _read_json(self.root / 'harvest' / 'harvest.json', 'harvest')
            gp, selector = self.load_fit(need_selector=(algorithm == 'ada'))
            start = harvest['last_state'] if d.start_from_harvest else s.start
            cfg = SamplerConfig(iterations=d.iterations, start=tuple(start), burnin=d.burnin,
                                adapt=False, show_progress=self.show_progress)
            da_cfg = DaConfig(beta_mh=d.beta_mh, refresh_second_stage=d.refresh_second_stage,
                              wide_scale=d.wide_scale, selector=selector)
            cov = np.asarray(harvest['final_covariance'], dtype=float)
            runner = run_ada if algorithm == 'ada' else run_da
            result = runner(likelihood, gp, prior, cov, cfg, da_cfg, streams, self.parameter_names)
        warnings.extend(self.likelihood_warnings(likelihood))

        chain = result.to_frame()
        chain.to_csv(files[0], index=False, float_format=CSV_FLOAT)
        report = build_report(result, self.time_unit, warnings)
        report.write_json(files[1])
        densities = safe_execute(lambda: marginal_densities(chain), None, "Error computing marginal densities")
        if densities is not None:
            densities.to_csv(files[2], index=False, float_format=CSV_FLOAT)
            write_figure(marginal_figure(densities), out / 'marginals.plotly.json')
        write_figure(trace_figure(chain), out / 'trace.plotly.json')
        self.config.write_resolved(out)
        for line in report.summary_lines():
            logger.info(line)
        return report.to_dict()

    # ------------------------------------------------------------------
    # compare
    # ------------------------------------------------------------------

    def cmd_compare(self, run_dirs: Sequence[Union[str, Path]]) -> Dict[str, Any]:
        """
        여러 실행 디렉터리의 리포트를 모아 speed-up / PF 감소 배율 요약

        Raises:
            PipelineError: 실행이 2개 미만이거나 설정이 호환되지 않음
        """
        dirs = [Path(p) for p in run_dirs]
        if len(dirs) < 2:
            raise PipelineError("compare needs at least two run directories")
        reports, configs = {}, {}
        for path in dirs:
            label = path.name if path.name not in reports else f"{path.parent.name}/{path.name}"
            reports[label] = _read_json(path / 'report.json', 'run')
            configs[label] = _read_json(path / 'config.resolved.json', 'run')
        mismatched = _mismatched_fields(configs)
        if mismatched:
            raise PipelineError(f"runs are not comparable; mismatched fields: {', '.join(mismatched)}")

        out = self._stage_dir('compare')
        files = [out / 'compare.csv', out / 'compare.json']
        self._claim(*files)
        table = compare_reports(reports)
        table.to_csv(files[0], index=False)
        summary = {'format_version': FORMAT_VERSION, 'runs': table.to_dict(orient='records')}
        _write_json(files[1], summary)
        write_figure(compare_figure(table), out / 'compare.plotly.json')
        return summary

    # ------------------------------------------------------------------
    # posterior predictive
    # ------------------------------------------------------------------

    def cmd_posterior_predictive(self, chain_path: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
        """
        체인의 고밀도 영역(로그 우도 상위 비율)에서 파라미터를 균등 추출해 전방 시뮬레이션
        """
        if self.config.model == 'toy':
            raise PipelineError("the toy target has no forward model to simulate")
        p = self.config.predict
        chain_path = Path(chain_path) if chain_path else self._default_chain()
        chain = pd.read_csv(chain_path)
        if 'burnin' in chain.columns:
            chain = chain[~chain['burnin'].astype(bool)]
        if chain.empty:
            raise PipelineError(f"chain {chain_path} has no post-burnin rows")
        names = parameter_columns(chain)
        ranked = chain.sort_values('loglik', ascending=False, kind='stable')
        n_top = max(1, int(np.ceil(p.high_density_fraction * len(ranked))))
        pool = ranked.iloc[:n_top][names].to_numpy(float)

        out = self._stage_dir('predict')
        files = [out / 'trajectories.csv', out / 'histogram.csv', out / 'predict.json']
        self._claim(*files)
        data = self.load_data()
        T = p.T or len(data)
        dT = float(np.median(data.intervals())) if data is not None and len(data) else self.config.data.dT
        x0 = data.x0 if data is not None else self._x0()

        base = RngStream(self.config.seeds.predict)
        picks = base.generator.integers(0, len(pool), size=p.n_draws)
        streams = base.spawn(p.n_draws)
        frames, switches = [], []
        for i, (idx, rng) in enumerate(zip(picks, streams)):
            theta = pool[idx]
            series = self.model.simulate(theta, T, rng, x0=x0, dT=dT)
            frame = series.to_frame()
            frame.insert(0, 'draw', i)
            frames.append(frame)
            if self.config.model == 'dwp-sde':
                midpoint = DwpParams.from_theta(theta, A=self.config.data.A, g=self.config.data.g).c
                switches.append(count_regime_switches(series.values, midpoint))
        trajectories = pd.concat(frames, ignore_index=True)
        trajectories.to_csv(files[0], index=False, float_format=CSV_FLOAT)

        counts, edges = np.histogram(trajectories['value'], bins=50)
        pd.DataFrame({'left': edges[:-1], 'right': edges[1:], 'count': counts}).to_csv(
            files[1], index=False, float_format=CSV_FLOAT)

        summary: Dict[str, Any] = {
            'format_version': FORMAT_VERSION,
            'chain': str(chain_path),
            'n_draws': p.n_draws,
            'T': T,
            'simulated_mean': float(trajectories['value'].mean()),
            'data_mean': float(np.mean(data.values)) if data is not None else None,
        }
        if switches:
            c_hat = float(np.exp(np.median(pool[:, 2])))
            summary['regime_switches'] = {
                'mean_simulated': float(np.mean(switches)),
                'per_draw': switches,
                'data': count_regime_switches(data.values, c_hat) if data is not None else None,
            }
        _write_json(files[2], summary)
        write_figure(trajectories_figure(trajectories, data.to_frame() if data is not None else None),
                     out / 'trajectories.plotly.json')
        self.config.write_resolved(out)
        return summary

    def _default_chain(self) -> Path:
        for algorithm in ('ada', 'da', 'pmcmc', 'mcwm'):
            path = self.root / 'runs' / algorithm / 'chain.csv'
            if path.exists():
                return path
        raise PipelineError("no chain found; run 'run' first or pass --chain")

    # ------------------------------------------------------------------
    # pipeline
    # ------------------------------------------------------------------

    def run_pipeline(self, input_csv: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
        """simulate -> harvest -> fit -> run (da.algorithms) -> compare"""
        summary: Dict[str, Any] = {}
        if self.config.model != 'toy':
            self.cmd_simulate(input_csv)
        summary['harvest'] = {k: v for k, v in self.cmd_harvest().items() if k in ('rows', 'warnings')}
        summary['fit'] = {k: v for k, v in self.cmd_fit().items()
                          if k in ('gp_holdout', 'case_counts', 'selector_accuracy_pct', 'warnings')}
        run_dirs = []
        for algorithm in self.config.da.algorithms:
            summary[algorithm] = self.cmd_run(algorithm)['metrics']
            run_dirs.append(self.root / 'runs' / algorithm)
        if len(run_dirs) >= 2:
            summary['compare'] = self.cmd_compare(run_dirs)
        return summary


COMPARE_KEYS = (('model',), ('data', 'T'), ('pf', 'n_particles'), ('pf', 'n_replicates'),
                ('seeds', 'data'))


def _mismatched_fields(configs: Dict[str, Dict[str, Any]]) -> List[str]:
    mismatched = []
    for keys in COMPARE_KEYS:
        values = set()
        for cfg in configs.values():
            node: Any = cfg
            for k in keys:
                node = node.get(k) if isinstance(node, dict) else None
            values.add(json.dumps(node, sort_keys=True))
        if len(values) > 1:
            mismatched.append('.'.join(keys))
    return mismatched
