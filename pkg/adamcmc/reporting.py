"""
실행 진단 리포트: 효율 지표, 케이스 통계, 사후 요약, 주변 밀도, plotly 그림 데이터

모든 비율은 체인 CSV와 같은 DataFrame(ChainResult.to_frame())에서 계산한다.
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union
import json
import logging

import numpy as np
import pandas as pd
import plotly.graph_objects as go
from plotly.subplots import make_subplots
from scipy.signal import find_peaks
from scipy.stats import gaussian_kde

from adamcmc.core import ChainResult, InvalidInputError, effective_sample_size
from adamcmc.utils import format_number, safe_divide, safe_execute, safe_percent

logger = logging.getLogger(__name__)

DIVERGENCE_WINDOW = 1000
DIVERGENCE_RATE = 0.01
EVENT_COLUMNS = ('iteration', 'loglik', 'loglik_source', 'stage1_passed', 'case', 'pf_calls',
                 'accepted', 'early_accept', 'branch', 'burnin')


def parameter_columns(df: pd.DataFrame) -> List[str]:
    return [c for c in df.columns if c not in EVENT_COLUMNS]


@dataclass
class DiagnosticsReport:
    """
    Attributes:
        algorithm: 'pmcmc' | 'mcwm' | 'da' | 'ada'
        metrics: 효율 지표 (시간 단위, 수락률, ESS, 분기/조기거부 비율, PF 호출 수)
        cases: 케이스별 통계 행 목록 (ADA)
        posterior: 파라미터별 사후 요약 행 목록
        warnings: 실행 중 발생한 경고 메시지
    """
    algorithm: str
    metrics: Dict[str, Any]
    cases: List[Dict[str, Any]] = field(default_factory=list)
    posterior: List[Dict[str, Any]] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def write_json(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, default=_json_default))
        return path

    def summary_lines(self) -> List[str]:
        m = self.metrics
        unit = m.get('time_unit', 'seconds')
        lines = [
            f"[{self.algorithm}] {m.get('iterations')} iterations",
            f"  time per 1000 iterations ({unit}): {format_number(m.get('time_per_1000'), 3)}",
            f"  acceptance: {format_number(m.get('acceptance_pct'))}%",
            f"  min ESS / {unit[:-1]}: {format_number(m.get('min_ess_per_time'), 3)}",
        ]
        if self.algorithm in ('da', 'ada'):
            lines.append(f"  MH branch: {format_number(m.get('mh_branch_pct'))}%  "
                         f"early rejections: {format_number(m.get('early_rejection_pct'))}%  "
                         f"second-stage PF calls: {m.get('second_stage_pf_calls')}")
        for row in self.cases:
            lines.append(f"  case {row['case']}: {format_number(row['pct_of_second_stage'])}% of second stages, "
                         f"P(PF | case) = {format_number(row['pf_called_pct'])}%")
        return lines


def _json_default(value: Any) -> Any:
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return str(value)


def efficiency_metrics(df: pd.DataFrame, wall_time: float, time_unit: str = 'seconds') -> Dict[str, Any]:
    """
    체인 DataFrame 기반 효율 지표

    Args:
        df: ChainResult.to_frame() 또는 같은 헤더의 체인 CSV
        wall_time: 초 단위 실행 시간
        time_unit: 'seconds' | 'minutes' (Ricker는 초, DWP는 분)
    """
    if time_unit not in ('seconds', 'minutes'):
        raise InvalidInputError(f"time_unit must be 'seconds' or 'minutes', got {time_unit}")
    n = len(df)
    if n == 0:
        raise InvalidInputError("cannot summarize an empty chain")
    elapsed = wall_time / 60.0 if time_unit == 'minutes' else wall_time

    post = df[~df['burnin'].astype(bool)] if 'burnin' in df.columns else df
    ess_values = {}
    for name in parameter_columns(df):
        ess_values[name] = safe_execute(lambda: effective_sample_size(post[name].to_numpy(float)),
                                        None, f"ESS failed for {name}")
    finite_ess = [v for v in ess_values.values() if v is not None]
    min_ess = min(finite_ess) if finite_ess else None

    branch = df['branch'].astype(str)
    da_rows = branch == 'da'
    n_da = int(da_rows.sum())
    stage1 = df['stage1_passed'].astype(bool)
    early_accepts = int(df['early_accept'].astype(bool).sum()) if 'early_accept' in df.columns else 0

    return {
        'iterations': n,
        'wall_time_seconds': float(wall_time),
        'time_unit': time_unit,
        'time_per_1000': safe_divide(elapsed * 1000.0, n),
        'acceptance_pct': safe_percent(int(df['accepted'].astype(bool).sum()), n),
        'ess': ess_values,
        'min_ess': min_ess,
        'min_ess_per_time': safe_divide(min_ess, elapsed),
        'mh_branch_pct': safe_percent(int((branch == 'mh').sum()), n),
        'early_rejection_pct': safe_percent(int((da_rows & ~stage1).sum()), n_da),
        'stage1_survivors': int((da_rows & stage1).sum()),
        'second_stage_pf_calls': int(df.loc[da_rows, 'pf_calls'].sum()),
        'total_pf_calls': int(df['pf_calls'].sum()),
        'early_accepts': early_accepts,
    }


def case_statistics(df: pd.DataFrame) -> List[Dict[str, Any]]:
    """케이스별 second-stage 비율, PF 호출 확률, 조기 수락/수락 수"""
    if 'case' not in df.columns:
        return []
    cases = pd.to_numeric(df['case'], errors='coerce')
    entered = cases.notna()
    n_entered = int(entered.sum())
    if n_entered == 0:
        return []
    rows = []
    for case in (1, 2, 3, 4):
        mask = cases == case
        n_case = int(mask.sum())
        rows.append({
            'case': case,
            'count': n_case,
            'pct_of_second_stage': safe_percent(n_case, n_entered),
            'pf_called_pct': safe_percent(int((mask & (df['pf_calls'] > 0)).sum()), n_case),
            'early_accepts': int((mask & df['early_accept'].astype(bool)).sum()),
            'accepted': int((mask & df['accepted'].astype(bool)).sum()),
        })
    return rows


def posterior_summary(df: pd.DataFrame) -> List[Dict[str, Any]]:
    post = df[~df['burnin'].astype(bool)] if 'burnin' in df.columns else df
    rows = []
    for name in parameter_columns(df):
        values = post[name].to_numpy(float)
        rows.append({
            'parameter': name,
            'mean': float(np.mean(values)),
            'sd': float(np.std(values, ddof=1)) if values.size > 1 else 0.0,
            'q2.5': float(np.quantile(values, 0.025)),
            'q97.5': float(np.quantile(values, 0.975)),
        })
    return rows


def divergence_warning(df: pd.DataFrame, label: str) -> Optional[str]:
    """최근 1000 반복 수락률 < 1% 이면 경고 문자열"""
    tail = df['accepted'].astype(bool).tail(DIVERGENCE_WINDOW)
    if len(tail) and tail.mean() < DIVERGENCE_RATE:
        message = (f"{label}: acceptance over the last {len(tail)} iterations is "
                   f"{100.0 * tail.mean():.2f}% (< 1%); the chain may be stuck")
        logger.warning(message)
        return message
    return None


def build_report(result: ChainResult, time_unit: str = 'seconds',
                 warnings: Optional[Sequence[str]] = None) -> DiagnosticsReport:
    df = result.to_frame()
    report = DiagnosticsReport(
        algorithm=result.algorithm,
        metrics=efficiency_metrics(df, result.wall_time, time_unit),
        cases=case_statistics(df),
        posterior=posterior_summary(df),
        warnings=list(warnings or []),
        extra={k: v for k, v in result.metadata.items()},
    )
    stuck = divergence_warning(df, result.algorithm)
    if stuck:
        report.warnings.append(stuck)
    return report


# ---------------------------------------------------------------------------
# 밀도 / 예측 진단
# ---------------------------------------------------------------------------

def marginal_densities(df: pd.DataFrame, grid_points: int = 200) -> pd.DataFrame:
    """burnin 이후 파라미터별 KDE (parameter, x, density)"""
    post = df[~df['burnin'].astype(bool)] if 'burnin' in df.columns else df
    frames = []
    for name in parameter_columns(df):
        values = post[name].to_numpy(float)
        if values.size < 2 or np.ptp(values) == 0:
            continue
        kde = gaussian_kde(values)
        pad = 0.1 * np.ptp(values)
        grid = np.linspace(values.min() - pad, values.max() + pad, grid_points)
        frames.append(pd.DataFrame({'parameter': name, 'x': grid, 'density': kde(grid)}))
    if not frames:
        return pd.DataFrame(columns=['parameter', 'x', 'density'])
    return pd.concat(frames, ignore_index=True)


def count_density_peaks(values: Sequence[float], grid_points: int = 512,
                        min_prominence: float = 0.05) -> int:
    """KDE 국소 최대 개수 (최대 밀도 대비 prominence 비율 이상만)"""
    values = np.asarray(values, dtype=float)
    if values.size < 2 or np.ptp(values) == 0:
        return 1
    kde = gaussian_kde(values)
    grid = np.linspace(values.min(), values.max(), grid_points)
    dens = kde(grid)
    peaks, _ = find_peaks(np.concatenate([[0.0], dens, [0.0]]), prominence=min_prominence * dens.max())
    return int(len(peaks))


def count_regime_switches(values: Sequence[float], midpoint: float) -> int:
    """궤적이 우물 중간점을 가로지른 횟수"""
    side = np.sign(np.asarray(values, dtype=float) - midpoint)
    side = side[side != 0]
    if side.size < 2:
        return 0
    return int(np.sum(side[1:] != side[:-1]))


def compare_reports(reports: Dict[str, Dict[str, Any]], baseline: Optional[str] = None) -> pd.DataFrame:
    """
    여러 실행 리포트 비교: 실행 시간, 기준 대비 speed-up, PF 호출 감소 배율

    Args:
        reports: 실행 라벨 -> DiagnosticsReport.to_dict()
        baseline: 기준 실행 라벨 (기본: algorithm이 'da'인 첫 실행, 없으면 첫 실행)
    """
    if len(reports) < 2:
        raise InvalidInputError("compare needs at least two runs")
    labels = list(reports)
    if baseline is None:
        baseline = next((k for k in labels if reports[k]['algorithm'] == 'da'), labels[0])
    base = reports[baseline]['metrics']
    rows = []
    for label in labels:
        m = reports[label]['metrics']
        rows.append({
            'run': label,
            'algorithm': reports[label]['algorithm'],
            'wall_time_seconds': m['wall_time_seconds'],
            'time_per_1000': m['time_per_1000'],
            'time_unit': m['time_unit'],
            'acceptance_pct': m['acceptance_pct'],
            'second_stage_pf_calls': m['second_stage_pf_calls'],
            'speed_up_vs_baseline': safe_divide(base['wall_time_seconds'], m['wall_time_seconds']),
            'pf_reduction_vs_baseline': safe_divide(base['second_stage_pf_calls'], m['second_stage_pf_calls']),
            'baseline': baseline,
        })
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# plotly 그림 (JSON으로만 기록, 렌더링하지 않음)
# ---------------------------------------------------------------------------

def marginal_figure(densities: pd.DataFrame, title: str = 'Marginal posterior densities') -> go.Figure:
    names = list(dict.fromkeys(densities['parameter']))
    fig = make_subplots(rows=max(len(names), 1), cols=1, subplot_titles=names or None,
                        vertical_spacing=0.05)
    for i, name in enumerate(names, start=1):
        sub = densities[densities['parameter'] == name]
        fig.add_trace(
            go.Scatter(x=sub['x'], y=sub['density'], name=name, line=dict(width=2)),
            row=i, col=1
        )
    fig.update_layout(title=title, height=250 * max(len(names), 1), showlegend=False)
    return fig


def trace_figure(df: pd.DataFrame, title: str = 'Trace plots') -> go.Figure:
    names = parameter_columns(df)
    fig = make_subplots(rows=max(len(names), 1), cols=1, subplot_titles=names or None,
                        shared_xaxes=True, vertical_spacing=0.03)
    for i, name in enumerate(names, start=1):
        fig.add_trace(
            go.Scatter(x=df['iteration'], y=df[name], name=name, line=dict(width=1)),
            row=i, col=1
        )
    fig.update_layout(title=title, height=200 * max(len(names), 1), showlegend=False)
    return fig


def compare_figure(table: pd.DataFrame) -> go.Figure:
    fig = make_subplots(rows=1, cols=2, subplot_titles=('Wall time (s)', 'Second-stage PF calls'))
    for algorithm, sub in table.groupby('algorithm', sort=True):
        fig.add_trace(go.Box(y=sub['wall_time_seconds'], name=algorithm), row=1, col=1)
        fig.add_trace(go.Box(y=sub['second_stage_pf_calls'], name=algorithm), row=1, col=2)
    fig.update_layout(title='Run comparison', showlegend=False)
    return fig


def trajectories_figure(trajectories: pd.DataFrame, data: Optional[pd.DataFrame] = None) -> go.Figure:
    fig = go.Figure()
    for draw, sub in trajectories.groupby('draw', sort=True):
        fig.add_trace(go.Scatter(x=sub['time'], y=sub['value'], mode='lines',
                                 line=dict(color='lightgray', width=1), showlegend=False))
    if data is not None:
        fig.add_trace(go.Scatter(x=data['time'], y=data['value'], name='data',
                                 line=dict(color='blue', width=1)))
    fig.update_layout(title='Posterior predictive trajectories', xaxis_title='time', yaxis_title='value')
    return fig


def write_figure(fig: go.Figure, path: Union[str, Path]) -> Optional[Path]:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return safe_execute(lambda: (path.write_text(fig.to_json()), path)[1], None,
                        f"Error writing figure {path.name}")
