"""
명령줄 진입점: simulate / harvest / fit / run / compare / predict / pipeline
"""

from typing import List, Optional
import argparse
import json
import logging
import sys

from adamcmc.config import MODEL_CHOICES, load_config
from adamcmc.core import AdaMcmcError
from adamcmc.pipeline import ALGORITHMS, PipelineManager
from adamcmc.utils import set_log_level

logger = logging.getLogger(__name__)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', help='TOML run configuration')
    parser.add_argument('--model', choices=MODEL_CHOICES, help='model defaults to use (overrides the file)')
    parser.add_argument('--seed', type=int, help='base seed; stage seeds become seed, seed+1, ...')
    parser.add_argument('--out', help='run directory (default from config)')
    parser.add_argument('--workers', type=int, help='threads for particle-filter replicates')
    parser.add_argument('--force', action='store_true', help='overwrite existing artifacts')
    parser.add_argument('--verbose', action='store_true', help='debug logging')
    parser.add_argument('--quiet', action='store_true', help='warnings only, no progress bars')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='adamcmc',
        description='Delayed-acceptance MCMC with Gaussian-process surrogate likelihoods',
    )
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('simulate', help='simulate (or ingest) a dataset')
    _add_common(p)
    p.add_argument('--input', help='two-column time,value CSV to use instead of simulating')

    p = sub.add_parser('harvest', help='collect GP training data with MCWM')
    _add_common(p)

    p = sub.add_parser('fit', help='fit the GP surrogate and the case selector')
    _add_common(p)

    p = sub.add_parser('run', help='run a sampler')
    _add_common(p)
    p.add_argument('algorithm', choices=ALGORITHMS)

    p = sub.add_parser('compare', help='compare two or more run directories')
    _add_common(p)
    p.add_argument('runs', nargs='+', help='run directories containing report.json')

    p = sub.add_parser('predict', help='posterior predictive forward simulations')
    _add_common(p)
    p.add_argument('--chain', help='chain CSV (default: latest run under --out)')

    p = sub.add_parser('pipeline', help='simulate -> harvest -> fit -> run -> compare')
    _add_common(p)
    p.add_argument('--input', help='two-column time,value CSV to use instead of simulating')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    set_log_level(verbose=args.verbose, quiet=args.quiet)
    try:
        config = load_config(args.config, model=args.model)
        config = config.with_overrides(seed=args.seed, out=args.out, workers=args.workers)
        manager = PipelineManager(config, force=args.force, show_progress=not args.quiet)

        if args.command == 'simulate':
            series = manager.cmd_simulate(args.input)
            result = {'observations': len(series), 'out': str(manager.root / 'data.csv')}
        elif args.command == 'harvest':
            summary = manager.cmd_harvest()
            result = {'rows': summary['rows'], 'warnings': summary['warnings']}
        elif args.command == 'fit':
            report = manager.cmd_fit()
            result = {k: report[k] for k in ('gp_holdout', 'case_counts', 'coin_probabilities',
                                             'selector_accuracy_pct', 'warnings')}
        elif args.command == 'run':
            result = manager.cmd_run(args.algorithm)['metrics']
        elif args.command == 'compare':
            result = manager.cmd_compare(args.runs)
        elif args.command == 'predict':
            result = manager.cmd_posterior_predictive(args.chain)
        else:
            result = manager.run_pipeline(args.input)
    except AdaMcmcError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2

    if not args.quiet:
        print(json.dumps(result, indent=2, default=str))
    return 0


if __name__ == '__main__':
    sys.exit(main())
