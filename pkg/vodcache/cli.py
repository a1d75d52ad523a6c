import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from .catalog import save_catalog
from .config import load_config
from .exceptions import ConfigurationError, ParseError, ValidationError, VodCacheError
from .plotting import read_sweep_csv, sweep_view
from .simulation import (SWEEP_AXES, build_catalog, build_trace, compare, load_run, run_replicates, run_sweep,
                         simulate_config, write_comparison_csv, write_run, write_sweep_csv)
from .workload import save_trace, trace_stats

__all__ = ['EXIT_CODES', 'build_parser', 'main']

logger = logging.getLogger(__name__)

EXIT_CODES = {ConfigurationError: 2, ParseError: 3, ValidationError: 4}


def _common(parser: argparse.ArgumentParser):
    parser.add_argument('-c', '--config', help='TOML configuration file')
    parser.add_argument('--preset', help='Preset used when the config names none (default: standard)')
    parser.add_argument('-s', '--seed', type=int, help='Seed for catalog and trace generation')
    parser.add_argument('-v', '--verbose', action='store_true', help='Log at DEBUG level')


def _csv_list(text: str) -> List[str]:
    return [item.strip() for item in text.split(',') if item.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='vodcache', description='Trace-driven video proxy cache simulator')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('gen-catalog', help='Generate a video catalog')
    _common(p)
    p.add_argument('--num-videos', type=int)
    p.add_argument('--num-servers', type=int)
    p.add_argument('-o', '--output', help='Catalog JSON path (default: <output dir>/catalog.json)')

    p = sub.add_parser('gen-trace', help='Generate a request trace')
    _common(p)
    p.add_argument('--catalog', help='Catalog JSON to draw videos from')
    p.add_argument('--lam', type=float, help='Mean of the arrival model')
    p.add_argument('--alpha', type=float, help='Zipf-like exponent of video popularity')
    p.add_argument('--num-requests', type=int)
    p.add_argument('--num-buckets', type=int)
    p.add_argument('--no-session', action='store_true', help='Every request asks for the whole video')
    p.add_argument('--stats', action='store_true', help='Print trace statistics')
    p.add_argument('-o', '--output', help='Trace CSV path (default: <output dir>/trace.csv)')

    p = sub.add_parser('simulate', help='Replay a trace through one cache')
    _common(p)
    _run_options(p)
    p.add_argument('--eviction-log', action='store_true', help='Write the eviction log')
    p.add_argument('--debug', action='store_true', help='Check cache invariants after every event')
    p.add_argument('--seeds', type=_csv_list, help='Comma-separated seeds to average over')
    p.add_argument('--stem', default='run', help='Output file name stem (default: run)')

    p = sub.add_parser('sweep', help='Run one simulation per axis value')
    _common(p)
    _run_options(p)
    p.add_argument('--axis', choices=SWEEP_AXES, help='Axis to sweep (default: sweep.axis of the config)')
    p.add_argument('--values', type=_csv_list, help='Comma-separated axis values (default: sweep.values)')
    p.add_argument('--policies', type=_csv_list, help='Comma-separated policies crossed with the axis')
    p.add_argument('-j', '--processes', type=int, default=1, help='Worker processes (default: 1)')
    p.add_argument('-o', '--output', help='Sweep CSV path (default: <output dir>/sweep_<axis>.csv)')

    p = sub.add_parser('compare', help='Compare run reports against a baseline')
    _common(p)
    p.add_argument('reports', nargs='+', help='Run JSON documents, optionally as LABEL=PATH')
    p.add_argument('-b', '--baseline', required=True, help='Label of the baseline run')
    p.add_argument('-o', '--output', help='Comparison CSV path')

    p = sub.add_parser('plot', help='Draw a sweep CSV as a line chart')
    _common(p)
    p.add_argument('sweep', help='Sweep CSV')
    p.add_argument('-m', '--metric', default='hit_ratio')
    p.add_argument('--axis', help='x axis column (default: inferred)')
    p.add_argument('-o', '--output', help='Image path (default: <output dir>/<sweep stem>_<metric>.png)')
    return parser


def _run_options(parser: argparse.ArgumentParser):
    parser.add_argument('-p', '--policy', help='Replacement policy')
    parser.add_argument('--capacity-fraction', type=float)
    parser.add_argument('--capacity-bytes', type=int)
    parser.add_argument('--catalog', help='Catalog JSON instead of generating one')
    parser.add_argument('--trace', help='Trace CSV instead of generating one')
    parser.add_argument('--output-dir', help='Output directory')


def _overrides(args) -> dict:
    get = lambda name: getattr(args, name, None)
    overrides = {
        'seed': get('seed'),
        'catalog.num_videos': get('num_videos'),
        'catalog.num_servers': get('num_servers'),
        'catalog.path': get('catalog'),
        'workload.path': get('trace'),
        'workload.lam': get('lam'),
        'workload.alpha': get('alpha'),
        'workload.num_requests': get('num_requests'),
        'workload.num_buckets': get('num_buckets'),
        'cache.capacity_fraction': get('capacity_fraction'),
        'cache.capacity_bytes': get('capacity_bytes'),
        'policy.kind': get('policy'),
        'output.directory': get('output_dir'),
    }
    if get('no_session'):
        overrides['session.enabled'] = False
    if get('eviction_log'):
        overrides['output.eviction_log'] = True
    if get('debug'):
        overrides['cache.debug'] = True
    return overrides


def _load(args):
    return load_config(args.config, overrides=_overrides(args), preset=args.preset)


def _output_path(explicit: Optional[str], config, default_name: str) -> Path:
    if explicit:
        path = Path(explicit)
    else:
        path = config.output.resolved_directory() / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _cmd_gen_catalog(args) -> int:
    config = _load(args)
    catalog = build_catalog(replace(config, catalog=replace(config.catalog, path=None)))
    path = _output_path(args.output, config, 'catalog.json')
    save_catalog(catalog, path)
    print(f"{len(catalog)} videos, {len(catalog.servers)} servers, {catalog.total_bytes} bytes -> {path}")
    return 0


def _cmd_gen_trace(args) -> int:
    config = _load(args)
    catalog = build_catalog(config)
    trace = build_trace(replace(config, workload=replace(config.workload, path=None)), catalog)
    workload = config.workload
    path = _output_path(args.output, config, 'trace.csv')
    save_trace(trace, path)
    print(f"{len(trace)} events -> {path}")
    if args.stats:
        stats = trace_stats(trace, catalog, unit_s=workload.arrival.unit_s)
        for key, value in vars(stats).items():
            print(f"  {key}: {value}")
    return 0


def _print_report(label: str, report):
    print(f"{label}: requests={report.requests} hit_ratio={report.hit_ratio:.4f} "
          f"byte_hit_ratio={report.byte_hit_ratio:.4f} byte_volume_ratio={report.byte_volume_ratio:.4f} "
          f"latency_mean_s={report.latency_mean_s:.3f} evictions={report.evictions}")


def _cmd_simulate(args) -> int:
    config = _load(args)
    if args.seeds:
        try:
            seeds = [int(seed) for seed in args.seeds]
        except ValueError:
            raise ConfigurationError(f"--seeds must be integers, got {args.seeds}") from None
        replicates = run_replicates(config, seeds)
        for seed, report in replicates.per_seed.items():
            _print_report(f"seed {seed}", report)
        _print_report('average', replicates.average)
        return 0
    result = simulate_config(config)
    paths = write_run(result, config, config.output.resolved_directory(), stem=args.stem)
    _print_report(result.policy, result.report)
    for kind, path in paths.items():
        print(f"  {kind}: {path}")
    return 0


def _cmd_sweep(args) -> int:
    config = _load(args)
    axis = args.axis or config.sweep.axis
    if axis is None:
        raise ConfigurationError("sweep needs --axis or sweep.axis in the config")
    if args.values:
        values = args.values
    elif axis == config.sweep.axis and config.sweep.values:
        values = list(config.sweep.values)
    else:
        raise ConfigurationError(f"sweep needs --values or sweep.values for axis {axis!r}")
    if axis != 'policy':
        values = [_float(v, '--values') for v in values]
    policies = args.policies or list(config.sweep.policies) or None
    cells = run_sweep(config, axis, values, policies=policies, processes=args.processes)
    path = _output_path(args.output, config, f'sweep_{axis}.csv')
    write_sweep_csv(cells, path, axis)
    failed = sum(cell.failed for cell in cells)
    print(f"{len(cells)} cells ({failed} failed) -> {path}")
    return 0


def _float(text, flag: str) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{flag} must be numbers, got {text!r}") from None


def _cmd_compare(args) -> int:
    config = _load(args)
    results = {}
    for item in args.reports:
        label, sep, path = item.partition('=')
        if not sep:
            path = label
        result = load_run(path)
        results[label if sep else result.policy or Path(path).stem] = result
    rows = compare(results, args.baseline)
    for row in rows:
        deltas = ' '.join(f"{metric}={delta:+.4f}" for metric, delta in row.deltas.items())
        print(f"{row.label} vs {row.baseline}: {deltas}")
    if args.output:
        write_comparison_csv(rows, _output_path(args.output, config, 'comparison.csv'))
    return 0


def _cmd_plot(args) -> int:
    config = _load(args)
    path = _output_path(args.output, config, f'{Path(args.sweep).stem}_{args.metric}.png')
    sweep_view(read_sweep_csv(args.sweep), metric=args.metric, axis=args.axis, to_file=str(path))
    print(f"{args.metric} chart -> {path}")
    return 0


_COMMANDS = {
    'gen-catalog': _cmd_gen_catalog,
    'gen-trace': _cmd_gen_trace,
    'simulate': _cmd_simulate,
    'sweep': _cmd_sweep,
    'compare': _cmd_compare,
    'plot': _cmd_plot,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        return _COMMANDS[args.command](args)
    except VodCacheError as e:
        print(f"{e.category} error: {e}", file=sys.stderr)
        return next((code for cls, code in EXIT_CODES.items() if isinstance(e, cls)), 1)


if __name__ == '__main__':
    sys.exit(main())
