from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from .cache import EvictionRecord, Outcome, ProxyCache, write_eviction_log
from .catalog import Catalog, generate_catalog, load_catalog
from .config import SimConfig, config_record
from .exceptions import CacheInvariantError, ConfigurationError, ParseError, ValidationError, VodCacheError
from .metrics import (REPORT_COLUMNS, MetricsAccumulator, SimReport, average_reports, report_row,
                      write_report_json, write_reports_csv)
from .policies import GreedyDualSizePolicy, LfudaPolicy, PolicyConfig, PolicyKind, RankValuePolicy, make_policy
from .workload import SelectionModel, Trace, generate_trace, load_trace, validate_trace

__all__ = [
    'SWEEP_AXES',
    'COMPARE_METRICS',
    'SimResult',
    'SweepCell',
    'ComparisonRow',
    'Replicates',
    'prepare_inputs',
    'build_catalog',
    'build_trace',
    'simulate',
    'simulate_config',
    'run_simulation',
    'apply_axis',
    'run_sweep',
    'sweep_rows',
    'compare',
    'run_replicates',
    'write_run',
    'load_run',
    'write_sweep_csv',
    'write_comparison_csv',
]

logger = logging.getLogger(__name__)

SWEEP_AXES = ('capacity_fraction', 'alpha', 'lambda', 'policy')
COMPARE_METRICS = ('hit_ratio', 'byte_hit_ratio', 'byte_volume_ratio', 'latency_mean_s', 'latency_p95_s')

# the popularity estimator is re-checked every this many events in debug mode
_ESTIMATOR_CHECK_INTERVAL = 1000


@dataclass
class SimResult:
    """Outcome of one simulation: the report plus what is needed to audit and compare it."""
    report: SimReport
    trace_digest: str
    policy: str
    capacity_bytes: int
    eviction_log: List[EvictionRecord] = field(default_factory=list)
    outcomes: List[Outcome] = field(default_factory=list)


@dataclass(frozen=True)
class SweepCell:
    axis_values: Dict[str, Any]
    report: Optional[SimReport] = None
    trace_digest: str = ''
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class ComparisonRow:
    label: str
    baseline: str
    values: Dict[str, float]
    deltas: Dict[str, float]
    relative_pct: Dict[str, float]


@dataclass(frozen=True)
class Replicates:
    average: SimReport
    per_seed: Dict[int, SimReport]


def prepare_inputs(config: SimConfig) -> Tuple[Catalog, Trace]:
    """
    Loads or generates the catalog and the trace of a config. The catalog uses ``config.seed``, the trace
    ``config.seed + 1`` and a shuffled rank order ``config.seed + 2``.

    :param config: Run configuration.
    :return: (catalog, trace), the trace fully materialized.
    """
    catalog = build_catalog(config)
    return catalog, build_trace(config, catalog)


def build_catalog(config: SimConfig) -> Catalog:
    source = config.catalog
    if source.path is not None:
        return load_catalog(source.path)
    return generate_catalog(source.num_videos, source.num_servers, size_dist=source.size_dist,
                            server_dist=source.server_dist, seed=config.seed, bitrate_bps=source.bitrate_bps)


def build_trace(config: SimConfig, catalog: Catalog) -> Trace:
    workload = config.workload
    if workload.path is not None:
        return load_trace(workload.path)
    selection = SelectionModel.for_catalog(catalog, alpha=workload.alpha, shuffle=workload.shuffle_ranks,
                                           seed=config.seed + 2)
    return generate_trace(catalog, workload.arrival, selection, config.session,
                          num_buckets=workload.num_buckets or 0, seed=config.seed + 1,
                          num_requests=workload.num_requests)


class _PolicyMonitor:
    """Debug-mode checks of policy state that the cache itself does not see."""

    def __init__(self, policy, cache: ProxyCache):
        self.policy = policy
        self.cache = cache
        self.inflation = getattr(policy, 'inflation', 0.0)

    def after_event(self, index: int, outcome: Outcome):
        policy = self.policy
        if isinstance(policy, RankValuePolicy) and index % _ESTIMATOR_CHECK_INTERVAL == 0:
            if not policy.estimator.is_consistent():
                raise CacheInvariantError(f"event {index}: popularity histogram is not non-increasing")
        if not outcome.evicted:
            return
        if isinstance(policy, GreedyDualSizePolicy):
            if policy.inflation < self.inflation:
                raise CacheInvariantError(f"event {index}: inflation dropped from {self.inflation} "
                                          f"to {policy.inflation}")
            self.inflation = policy.inflation
        if isinstance(policy, LfudaPolicy) and self.cache.entries:
            lowest = min(entry.stored_key for entry in self.cache.entries.values())
            if policy.cache_age > lowest:
                raise CacheInvariantError(f"event {index}: cache age {policy.cache_age} exceeds the lowest "
                                          f"resident key {lowest}")


def simulate(trace: Trace, catalog: Catalog, policy_config: PolicyConfig, capacity_bytes: int,
             hit_latency_s: float = 0.0, debug: bool = False, log_evictions: bool = False,
             record_outcomes: bool = False) -> SimResult:
    """
    Replays a trace through a cache.

    :param trace: Trace in timestamp order.
    :param catalog: Catalog the trace refers to.
    :param policy_config: Replacement policy to use. A fresh policy is built for this run.
    :param capacity_bytes: Cache capacity.
    :param hit_latency_s: Latency charged to hits.
    :param debug: Check cache and policy invariants after every event.
    :param log_evictions: Keep the eviction log in the result.
    :param record_outcomes: Keep the per-event ``Outcome`` sequence in the result.
    :return: SimResult.
    """
    violations = validate_trace(trace, catalog)
    if violations:
        raise ValidationError(violations)

    policy = make_policy(policy_config, catalog)
    cache = ProxyCache(capacity_bytes, policy, debug=debug, log_evictions=log_evictions)
    metrics = MetricsAccumulator(hit_latency_s)
    monitor = _PolicyMonitor(policy, cache) if debug else None
    outcomes = []
    logger.info("simulating %d events with %s at %d bytes", len(trace), policy_config.kind.value, capacity_bytes)

    origin = {v.video_id: (v, catalog.server(v.server_id)) for v in catalog.videos}
    events = zip(trace.timestamps_ms.tolist(), trace.video_ids.tolist(), trace.bytes_requested.tolist())
    for index, (now_ms, video_id, nbytes) in enumerate(events, start=1):
        video, server = origin[video_id]
        outcome = cache.access(video, now_ms)
        metrics.record_event(outcome.hit, video, nbytes, server, cacheable=outcome.cached)
        if outcome.evicted:
            metrics.record_evictions(len(outcome.evicted))
        if monitor is not None:
            monitor.after_event(index, outcome)
        if record_outcomes:
            outcomes.append(outcome)

    report = metrics.finalize()
    logger.info("%s: hit ratio %.4f, byte hit ratio %.4f, %d evictions", policy_config.kind.value,
                report.hit_ratio, report.byte_hit_ratio, report.evictions)
    return SimResult(report=report, trace_digest=trace.digest(), policy=policy_config.kind.value,
                     capacity_bytes=capacity_bytes, eviction_log=cache.eviction_log, outcomes=outcomes)


def simulate_config(config: SimConfig, catalog: Catalog = None, trace: Trace = None) -> SimResult:
    """Runs a config end to end. Pre-built inputs are used as given, otherwise they are prepared first."""
    if catalog is None or trace is None:
        catalog, trace = prepare_inputs(config)
    capacity = config.cache.capacity_for(catalog.total_bytes)
    return simulate(trace, catalog, config.policy, capacity, hit_latency_s=config.cache.hit_latency_s,
                    debug=config.cache.debug, log_evictions=config.output.eviction_log)


def run_simulation(config: SimConfig) -> SimReport:
    return simulate_config(config).report


def apply_axis(config: SimConfig, axis: str, value) -> SimConfig:
    """
    Sets one sweep axis on a config. ``alpha`` moves the workload popularity only; the RV estimator keeps
    its own alpha.
    """
    if axis == 'capacity_fraction':
        return replace(config, cache=replace(config.cache, capacity_fraction=float(value), capacity_bytes=None))
    if axis == 'alpha':
        return replace(config, workload=replace(config.workload, alpha=float(value)))
    if axis == 'lambda':
        workload = config.workload
        return replace(config, workload=replace(workload, arrival=replace(workload.arrival, lam=float(value))))
    if axis == 'policy':
        return replace(config, policy=replace(config.policy, kind=PolicyKind.parse(value)))
    raise ConfigurationError(f"unknown sweep axis {axis!r}, expected one of {list(SWEEP_AXES)}")


def _input_key(config: SimConfig):
    return config.seed, config.catalog, config.workload, config.session


def _cell_error(e: Exception) -> str:
    if isinstance(e, VodCacheError):
        return f"{e.category} error: {e}"
    logger.debug("sweep cell raised %s", type(e).__name__, exc_info=e)
    return f"{type(e).__name__}: {e}"


def _run_cell(task) -> SweepCell:
    axis_values, config, catalog, trace = task
    try:
        result = simulate_config(config, catalog, trace)
    except Exception as e:
        return SweepCell(axis_values, error=_cell_error(e))
    return SweepCell(axis_values, report=result.report, trace_digest=result.trace_digest)


def run_sweep(base: SimConfig, axis: str, values: Sequence, policies: Sequence = None,
              processes: int = None) -> List[SweepCell]:
    """
    Runs one simulation per axis value, or per (policy, value) pair when ``policies`` is given. Cells that
    share catalog and workload settings share one materialized trace.

    :param base: Configuration every cell starts from.
    :param axis: One of ``SWEEP_AXES``.
    :param values: Axis values.
    :param policies: Optional policy kinds crossed with a numeric axis.
    :param processes: Worker processes; cells run sequentially unless this is above 1.
    :return: One SweepCell per cell in (policy, value) order. Failed cells carry ``error`` instead of a report.
    """
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"unknown sweep axis {axis!r}, expected one of {list(SWEEP_AXES)}")
    if policies and axis == 'policy':
        raise ConfigurationError("policies cannot be crossed with the policy axis")

    grid = [(None, value) for value in values] if not policies else \
        [(policy, value) for policy in policies for value in values]
    inputs = {}
    tasks, cells = [], {}
    for index, (policy, value) in enumerate(grid):
        axis_values = {axis: value} if policy is None else {'policy': str(policy), axis: value}
        try:
            config = base if policy is None else apply_axis(base, 'policy', policy)
            config = apply_axis(config, axis, value)
            key = _input_key(config)
            if key not in inputs:
                inputs[key] = prepare_inputs(config)
        except Exception as e:
            cells[index] = SweepCell(axis_values, error=_cell_error(e))
            continue
        catalog, trace = inputs[key]
        tasks.append((index, (axis_values, config, catalog, trace)))

    if processes is not None and processes > 1 and len(tasks) > 1:
        with Pool(processes) as pool:
            done = pool.map(_run_cell, [task for _, task in tasks], chunksize=1)
    else:
        done = [_run_cell(task) for _, task in tasks]
    cells.update({index: cell for (index, _), cell in zip(tasks, done)})

    ordered = [cells[index] for index in range(len(grid))]
    for cell in ordered:
        if cell.failed:
            warnings.warn(f"sweep cell {cell.axis_values} failed: {cell.error}")
    logger.info("sweep over %s: %d cells, %d failed", axis, len(ordered), sum(c.failed for c in ordered))
    return ordered


def sweep_rows(cells: Sequence[SweepCell]) -> List[dict]:
    rows = []
    for cell in cells:
        row = dict(cell.axis_values)
        row['status'] = 'failed' if cell.failed else 'ok'
        row['error'] = cell.error or ''
        row['trace_digest'] = cell.trace_digest
        if cell.report is not None:
            row.update(cell.report.as_dict())
        rows.append(row)
    return rows


def write_sweep_csv(cells: Sequence[SweepCell], path, axis: str) -> None:
    leading = ['policy', axis] if any('policy' in c.axis_values for c in cells) and axis != 'policy' else [axis]
    write_reports_csv(sweep_rows(cells), path, leading_columns=leading)


def compare(results: Mapping[str, SimResult], baseline: str) -> List[ComparisonRow]:
    """
    Metric deltas of every run against a baseline run.

    :param results: Runs by label, all over the same trace.
    :param baseline: Label of the baseline run.
    :return: One row per label, in the mapping's order, baseline included (its deltas are 0).
    """
    if len(results) < 2:
        raise ValidationError(["compare needs at least two reports"])
    if baseline not in results:
        raise ConfigurationError(f"baseline {baseline!r} is not among {sorted(results)}")
    digest = results[baseline].trace_digest
    mismatched = [f"{label} ran on trace {r.trace_digest[:12]}, baseline on {digest[:12]}"
                  for label, r in results.items() if r.trace_digest != digest]
    if mismatched:
        raise ValidationError(mismatched)

    base = results[baseline].report
    rows = []
    for label, result in results.items():
        values, deltas, relative = {}, {}, {}
        for metric in COMPARE_METRICS:
            value = getattr(result.report, metric)
            reference = getattr(base, metric)
            values[metric] = value
            deltas[metric] = value - reference
            relative[metric] = (value - reference) / reference * 100.0 if reference else math.nan
        rows.append(ComparisonRow(label, baseline, values, deltas, relative))
    return rows


def write_comparison_csv(rows: Sequence[ComparisonRow], path) -> None:
    records = []
    for row in rows:
        record = {'label': row.label, 'baseline': row.baseline}
        for metric in COMPARE_METRICS:
            record[metric] = row.values[metric]
            record[f'{metric}_delta'] = row.deltas[metric]
            record[f'{metric}_rel_pct'] = row.relative_pct[metric]
        records.append(record)
    columns = list(records[0]) if records else ['label', 'baseline']
    with Path(path).open('w', encoding='utf-8', newline='') as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator='\n')
        writer.writeheader()
        for record in records:
            writer.writerow({key: repr(v) if isinstance(v, float) else v for key, v in record.items()})


def run_replicates(config: SimConfig, seeds: Sequence[int]) -> Replicates:
    """Runs a config once per seed and averages the reports."""
    per_seed = {int(seed): run_simulation(replace(config, seed=int(seed))) for seed in seeds}
    return Replicates(average=average_reports(list(per_seed.values())), per_seed=per_seed)


def write_run(result: SimResult, config: SimConfig, directory, stem: str = 'run') -> Dict[str, Path]:
    """
    Writes ``<stem>.csv`` (one row: configuration then report), ``<stem>.json`` and, when the config asks
    for it, ``<stem>.evictions.csv``.

    :return: Written paths by kind.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    record = config_record(config)
    record['capacity_bytes'] = result.capacity_bytes
    record['trace_digest'] = result.trace_digest
    paths = {'csv': directory / f'{stem}.csv', 'json': directory / f'{stem}.json'}
    write_reports_csv([report_row(result.report, record)], paths['csv'], leading_columns=list(record))
    write_report_json({'config': record, 'report': result.report.as_dict()}, paths['json'])
    if config.output.eviction_log:
        paths['evictions'] = directory / f'{stem}.evictions.csv'
        write_eviction_log(result.eviction_log, paths['evictions'])
    return paths


def load_run(path) -> SimResult:
    """Reads back a ``write_run`` JSON document. The eviction log is not part of it."""
    path = Path(path)
    try:
        with path.open('r', encoding='utf-8') as fh:
            data = json.load(fh)
    except OSError as e:
        raise ParseError(f"cannot read report: {e.strerror}", path=path) from e
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, path=path, line=e.lineno) from e
    try:
        config, report = data['config'], data['report']
        report = SimReport(**{key: report[key] for key in REPORT_COLUMNS})
    except (KeyError, TypeError) as e:
        raise ParseError(f"not a run report: missing {e}", path=path) from e
    return SimResult(report=report, trace_digest=str(config.get('trace_digest', '')),
                     policy=str(config.get('policy', '')), capacity_bytes=int(config.get('capacity_bytes') or 0))
