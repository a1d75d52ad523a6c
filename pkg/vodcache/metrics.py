from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, List, Mapping, Sequence

import numpy as np

from .catalog import ServerProfile, VideoMeta

__all__ = [
    'SimReport',
    'MetricsAccumulator',
    'REPORT_COLUMNS',
    'nearest_rank',
    'merge_accumulators',
    'average_reports',
    'report_row',
    'write_reports_csv',
    'write_report_json',
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimReport:
    """
    Metrics of one simulation run. ``byte_volume_ratio`` is bytes fetched from origin over bytes requested
    and may exceed 1 because misses fetch whole videos; ``byte_hit_ratio`` is its complement floored at 0.
    Latencies are in seconds.
    """
    requests: int = 0
    hits: int = 0
    hit_ratio: float = 0.0
    bytes_requested: int = 0
    bytes_from_server: int = 0
    byte_volume_ratio: float = 0.0
    byte_hit_ratio: float = 0.0
    latency_mean_s: float = 0.0
    latency_p50_s: float = 0.0
    latency_p95_s: float = 0.0
    evictions: int = 0
    non_cacheable: int = 0
    empty: bool = True

    def as_dict(self) -> dict:
        return asdict(self)


REPORT_COLUMNS = tuple(f.name for f in fields(SimReport))


def nearest_rank(sorted_samples: Sequence[float], percentile: float) -> float:
    """
    Nearest-rank percentile of already sorted samples.

    :param sorted_samples: Samples in ascending order.
    :param percentile: Percentile in (0, 100].
    :return: The sample at rank ceil(percentile / 100 * n), or 0.0 for no samples.
    """
    n = len(sorted_samples)
    if n == 0:
        return 0.0
    rank = max(1, int(math.ceil(percentile / 100.0 * n)))
    return float(sorted_samples[min(rank, n) - 1])


class MetricsAccumulator:
    """
    Running totals of a simulation. Hits cost ``hit_latency_s``; cacheable misses fetch the whole video from
    its origin, oversized (non-cacheable) misses only the requested bytes.
    """

    def __init__(self, hit_latency_s: float = 0.0):
        self.hit_latency_s = hit_latency_s
        self.requests = 0
        self.hits = 0
        self.bytes_requested = 0
        self.bytes_from_server = 0
        self.evictions = 0
        self.non_cacheable = 0
        self.latencies: List[float] = []

    def record_event(self, hit: bool, video: VideoMeta, bytes_requested: int, server: ServerProfile,
                     cacheable: bool = True):
        """
        Accounts one request.

        :param hit: Whether the cache served the request.
        :param video: Requested video.
        :param bytes_requested: Bytes the session asked for.
        :param server: Origin server of the video.
        :param cacheable: False when the video bypassed the cache for being larger than its capacity.
        """
        self.requests += 1
        self.bytes_requested += bytes_requested
        if hit:
            self.hits += 1
            self.latencies.append(self.hit_latency_s)
            return
        fetched = video.size_bytes if cacheable else bytes_requested
        if not cacheable:
            self.non_cacheable += 1
        self.bytes_from_server += fetched
        self.latencies.append(server.connect_time_s + fetched / server.bandwidth_Bps)

    def record_evictions(self, count: int):
        self.evictions += count

    def merge(self, other: 'MetricsAccumulator') -> 'MetricsAccumulator':
        self.requests += other.requests
        self.hits += other.hits
        self.bytes_requested += other.bytes_requested
        self.bytes_from_server += other.bytes_from_server
        self.evictions += other.evictions
        self.non_cacheable += other.non_cacheable
        self.latencies.extend(other.latencies)
        return self

    def finalize(self) -> SimReport:
        if self.requests == 0:
            return SimReport(evictions=self.evictions, empty=True)
        latencies = np.sort(np.asarray(self.latencies, dtype=np.float64))
        volume = self.bytes_from_server / self.bytes_requested if self.bytes_requested else 0.0
        return SimReport(
            requests=self.requests,
            hits=self.hits,
            hit_ratio=self.hits / self.requests,
            bytes_requested=self.bytes_requested,
            bytes_from_server=self.bytes_from_server,
            byte_volume_ratio=volume,
            byte_hit_ratio=max(0.0, 1.0 - volume),
            latency_mean_s=float(latencies.mean()),
            latency_p50_s=nearest_rank(latencies, 50),
            latency_p95_s=nearest_rank(latencies, 95),
            evictions=self.evictions,
            non_cacheable=self.non_cacheable,
            empty=False,
        )


def merge_accumulators(accumulators: Iterable[MetricsAccumulator]) -> MetricsAccumulator:
    accumulators = list(accumulators)
    merged = MetricsAccumulator(accumulators[0].hit_latency_s if accumulators else 0.0)
    for acc in accumulators:
        merged.merge(acc)
    return merged


def average_reports(reports: Sequence[SimReport]) -> SimReport:
    """
    Field-wise mean of several runs (counts are rounded to the nearest integer). Empty reports are skipped.
    """
    reports = [r for r in reports if not r.empty]
    if not reports:
        return SimReport()
    values = {}
    for f in fields(SimReport):
        if f.name == 'empty':
            continue
        mean = sum(getattr(r, f.name) for r in reports) / len(reports)
        values[f.name] = int(round(mean)) if isinstance(getattr(reports[0], f.name), int) else mean
    return SimReport(empty=False, **values)


def report_row(report: SimReport, extra: Mapping = None) -> dict:
    """Flat record of a report, prefixed by ``extra`` (run configuration, sweep axis values, ...)."""
    row = dict(extra or {})
    row.update(report.as_dict())
    return row


def write_reports_csv(rows: Sequence[Mapping], path, leading_columns: Sequence[str] = ()) -> None:
    """
    Writes one CSV row per report. Columns are ``leading_columns``, then any other configuration keys in
    first-seen order, then ``REPORT_COLUMNS``.
    """
    columns = list(leading_columns)
    for row in rows:
        for key in row:
            if key not in columns and key not in REPORT_COLUMNS:
                columns.append(key)
    columns.extend(REPORT_COLUMNS)
    with Path(path).open('w', encoding='utf-8', newline='') as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator='\n')
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _csv_value(row.get(key, '')) for key in columns})
    logger.info("wrote %d report rows to %s", len(rows), path)


def _csv_value(value):
    return repr(value) if isinstance(value, float) else value


def write_report_json(record: Mapping, path) -> None:
    with Path(path).open('w', encoding='utf-8') as fh:
        json.dump(record, fh, indent=2, sort_keys=True, default=str)
        fh.write('\n')
