from __future__ import annotations

import hashlib
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy import stats

from .catalog import Catalog, VideoMeta
from .exceptions import ConfigurationError, DomainError, ParseError

__all__ = [
    'LIGHT_TO_HEAVY_LAMBDAS',
    'ArrivalModel',
    'SelectionModel',
    'SessionModel',
    'TraceEvent',
    'Trace',
    'TraceStats',
    'modified_poisson_pmf',
    'modified_poisson_mean',
    'sample_arrivals',
    'zipf_like_pmf',
    'sample_video',
    'sample_videos',
    'sample_bytes',
    'hot_videos',
    'generate_trace',
    'validate_trace',
    'trace_stats',
    'save_trace',
    'load_trace',
]

logger = logging.getLogger(__name__)

# per-minute request rates of the light-to-heavy sweep
LIGHT_TO_HEAVY_LAMBDAS = tuple(float(lam) for lam in range(1, 16))

_INT64_MIN = int(np.iinfo(np.int64).min)
_INT64_MAX = int(np.iinfo(np.int64).max)


def _as_rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


@dataclass(frozen=True)
class ArrivalModel:
    """
    Per-bucket request counts. The count x of a bucket follows the Poisson mass of N - x, restricted to
    x in [0, N] and renormalized.

    :param lam: Mean of the underlying Poisson.
    :param n_max: Maximum number of arrivals per bucket, N.
    :param unit_s: Bucket length in seconds.
    """
    lam: float = 15.0
    n_max: int = 27
    unit_s: float = 60.0

    def __post_init__(self):
        errors = []
        if not self.lam > 0:
            errors.append(f"arrival lam must be > 0, got {self.lam}")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            errors.append(f"arrival n_max must be an integer >= 1, got {self.n_max}")
        if not self.unit_s > 0:
            errors.append(f"arrival unit_s must be > 0, got {self.unit_s}")
        if errors:
            raise ConfigurationError(errors)
        if self.lam > self.n_max:
            warnings.warn(f"arrival lam ({self.lam}) exceeds n_max ({self.n_max}); most of the Poisson mass "
                          f"is rejected and buckets will be nearly empty")

    @property
    def unit_ms(self) -> int:
        return int(round(self.unit_s * 1000))


def _poisson_support(model: ArrivalModel) -> np.ndarray:
    """Poisson masses of y = N - x for y in [0, N]."""
    return stats.poisson.pmf(np.arange(model.n_max + 1), model.lam)


def modified_poisson_pmf(x: int, model: ArrivalModel) -> float:
    """
    Probability that a bucket receives ``x`` requests.

    :param x: Number of requests.
    :param model: Arrival model.
    :return: e^-lam lam^(N-x) / (N-x)! divided by the mass of y = N - x over [0, N]; 0 outside [0, N].
    """
    if x < 0 or x > model.n_max:
        return 0.0
    masses = _poisson_support(model)
    return float(masses[model.n_max - x] / masses.sum())


def modified_poisson_mean(model: ArrivalModel) -> float:
    masses = _poisson_support(model)
    y = np.arange(model.n_max + 1)
    return float(model.n_max - (y * masses).sum() / masses.sum())


def sample_arrivals(model: ArrivalModel, num_buckets: int, rng) -> np.ndarray:
    """
    Draws per-bucket request counts: y from Poisson(lam), redrawn while y > N, and x = N - y.

    :param model: Arrival model.
    :param num_buckets: Number of buckets.
    :param rng: numpy Generator or seed.
    :return: Integer array of counts, each in [0, N].
    """
    rng = _as_rng(rng)
    y = rng.poisson(model.lam, num_buckets)
    rejected = y > model.n_max
    while rejected.any():
        y[rejected] = rng.poisson(model.lam, int(rejected.sum()))
        rejected = y > model.n_max
    return (model.n_max - y).astype(np.int64)


@dataclass(frozen=True)
class SelectionModel:
    """
    Zipf-like video popularity: the video of rank i is requested with probability proportional to 1/i^alpha.

    :param alpha: Zipf-like exponent in (0, 2].
    :param rank_map: Video ids ordered by popularity, ``rank_map[0]`` being rank 1.
    """
    alpha: float
    rank_map: Tuple[int, ...]
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)
    _norm: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'rank_map', tuple(int(v) for v in self.rank_map))
        errors = []
        if not 0 < self.alpha <= 2:
            errors.append(f"selection alpha must be in (0, 2], got {self.alpha}")
        if not self.rank_map:
            errors.append("selection rank_map is empty")
        if len(set(self.rank_map)) != len(self.rank_map):
            errors.append("selection rank_map contains duplicate video ids")
        if errors:
            raise ConfigurationError(errors)
        weights = np.arange(1, self.m + 1, dtype=np.float64) ** -self.alpha
        norm = float(weights.sum())
        cdf = np.cumsum(weights / norm)
        cdf[-1] = 1.0
        object.__setattr__(self, '_cdf', cdf)
        object.__setattr__(self, '_norm', norm)

    @classmethod
    def for_catalog(cls, catalog: Catalog, alpha: float = 0.77, shuffle: bool = False, seed=None):
        """
        Popularity over a catalog. Ranks follow ascending video id unless ``shuffle`` is set, in which case
        the rank order is a seeded permutation.
        """
        ids = sorted(catalog.video_ids)
        if shuffle:
            ids = [ids[i] for i in np.random.default_rng(seed).permutation(len(ids))]
        return cls(alpha=alpha, rank_map=tuple(ids))

    @property
    def m(self) -> int:
        return len(self.rank_map)

    def probabilities(self) -> np.ndarray:
        return np.diff(self._cdf, prepend=0.0)


def zipf_like_pmf(rank: int, model: SelectionModel) -> float:
    """
    :param rank: Popularity rank, 1 being the most popular.
    :param model: Selection model.
    :return: (1/rank^alpha) / H_M(alpha).
    """
    if not 1 <= rank <= model.m:
        raise DomainError(f"rank must be in [1, {model.m}], got {rank}")
    return float(rank ** -model.alpha / model._norm)


def sample_videos(model: SelectionModel, size: int, rng) -> np.ndarray:
    """Draws ``size`` video ids by inverting the rank cdf."""
    rng = _as_rng(rng)
    ranks = np.searchsorted(model._cdf, rng.random(size), side='right')
    np.minimum(ranks, model.m - 1, out=ranks)
    return np.asarray(model.rank_map, dtype=np.int64)[ranks]


def sample_video(model: SelectionModel, rng) -> int:
    return int(sample_videos(model, 1, rng)[0])


def hot_videos(model: SelectionModel, fraction: float = 0.10) -> List[int]:
    """
    The "hot" videos: the top ``fraction`` of ranks (at least one video). Every other video is cold.
    """
    if not 0 < fraction <= 1:
        raise DomainError(f"fraction must be in (0, 1], got {fraction}")
    count = max(1, int(math.floor(model.m * fraction)))
    return list(model.rank_map[:count])


@dataclass(frozen=True)
class SessionModel:
    """
    Early session termination. When enabled, ``early_quit_prob`` of the sessions stop within the first
    ``early_window_s`` seconds of playback.
    """
    enabled: bool = True
    early_quit_prob: float = 0.70
    early_window_s: float = 1200.0

    def __post_init__(self):
        errors = []
        if not 0 <= self.early_quit_prob <= 1:
            errors.append(f"session early_quit_prob must be in [0, 1], got {self.early_quit_prob}")
        if not self.early_window_s > 0:
            errors.append(f"session early_window_s must be > 0, got {self.early_window_s}")
        if errors:
            raise ConfigurationError(errors)


def _watch_times(durations: np.ndarray, session: SessionModel, rng: np.random.Generator) -> np.ndarray:
    n = len(durations)
    early = rng.random(n) < session.early_quit_prob
    u = rng.random(n)
    window = np.minimum(session.early_window_s, durations)
    # 1 - u lies in (0, 1], so both branches are left-open, right-closed intervals
    early_watch = window * (1.0 - u)
    late_span = np.maximum(durations - session.early_window_s, 0.0)
    late_watch = np.where(durations > session.early_window_s,
                          session.early_window_s + late_span * (1.0 - u),
                          durations)
    return np.where(early, early_watch, late_watch)


def _sample_bytes_many(sizes: np.ndarray, durations: np.ndarray, session: SessionModel, rng) -> np.ndarray:
    if not session.enabled:
        return sizes.astype(np.int64)
    watch = _watch_times(durations, session, rng)
    requested = np.ceil(sizes * (watch / durations))
    return np.clip(requested, 1, sizes).astype(np.int64)


def sample_bytes(video: VideoMeta, session: SessionModel, rng) -> int:
    """
    Bytes a session actually requests from ``video``.

    :param video: Requested video.
    :param session: Session model. If disabled the whole video is requested.
    :param rng: numpy Generator or seed.
    :return: Requested bytes in [1, size_bytes].
    """
    rng = _as_rng(rng)
    sizes = np.array([video.size_bytes], dtype=np.float64)
    durations = np.array([video.duration_s], dtype=np.float64)
    return int(_sample_bytes_many(sizes, durations, session, rng)[0])


class TraceEvent(NamedTuple):
    timestamp_ms: int
    video_id: int
    bytes_requested: int


class Trace:
    """
    An immutable request trace stored column-wise. Iterating yields TraceEvent tuples in timestamp order.
    ``header`` carries the generator seed and parameters for provenance.
    """

    def __init__(self, timestamps_ms, video_ids, bytes_requested, header: dict = None):
        self.timestamps_ms = np.asarray(timestamps_ms, dtype=np.int64)
        self.video_ids = np.asarray(video_ids, dtype=np.int64)
        self.bytes_requested = np.asarray(bytes_requested, dtype=np.int64)
        if not len(self.timestamps_ms) == len(self.video_ids) == len(self.bytes_requested):
            raise ValueError("trace columns must have equal length")
        for column in (self.timestamps_ms, self.video_ids, self.bytes_requested):
            column.setflags(write=False)
        self.header = dict(header or {})

    @classmethod
    def from_events(cls, events: Sequence[TraceEvent], header: dict = None) -> 'Trace':
        events = list(events)
        columns = list(zip(*events)) if events else ([], [], [])
        return cls(*columns, header=header)

    def __len__(self):
        return len(self.timestamps_ms)

    def __iter__(self) -> Iterator[TraceEvent]:
        for ts, vid, nbytes in zip(self.timestamps_ms.tolist(), self.video_ids.tolist(),
                                   self.bytes_requested.tolist()):
            yield TraceEvent(ts, vid, nbytes)

    def __getitem__(self, index) -> TraceEvent:
        return TraceEvent(int(self.timestamps_ms[index]), int(self.video_ids[index]),
                          int(self.bytes_requested[index]))

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return (np.array_equal(self.timestamps_ms, other.timestamps_ms)
                and np.array_equal(self.video_ids, other.video_ids)
                and np.array_equal(self.bytes_requested, other.bytes_requested))

    __hash__ = None

    def __repr__(self):
        return f"Trace(events={len(self)}, header={self.header!r})"

    def digest(self) -> str:
        """SHA-256 over the three columns; equal traces have equal digests."""
        h = hashlib.sha256()
        for column in (self.timestamps_ms, self.video_ids, self.bytes_requested):
            h.update(np.ascontiguousarray(column, dtype='<i8').tobytes())
        return h.hexdigest()


def _check_models(catalog: Catalog, selection: SelectionModel):
    errors = []
    if selection.m != len(catalog):
        errors.append(f"selection model covers {selection.m} videos but the catalog has {len(catalog)}")
    unknown = [v for v in selection.rank_map if v not in catalog]
    if unknown:
        errors.append(f"selection rank_map references {len(unknown)} unknown video ids, e.g. {unknown[0]}")
    if errors:
        raise ConfigurationError(errors)


def generate_trace(catalog: Catalog, arrival: ArrivalModel, selection: SelectionModel, session: SessionModel,
                   num_buckets: int, seed=0, num_requests: int = None) -> Trace:
    """
    Generates a request trace. Each bucket receives a count drawn from the arrival model, its requests are
    placed uniformly inside the bucket, their videos drawn from the selection model and their bytes from the
    session model.

    :param catalog: Video catalog.
    :param arrival: Arrival model.
    :param selection: Selection model over the catalog.
    :param session: Session model.
    :param num_buckets: Number of time buckets. Ignored when ``num_requests`` is given.
    :param seed: Seed of the generator. Equal seeds give equal traces.
    :param num_requests: If given, enough buckets are generated to reach this many requests and the trace is
    cut to exactly that length.
    :return: Generated trace.
    """
    _check_models(catalog, selection)
    if num_requests is not None:
        if num_requests < 0:
            raise ConfigurationError(f"num_requests must be >= 0, got {num_requests}")
        mean = modified_poisson_mean(arrival)
        if mean <= 0:
            raise ConfigurationError("arrival model produces no requests; cannot reach num_requests")
        num_buckets = int(math.ceil(num_requests / mean * 1.05)) + 1 if num_requests else 0
    if num_buckets < 0:
        raise ConfigurationError(f"num_buckets must be >= 0, got {num_buckets}")

    rng = np.random.default_rng(seed)
    counts = sample_arrivals(arrival, num_buckets, rng)
    if num_requests is not None:
        while counts.sum() < num_requests:
            counts = np.concatenate([counts, sample_arrivals(arrival, max(1, len(counts) // 10), rng)])
    total = int(counts.sum())

    unit_ms = arrival.unit_ms
    bucket_of = np.repeat(np.arange(len(counts), dtype=np.int64), counts)
    offsets = np.floor(rng.random(total) * unit_ms).astype(np.int64)
    timestamps = np.sort(bucket_of * unit_ms + offsets, kind='stable')

    video_ids = sample_videos(selection, total, rng)
    lookup_size = {v.video_id: v.size_bytes for v in catalog.videos}
    lookup_duration = {v.video_id: v.duration_s for v in catalog.videos}
    sizes = np.array([lookup_size[v] for v in video_ids.tolist()], dtype=np.float64)
    durations = np.array([lookup_duration[v] for v in video_ids.tolist()], dtype=np.float64)
    requested = _sample_bytes_many(sizes, durations, session, rng)

    if num_requests is not None:
        timestamps, video_ids, requested = (timestamps[:num_requests], video_ids[:num_requests],
                                            requested[:num_requests])

    header = {
        'seed': seed,
        'lam': arrival.lam,
        'n_max': arrival.n_max,
        'unit_s': arrival.unit_s,
        'alpha': selection.alpha,
        'videos': selection.m,
        'session': session.enabled,
        'early_quit_prob': session.early_quit_prob,
        'early_window_s': session.early_window_s,
        'buckets': len(counts),
    }
    logger.debug("generated trace with %d events over %d buckets", len(timestamps), len(counts))
    return Trace(timestamps, video_ids, requested, header=header)


def validate_trace(trace, catalog: Catalog) -> List[str]:
    """
    Checks timestamp order, video references and byte bounds.

    :param trace: Trace or any iterable of TraceEvent.
    :param catalog: Catalog the trace refers to.
    :return: List of violations, each naming the event index. Empty iff the trace is valid.
    """
    if isinstance(trace, Trace):
        return _validate_columns(trace, catalog)
    violations = []
    previous = None
    for index, (ts, vid, nbytes) in enumerate(trace):
        if ts < 0:
            violations.append(f"event {index}: negative timestamp {ts}")
        if previous is not None and ts < previous:
            violations.append(f"event {index}: timestamp {ts} is earlier than the previous event ({previous})")
        previous = ts
        if vid not in catalog:
            violations.append(f"event {index}: unknown video_id {vid}")
            continue
        size = catalog.video(vid).size_bytes
        if nbytes < 1:
            violations.append(f"event {index}: bytes_requested must be >= 1, got {nbytes}")
        elif nbytes > size:
            violations.append(f"event {index}: bytes_requested {nbytes} exceeds size_bytes {size} of video {vid}")
    return violations


def _validate_columns(trace: Trace, catalog: Catalog) -> List[str]:
    ts, vids, nbytes = trace.timestamps_ms, trace.video_ids, trace.bytes_requested
    ids = np.array(sorted(catalog.video_ids), dtype=np.int64)
    sizes = np.array([catalog.video(v).size_bytes for v in ids.tolist()], dtype=np.int64)
    if len(ids):
        pos = np.minimum(np.searchsorted(ids, vids), len(ids) - 1)
        known = ids[pos] == vids
        size = np.where(known, sizes[pos], 0)
    else:
        known = np.zeros(len(vids), dtype=bool)
        size = np.zeros(len(vids), dtype=np.int64)

    # (event index, check order, message) so the result reads like a single forward pass
    found = []
    for i in np.flatnonzero(ts < 0).tolist():
        found.append((i, 0, f"event {i}: negative timestamp {ts[i]}"))
    for i in (np.flatnonzero(ts[1:] < ts[:-1]) + 1).tolist():
        found.append((i, 1, f"event {i}: timestamp {ts[i]} is earlier than the previous event ({ts[i - 1]})"))
    for i in np.flatnonzero(~known).tolist():
        found.append((i, 2, f"event {i}: unknown video_id {vids[i]}"))
    for i in np.flatnonzero(known & (nbytes < 1)).tolist():
        found.append((i, 2, f"event {i}: bytes_requested must be >= 1, got {nbytes[i]}"))
    for i in np.flatnonzero(known & (nbytes >= 1) & (nbytes > size)).tolist():
        found.append((i, 2, f"event {i}: bytes_requested {nbytes[i]} exceeds size_bytes {size[i]} of video {vids[i]}"))
    found.sort(key=lambda item: item[:2])
    return [message for _, _, message in found]


@dataclass(frozen=True)
class TraceStats:
    events: int
    distinct_videos: int
    span_ms: int
    mean_per_bucket: float
    top_decile_share: float
    truncated_fraction: float


def trace_stats(trace: Trace, catalog: Catalog, unit_s: float = 60.0) -> TraceStats:
    """
    Summary statistics of a trace.

    :param trace: Trace to summarize.
    :param catalog: Catalog of the trace.
    :param unit_s: Bucket length used for the per-bucket mean.
    :return: TraceStats. ``top_decile_share`` is the share of requests that went to the most requested 10% of
    the catalog; ``truncated_fraction`` the share of requests for less than the whole video.
    """
    n = len(trace)
    if n == 0:
        return TraceStats(0, 0, 0, 0.0, 0.0, 0.0)
    _, counts = np.unique(trace.video_ids, return_counts=True)
    top = max(1, len(catalog) // 10)
    top_share = float(np.sort(counts)[::-1][:top].sum() / n)
    span = int(trace.timestamps_ms[-1] - trace.timestamps_ms[0])
    unit_ms = unit_s * 1000.0
    buckets = int(trace.timestamps_ms[-1] // unit_ms) + 1
    sizes = np.array([catalog.video(v).size_bytes for v in trace.video_ids.tolist()], dtype=np.int64)
    truncated = float(np.count_nonzero(trace.bytes_requested < sizes) / n)
    return TraceStats(events=n, distinct_videos=len(counts), span_ms=span, mean_per_bucket=n / buckets,
                      top_decile_share=top_share, truncated_fraction=truncated)


def _format_header(header: dict) -> str:
    return "# " + " ".join(f"{key}={value}" for key, value in header.items())


def _parse_header(line: str) -> dict:
    header = {}
    for token in line[1:].split():
        key, sep, value = token.partition('=')
        if sep:
            header[key] = value
    return header


def save_trace(trace: Trace, path) -> None:
    """
    Writes a trace as ``timestamp_ms,video_id,bytes_requested`` lines, preceded by a ``#`` provenance header.
    """
    path = Path(path)
    with path.open('w', encoding='ascii', newline='\n') as fh:
        fh.write(_format_header(trace.header) + '\n')
        for ts, vid, nbytes in trace:
            fh.write(f"{ts},{vid},{nbytes}\n")
    logger.info("wrote trace with %d events to %s", len(trace), path)


def load_trace(path) -> Trace:
    path = Path(path)
    header = {}
    timestamps, video_ids, requested = [], [], []
    names = ('timestamp_ms', 'video_id', 'bytes_requested')
    try:
        fh = path.open('rb')
    except OSError as e:
        raise ParseError(f"cannot read trace: {e.strerror}", path=path) from e
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            try:
                line = raw.decode('ascii').strip()
            except UnicodeDecodeError as e:
                raise ParseError(f"non-ASCII byte 0x{raw[e.start]:02x}", path=path, line=lineno) from None
            if not line:
                continue
            if line.startswith('#'):
                header.update(_parse_header(line))
                continue
            parts = line.split(',')
            if len(parts) != 3:
                raise ParseError(f"expected 3 comma-separated fields, got {len(parts)}", path=path, line=lineno)
            values = []
            for name, part in zip(names, parts):
                try:
                    value = int(part)
                except ValueError:
                    raise ParseError(f"not an integer: {part!r}", path=path, line=lineno, field=name) from None
                if not _INT64_MIN <= value <= _INT64_MAX:
                    raise ParseError(f"{part!r} does not fit in 64 bits", path=path, line=lineno, field=name)
                values.append(value)
            timestamps.append(values[0])
            video_ids.append(values[1])
            requested.append(values[2])
    return Trace(timestamps, video_ids, requested, header=header)
