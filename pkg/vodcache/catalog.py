from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .exceptions import ConfigurationError, ParseError, ValidationError

__all__ = [
    'KB', 'MB', 'GB',
    'DEFAULT_BITRATE_BPS',
    'VideoMeta',
    'ServerProfile',
    'Catalog',
    'SizeDistSpec',
    'ServerDistSpec',
    'generate_catalog',
    'validate_catalog',
    'save_catalog',
    'load_catalog',
    'catalog_to_dict',
    'catalog_from_dict',
]

logger = logging.getLogger(__name__)

KB = 1024
MB = 1024 * KB
GB = 1024 * MB

DEFAULT_BITRATE_BPS = 4_000_000  # bits per second

_VIDEO_FIELDS = ('video_id', 'size_bytes', 'duration_s', 'server_id')
_SERVER_FIELDS = ('server_id', 'connect_time_s', 'bandwidth_Bps')
_DISTRIBUTIONS = ('log-uniform', 'uniform', 'fixed')


@dataclass(frozen=True)
class VideoMeta:
    video_id: int
    size_bytes: int
    duration_s: float
    server_id: int


@dataclass(frozen=True)
class ServerProfile:
    server_id: int
    connect_time_s: float
    bandwidth_Bps: float


@dataclass(frozen=True)
class Catalog:
    """
    The video corpus plus the origin servers it is fetched from. Use ``validate_catalog`` to check the
    referential integrity of hand-built catalogs; the generators and loaders only ever return valid ones.
    """
    videos: Tuple[VideoMeta, ...]
    servers: Tuple[ServerProfile, ...]
    _video_index: Dict[int, VideoMeta] = field(init=False, repr=False, compare=False)
    _server_index: Dict[int, ServerProfile] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'videos', tuple(self.videos))
        object.__setattr__(self, 'servers', tuple(self.servers))
        object.__setattr__(self, '_video_index', {v.video_id: v for v in self.videos})
        object.__setattr__(self, '_server_index', {s.server_id: s for s in self.servers})

    def __len__(self):
        return len(self.videos)

    def __contains__(self, video_id):
        return video_id in self._video_index

    def video(self, video_id: int) -> VideoMeta:
        return self._video_index[video_id]

    def server(self, server_id: int) -> ServerProfile:
        return self._server_index[server_id]

    def server_of(self, video_id: int) -> ServerProfile:
        return self._server_index[self._video_index[video_id].server_id]

    @property
    def video_ids(self) -> List[int]:
        return [v.video_id for v in self.videos]

    @property
    def total_bytes(self) -> int:
        return sum(v.size_bytes for v in self.videos)


@dataclass(frozen=True)
class SizeDistSpec:
    """
    Distribution of video sizes in bytes.

    :param kind: 'log-uniform', 'uniform' or 'fixed'. 'fixed' uses ``low`` for every video.
    :param low: Lower bound in bytes.
    :param high: Upper bound in bytes (ignored for 'fixed').
    """
    kind: str = 'log-uniform'
    low: int = 10 * MB
    high: int = 2 * GB

    def __post_init__(self):
        errors = []
        if self.kind not in _DISTRIBUTIONS:
            errors.append(f"unknown size distribution {self.kind!r}, expected one of {_DISTRIBUTIONS}")
        if self.low < 1:
            errors.append(f"size_dist.low must be >= 1 byte, got {self.low}")
        if self.kind != 'fixed' and self.high < self.low:
            errors.append(f"size_dist.high ({self.high}) must be >= size_dist.low ({self.low})")
        if errors:
            raise ConfigurationError(errors)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == 'fixed':
            return np.full(n, int(self.low), dtype=np.int64)
        if self.kind == 'uniform':
            sizes = rng.uniform(self.low, self.high, n)
        else:
            sizes = np.exp(rng.uniform(math.log(self.low), math.log(self.high), n))
        return np.clip(np.rint(sizes), self.low, self.high).astype(np.int64)


@dataclass(frozen=True)
class ServerDistSpec:
    """
    Origin server profiles and how videos are assigned to them. Connect times and bandwidths are drawn
    log-uniformly from their ranges.

    :param connect_time_s: (low, high) connect time Cs in seconds.
    :param bandwidth_Bps: (low, high) bandwidth Bs in bytes per second.
    :param assignment: 'uniform' draws a server per video, 'round-robin' cycles through them.
    """
    connect_time_s: Tuple[float, float] = (0.05, 2.0)
    bandwidth_Bps: Tuple[float, float] = (1 * MB, 50 * MB)
    assignment: str = 'uniform'

    def __post_init__(self):
        errors = []
        c_lo, c_hi = self.connect_time_s
        b_lo, b_hi = self.bandwidth_Bps
        if not 0 <= c_lo <= c_hi:
            errors.append(f"connect_time_s range must satisfy 0 <= low <= high, got {self.connect_time_s}")
        if not 0 < b_lo <= b_hi:
            errors.append(f"bandwidth_Bps range must satisfy 0 < low <= high, got {self.bandwidth_Bps}")
        if self.assignment not in ('uniform', 'round-robin'):
            errors.append(f"unknown server assignment {self.assignment!r}")
        if errors:
            raise ConfigurationError(errors)


def _log_uniform(rng, low, high, n):
    if low == high:
        return np.full(n, float(low))
    if low == 0:
        # log-uniform is undefined at 0, fall back to linear
        return rng.uniform(low, high, n)
    return np.exp(rng.uniform(math.log(low), math.log(high), n))


def generate_catalog(num_videos: int, num_servers: int, size_dist: SizeDistSpec = None,
                     server_dist: ServerDistSpec = None, seed: int = 0,
                     bitrate_bps: float = DEFAULT_BITRATE_BPS) -> Catalog:
    """
    Generates a synthetic catalog. Video ids run from 1 to ``num_videos``, server ids from 0 to
    ``num_servers - 1``. The result depends only on the arguments.

    :param num_videos: Number of videos M.
    :param num_servers: Number of origin servers.
    :param size_dist: Video size distribution, log-uniform over [10 MB, 2 GB] if None.
    :param server_dist: Server parameter ranges and video assignment, defaults if None.
    :param seed: Seed of the generator.
    :param bitrate_bps: Playback bitrate used to derive each video's duration from its size.
    :return: Generated catalog.
    """
    errors = []
    if num_videos < 1:
        errors.append(f"num_videos must be >= 1, got {num_videos}")
    if num_servers < 1:
        errors.append(f"num_servers must be >= 1, got {num_servers}")
    if bitrate_bps <= 0:
        errors.append(f"bitrate_bps must be > 0, got {bitrate_bps}")
    if errors:
        raise ConfigurationError(errors)

    size_dist = size_dist if size_dist is not None else SizeDistSpec()
    server_dist = server_dist if server_dist is not None else ServerDistSpec()
    rng = np.random.default_rng(seed)

    connect = _log_uniform(rng, *server_dist.connect_time_s, num_servers)
    bandwidth = _log_uniform(rng, *server_dist.bandwidth_Bps, num_servers)
    servers = [ServerProfile(server_id=s, connect_time_s=float(connect[s]), bandwidth_Bps=float(bandwidth[s]))
               for s in range(num_servers)]

    sizes = size_dist.sample(rng, num_videos)
    if server_dist.assignment == 'round-robin':
        assigned = np.arange(num_videos) % num_servers
    else:
        assigned = rng.integers(0, num_servers, num_videos)

    videos = [VideoMeta(video_id=i + 1,
                        size_bytes=int(sizes[i]),
                        duration_s=float(sizes[i]) * 8.0 / bitrate_bps,
                        server_id=int(assigned[i]))
              for i in range(num_videos)]

    logger.debug("generated catalog: %d videos, %d servers, seed=%s", num_videos, num_servers, seed)
    return Catalog(videos=tuple(videos), servers=tuple(servers))


def validate_catalog(catalog: Catalog) -> List[str]:
    """
    Checks every invariant of a catalog.

    :param catalog: Catalog to check.
    :return: List of violations, empty iff the catalog is valid.
    """
    violations = []
    if not catalog.videos:
        violations.append("catalog has no videos")
    if not catalog.servers:
        violations.append("catalog has no servers")

    server_ids = set()
    for i, s in enumerate(catalog.servers):
        if s.server_id in server_ids:
            violations.append(f"server {i}: duplicate server_id {s.server_id}")
        server_ids.add(s.server_id)
        if not s.bandwidth_Bps > 0:
            violations.append(f"server {i}: bandwidth_Bps must be > 0, got {s.bandwidth_Bps}")
        if not s.connect_time_s >= 0:
            violations.append(f"server {i}: connect_time_s must be >= 0, got {s.connect_time_s}")

    video_ids = set()
    for i, v in enumerate(catalog.videos):
        if v.video_id in video_ids:
            violations.append(f"video {i}: duplicate video_id {v.video_id}")
        video_ids.add(v.video_id)
        if v.video_id < 0:
            violations.append(f"video {i}: video_id must be non-negative, got {v.video_id}")
        if v.size_bytes < 1:
            violations.append(f"video {i}: size_bytes must be >= 1, got {v.size_bytes}")
        if not v.duration_s > 0:
            violations.append(f"video {i}: duration_s must be > 0, got {v.duration_s}")
        if v.server_id not in server_ids:
            violations.append(f"video {i}: server_id {v.server_id!r} does not reference a server")
    return violations


def catalog_to_dict(catalog: Catalog) -> dict:
    return {
        'servers': [{name: getattr(s, name) for name in _SERVER_FIELDS} for s in catalog.servers],
        'videos': [{name: getattr(v, name) for name in _VIDEO_FIELDS} for v in catalog.videos],
    }


def _record(raw, fields, collection, index, path, converters):
    if not isinstance(raw, dict):
        raise ParseError(f"{collection}[{index}] must be an object", path=path)
    values = {}
    for name in fields:
        if name not in raw:
            raise ParseError(f"{collection}[{index}] is missing a value", path=path, field=name)
        value = raw[name]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError(f"{collection}[{index}] must be numeric, got {value!r}", path=path, field=name)
        if not math.isfinite(value):
            raise ParseError(f"{collection}[{index}] must be finite, got {value!r}", path=path, field=name)
        convert = converters[name]
        if convert is int and value != int(value):
            raise ParseError(f"{collection}[{index}] must be an integer, got {value!r}", path=path, field=name)
        values[name] = convert(value)
    return values


def catalog_from_dict(data: dict, path=None) -> Catalog:
    """
    Builds a catalog from its dict form, raising ParseError on malformed records and ValidationError when the
    records are well formed but break an invariant.
    """
    if not isinstance(data, dict):
        raise ParseError("catalog document must be an object", path=path)
    for collection in ('servers', 'videos'):
        if not isinstance(data.get(collection), list):
            raise ParseError(f"missing '{collection}' list", path=path, field=collection)

    server_types = {'server_id': int, 'connect_time_s': float, 'bandwidth_Bps': float}
    video_types = {'video_id': int, 'size_bytes': int, 'duration_s': float, 'server_id': int}
    servers = [ServerProfile(**_record(raw, _SERVER_FIELDS, 'servers', i, path, server_types))
               for i, raw in enumerate(data['servers'])]
    videos = [VideoMeta(**_record(raw, _VIDEO_FIELDS, 'videos', i, path, video_types))
              for i, raw in enumerate(data['videos'])]

    catalog = Catalog(videos=tuple(videos), servers=tuple(servers))
    violations = validate_catalog(catalog)
    if violations:
        raise ValidationError(violations)
    return catalog


def save_catalog(catalog: Catalog, path) -> None:
    """
    Writes a catalog as a JSON document with the two top-level lists ``servers`` and ``videos``.

    :param catalog: Catalog to write.
    :param path: Destination file. Will be overwritten if it exists.
    """
    path = Path(path)
    with path.open('w', encoding='utf-8') as fh:
        json.dump(catalog_to_dict(catalog), fh, indent=1)
        fh.write('\n')
    logger.info("wrote catalog with %d videos to %s", len(catalog), path)


def load_catalog(path) -> Catalog:
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ParseError(f"cannot read catalog: {e.strerror}", path=path) from e
    except UnicodeDecodeError as e:
        line = e.object[:e.start].count(b'\n') + 1
        raise ParseError(f"not valid UTF-8 (byte 0x{e.object[e.start]:02x})", path=path, line=line) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, path=path, line=e.lineno) from e
    return catalog_from_dict(data, path=path)
