from __future__ import annotations

import copy
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .catalog import DEFAULT_BITRATE_BPS, GB, MB, ServerDistSpec, SizeDistSpec
from .exceptions import ConfigurationError, ParseError
from .policies import GdsParams, LfuAgingParams, LruKParams, PolicyConfig, RvParams
from .workload import LIGHT_TO_HEAVY_LAMBDAS, ArrivalModel, SessionModel

__all__ = [
    'OUTPUT_DIR_ENV',
    'PRESETS',
    'CatalogSource',
    'WorkloadSource',
    'CacheSettings',
    'OutputSettings',
    'SweepSettings',
    'SimConfig',
    'load_config',
    'config_from_dict',
    'apply_overrides',
    'config_record',
]

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = 'VODCACHE_OUTPUT_DIR'

PRESETS: Dict[str, Dict[str, Any]] = {
    'standard': {
        'seed': 42,
        'catalog': {
            'num_videos': 1000,
            'num_servers': 4,
            'size_dist': 'log-uniform',
            'size_low': 10 * MB,
            'size_high': 2 * GB,
            'connect_time_s': [0.05, 2.0],
            'bandwidth_Bps': [1 * MB, 50 * MB],
            'assignment': 'uniform',
            'bitrate_bps': DEFAULT_BITRATE_BPS,
        },
        'workload': {
            'lam': 15.0,
            'n_max': 27,
            'unit_s': 60.0,
            'alpha': 0.77,
            'shuffle_ranks': False,
            'num_requests': 100_000,
        },
        'session': {
            'enabled': True,
            'early_quit_prob': 0.70,
            'early_window_s': 1200.0,
        },
        'cache': {
            'capacity_fraction': 0.10,
            'hit_latency_s': 0.0,
            'debug': False,
        },
        'policy': {
            'kind': 'RV',
            'seed': 0,
            'alpha': 0.77,
            'b': 1.0,
            'k': 1_000_000.0,
            'epsilon_ms': 1,
            'lru_k': {'k': 2, 'rp_ms': 3_600_000},
            'lfu_aging': {'max_count': 255, 'interval_events': 10_000},
            'gds': {'cost': 'transfer', 'k': 1_000_000.0},
        },
        'output': {
            'directory': 'results',
            'eviction_log': False,
        },
    },
}

PRESETS['paper'] = PRESETS['standard']
PRESETS['light-to-heavy sweep'] = dict(
    copy.deepcopy(PRESETS['standard']),
    sweep={'axis': 'lambda', 'values': list(LIGHT_TO_HEAVY_LAMBDAS)},
)

_TABLE_KEYS = {
    'catalog': {'path', 'num_videos', 'num_servers', 'size_dist', 'size_low', 'size_high', 'connect_time_s',
                'bandwidth_Bps', 'assignment', 'bitrate_bps'},
    'workload': {'path', 'lam', 'n_max', 'unit_s', 'alpha', 'shuffle_ranks', 'num_buckets', 'num_requests'},
    'session': {'enabled', 'early_quit_prob', 'early_window_s'},
    'cache': {'capacity_bytes', 'capacity_fraction', 'hit_latency_s', 'debug'},
    'policy': {'kind', 'seed', 'alpha', 'b', 'k', 'epsilon_ms', 'lru_k', 'lfu_aging', 'gds'},
    'output': {'directory', 'eviction_log'},
    'sweep': {'axis', 'values', 'policies'},
}
_TOP_KEYS = {'preset', 'seed'} | set(_TABLE_KEYS)

# setting one of these in a layer removes the other from the layers below it
_EXCLUSIVE = {('cache', 'capacity_bytes'): ('cache', 'capacity_fraction'),
              ('cache', 'capacity_fraction'): ('cache', 'capacity_bytes'),
              ('workload', 'num_requests'): ('workload', 'num_buckets'),
              ('workload', 'num_buckets'): ('workload', 'num_requests')}


@dataclass(frozen=True)
class CatalogSource:
    """Where the catalog comes from: ``path`` if set, else generation with the remaining fields."""
    path: Optional[str] = None
    num_videos: int = 1000
    num_servers: int = 4
    size_dist: SizeDistSpec = field(default_factory=SizeDistSpec)
    server_dist: ServerDistSpec = field(default_factory=ServerDistSpec)
    bitrate_bps: float = DEFAULT_BITRATE_BPS


@dataclass(frozen=True)
class WorkloadSource:
    """Where the trace comes from: ``path`` if set, else generation with the remaining fields."""
    path: Optional[str] = None
    arrival: ArrivalModel = field(default_factory=ArrivalModel)
    alpha: float = 0.77
    shuffle_ranks: bool = False
    num_buckets: Optional[int] = None
    num_requests: Optional[int] = 100_000

    def __post_init__(self):
        if self.path is None and (self.num_buckets is None) == (self.num_requests is None):
            raise ConfigurationError("workload needs exactly one of num_buckets and num_requests")


@dataclass(frozen=True)
class CacheSettings:
    capacity_bytes: Optional[int] = None
    capacity_fraction: Optional[float] = 0.10
    hit_latency_s: float = 0.0
    debug: bool = False

    def __post_init__(self):
        errors = []
        if (self.capacity_bytes is None) == (self.capacity_fraction is None):
            errors.append("cache needs exactly one of capacity_bytes and capacity_fraction")
        if self.capacity_fraction is not None and not 0 < self.capacity_fraction <= 1:
            errors.append(f"cache.capacity_fraction must be in (0, 1], got {self.capacity_fraction}")
        if self.capacity_bytes is not None and self.capacity_bytes < 0:
            errors.append(f"cache.capacity_bytes must be >= 0, got {self.capacity_bytes}")
        if self.hit_latency_s < 0:
            errors.append(f"cache.hit_latency_s must be >= 0, got {self.hit_latency_s}")
        if errors:
            raise ConfigurationError(errors)

    def capacity_for(self, total_bytes: int) -> int:
        if self.capacity_bytes is not None:
            return int(self.capacity_bytes)
        return int(self.capacity_fraction * total_bytes)


@dataclass(frozen=True)
class OutputSettings:
    directory: str = 'results'
    eviction_log: bool = False

    def resolved_directory(self) -> Path:
        return Path(os.environ.get(OUTPUT_DIR_ENV) or self.directory)


@dataclass(frozen=True)
class SweepSettings:
    """Default axis, values and crossed policies of the ``sweep`` command. Unset unless a preset or file sets it."""
    axis: Optional[str] = None
    values: Tuple[Any, ...] = ()
    policies: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.values and self.axis is None:
            raise ConfigurationError("sweep.values needs sweep.axis")


@dataclass(frozen=True)
class SimConfig:
    """
    One simulation run. The catalog is generated with ``seed`` and the trace with ``seed + 1``, so every
    policy and capacity run on the same seed sees the same workload.
    """
    catalog: CatalogSource = field(default_factory=CatalogSource)
    workload: WorkloadSource = field(default_factory=WorkloadSource)
    session: SessionModel = field(default_factory=SessionModel)
    cache: CacheSettings = field(default_factory=CacheSettings)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    output: OutputSettings = field(default_factory=OutputSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    seed: int = 42


def _merge(base: dict, layer: Mapping) -> dict:
    for (table, key), other in _EXCLUSIVE.items():
        if isinstance(layer.get(table), Mapping) and key in layer[table] and layer[table][key] is not None:
            if other[1] not in layer[table]:
                base.get(other[0], {}).pop(other[1], None)
    for key, value in layer.items():
        if isinstance(value, Mapping) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = copy.deepcopy(value)
    return base


def apply_overrides(raw: dict, overrides: Mapping[str, Any]) -> dict:
    """
    Applies dotted-key overrides such as ``{'policy.kind': 'LRU', 'cache.capacity_fraction': 0.2}``.
    """
    layer: Dict[str, Any] = {}
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = layer
        parts = dotted.split('.')
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return _merge(raw, layer)


def _check_keys(raw: Mapping) -> list:
    errors = [f"unknown top-level key '{key}'" for key in raw if key not in _TOP_KEYS]
    for table, allowed in _TABLE_KEYS.items():
        section = raw.get(table, {})
        if not isinstance(section, Mapping):
            errors.append(f"'{table}' must be a table")
            continue
        errors.extend(f"unknown key '{table}.{key}'" for key in section if key not in allowed)
    return errors


def config_from_dict(raw: Mapping) -> SimConfig:
    """
    Builds a SimConfig from the merged dict form. Missing keys fall back to the dataclass defaults. All
    problems are collected into one ConfigurationError.
    """
    errors = _check_keys(raw)
    if errors:
        raise ConfigurationError(errors)

    def section(name):
        return dict(raw.get(name, {}))

    try:
        cat = section('catalog')
        size_default = SizeDistSpec()
        server_default = ServerDistSpec()
        catalog = CatalogSource(
            path=cat.get('path'),
            num_videos=int(cat.get('num_videos', 1000)),
            num_servers=int(cat.get('num_servers', 4)),
            size_dist=SizeDistSpec(kind=cat.get('size_dist', size_default.kind),
                                   low=int(cat.get('size_low', size_default.low)),
                                   high=int(cat.get('size_high', size_default.high))),
            server_dist=ServerDistSpec(
                connect_time_s=tuple(float(x) for x in cat.get('connect_time_s', server_default.connect_time_s)),
                bandwidth_Bps=tuple(float(x) for x in cat.get('bandwidth_Bps', server_default.bandwidth_Bps)),
                assignment=cat.get('assignment', server_default.assignment)),
            bitrate_bps=float(cat.get('bitrate_bps', DEFAULT_BITRATE_BPS)),
        )

        wl = section('workload')
        num_requests = wl.get('num_requests')
        num_buckets = wl.get('num_buckets')
        if num_requests is None and num_buckets is None:
            num_requests = 100_000
        workload = WorkloadSource(
            path=wl.get('path'),
            arrival=ArrivalModel(lam=float(wl.get('lam', 15.0)), n_max=int(wl.get('n_max', 27)),
                                 unit_s=float(wl.get('unit_s', 60.0))),
            alpha=float(wl.get('alpha', 0.77)),
            shuffle_ranks=bool(wl.get('shuffle_ranks', False)),
            num_buckets=None if num_buckets is None else int(num_buckets),
            num_requests=None if num_requests is None else int(num_requests),
        )

        ses = section('session')
        session = SessionModel(enabled=bool(ses.get('enabled', True)),
                               early_quit_prob=float(ses.get('early_quit_prob', 0.70)),
                               early_window_s=float(ses.get('early_window_s', 1200.0)))

        ca = section('cache')
        capacity_bytes = ca.get('capacity_bytes')
        capacity_fraction = ca.get('capacity_fraction')
        if capacity_bytes is None and capacity_fraction is None:
            capacity_fraction = 0.10
        cache = CacheSettings(capacity_bytes=None if capacity_bytes is None else int(capacity_bytes),
                              capacity_fraction=None if capacity_fraction is None else float(capacity_fraction),
                              hit_latency_s=float(ca.get('hit_latency_s', 0.0)),
                              debug=bool(ca.get('debug', False)))

        po = section('policy')
        policy = PolicyConfig(
            kind=po.get('kind', 'RV'),
            rv=RvParams(alpha=float(po.get('alpha', 0.77)), b=float(po.get('b', 1.0)),
                        k=float(po.get('k', 1_000_000.0)), epsilon_ms=int(po.get('epsilon_ms', 1))),
            lru_k=LruKParams(**dict(po.get('lru_k', {}))),
            lfu_aging=LfuAgingParams(**dict(po.get('lfu_aging', {}))),
            gds=GdsParams(**dict(po.get('gds', {}))),
            seed=int(po.get('seed', 0)),
        )

        out = section('output')
        output = OutputSettings(directory=str(out.get('directory', 'results')),
                                eviction_log=bool(out.get('eviction_log', False)))

        sw = section('sweep')
        axis = sw.get('axis')
        values = sw.get('values', [])
        policies = sw.get('policies', [])
        if not isinstance(values, list) or not isinstance(policies, list):
            raise ConfigurationError("sweep.values and sweep.policies must be arrays")
        sweep = SweepSettings(axis=None if axis is None else str(axis), values=tuple(values),
                              policies=tuple(str(p) for p in policies))
    except ConfigurationError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"invalid configuration value: {e}") from e

    return SimConfig(catalog=catalog, workload=workload, session=session, cache=cache, policy=policy,
                     output=output, sweep=sweep, seed=int(raw.get('seed', 42)))


def load_config(path=None, overrides: Mapping[str, Any] = None, preset: str = None) -> SimConfig:
    """
    Loads a configuration. Layers, lowest first: the preset (the file's ``preset`` key, else ``preset``,
    else 'standard'), the TOML file, then dotted-key ``overrides``.

    :param path: TOML file, or None for the preset alone.
    :param overrides: Dotted-key overrides, None values are ignored.
    :param preset: Preset used when the file names none.
    :return: Validated SimConfig.
    """
    layer = {}
    if path is not None:
        path = Path(path)
        try:
            with path.open('rb') as fh:
                layer = tomllib.load(fh)
        except OSError as e:
            raise ConfigurationError(f"cannot read config {path}: {e.strerror}") from e
        except tomllib.TOMLDecodeError as e:
            raise ParseError(str(e), path=path) from e
        except UnicodeDecodeError as e:
            line = e.object[:e.start].count(b'\n') + 1
            raise ParseError(f"not valid UTF-8 (byte 0x{e.object[e.start]:02x})", path=path, line=line) from None

    preset_name = layer.pop('preset', None) or preset or 'standard'
    if preset_name not in PRESETS:
        raise ConfigurationError(f"unknown preset {preset_name!r}, expected one of {sorted(PRESETS)}")
    raw = _merge(copy.deepcopy(PRESETS[preset_name]), layer)
    if overrides:
        raw = apply_overrides(raw, overrides)
    logger.debug("loaded config from %s with preset %s", path, preset_name)
    return config_from_dict(raw)


def config_record(config: SimConfig) -> Dict[str, Any]:
    """Flat key-value view of a config, stored next to its report."""
    workload = config.workload
    policy = config.policy
    return {
        'seed': config.seed,
        'policy': policy.kind.value,
        'capacity_bytes': config.cache.capacity_bytes,
        'capacity_fraction': config.cache.capacity_fraction,
        'hit_latency_s': config.cache.hit_latency_s,
        'catalog_path': config.catalog.path,
        'num_videos': config.catalog.num_videos,
        'num_servers': config.catalog.num_servers,
        'trace_path': workload.path,
        'lam': workload.arrival.lam,
        'n_max': workload.arrival.n_max,
        'unit_s': workload.arrival.unit_s,
        'alpha': workload.alpha,
        'num_requests': workload.num_requests,
        'num_buckets': workload.num_buckets,
        'session': config.session.enabled,
        'early_quit_prob': config.session.early_quit_prob,
        'early_window_s': config.session.early_window_s,
        'rv_alpha': policy.rv.alpha,
        'rv_b': policy.rv.b,
        'rv_k': policy.rv.k,
        'rv_epsilon_ms': policy.rv.epsilon_ms,
        'lru_k_k': policy.lru_k.k,
        'lru_k_rp_ms': policy.lru_k.rp_ms,
        'lfu_max_count': policy.lfu_aging.max_count,
        'lfu_interval_events': policy.lfu_aging.interval_events,
        'gds_cost': policy.gds.cost,
        'policy_seed': policy.seed,
    }
