from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional

import numpy as np

from .cache import CacheEntry
from .catalog import Catalog, ServerProfile
from .exceptions import ConfigurationError

__all__ = [
    'PolicyKind',
    'POLICY_ALIASES',
    'POLICY_KINDS',
    'RvParams',
    'LruKParams',
    'LfuAgingParams',
    'GdsParams',
    'PolicyConfig',
    'PopularityEstimator',
    'ScoreContext',
    'age',
    'transfer_cost',
    'reaccess_probability',
    'rank_value',
    'policy_score',
    'ReplacementPolicy',
    'LruPolicy',
    'LfuPolicy',
    'FifoPolicy',
    'LfuAgingPolicy',
    'LfudaPolicy',
    'RandomPolicy',
    'GreedyDualSizePolicy',
    'LruKPolicy',
    'RankValuePolicy',
    'make_policy',
]

logger = logging.getLogger(__name__)


class PolicyKind(str, Enum):
    RV = 'RV'
    LRU = 'LRU'
    LFU = 'LFU'
    LFU_AGING = 'LFU_AGING'
    LFUDA = 'LFUDA'
    FIFO = 'FIFO'
    RAND = 'RAND'
    GDS = 'GDS'
    GDS_F = 'GDS_F'
    LRU_K = 'LRU_K'

    @classmethod
    def parse(cls, value) -> 'PolicyKind':
        if isinstance(value, cls):
            return value
        name = str(value).strip().upper().replace('-', '_')
        name = POLICY_ALIASES.get(name, name)
        try:
            return cls(name)
        except ValueError:
            raise ConfigurationError(f"unknown policy kind {value!r}, expected one of "
                                     f"{[k.value for k in cls] + sorted(POLICY_ALIASES)}") from None


# the aging variant of GreedyDual-Size keys on reference count, which is GDS_F
POLICY_ALIASES = {'GDS_AGING': 'GDS_F', 'GDSF': 'GDS_F', 'RANDOM': 'RAND'}

POLICY_KINDS = tuple(PolicyKind)


@dataclass(frozen=True)
class RvParams:
    """
    Parameters of the rank value.

    :param alpha: Zipf-like exponent applied to the re-access probability.
    :param b: Weight of the size penalty.
    :param k: Transfer allowance in bytes of the cost term Cs + k/Bs.
    :param epsilon_ms: Lower clamp of the reference gap in the age denominator.
    """
    alpha: float = 0.77
    b: float = 1.0
    k: float = 1_000_000.0
    epsilon_ms: int = 1

    def __post_init__(self):
        errors = []
        if not self.alpha > 0:
            errors.append(f"rv.alpha must be > 0, got {self.alpha}")
        if not self.k > 0:
            errors.append(f"rv.k must be > 0, got {self.k}")
        if int(self.epsilon_ms) != self.epsilon_ms or self.epsilon_ms < 1:
            errors.append(f"rv.epsilon_ms must be an integer >= 1, got {self.epsilon_ms}")
        if errors:
            raise ConfigurationError(errors)


@dataclass(frozen=True)
class LruKParams:
    k: int = 2
    rp_ms: int = 3_600_000

    def __post_init__(self):
        if self.k < 1 or self.rp_ms < 1:
            raise ConfigurationError(f"lru_k needs k >= 1 and rp_ms >= 1, got k={self.k}, rp_ms={self.rp_ms}")


@dataclass(frozen=True)
class LfuAgingParams:
    max_count: int = 255
    interval_events: int = 10_000

    def __post_init__(self):
        if self.max_count < 1 or self.interval_events < 1:
            raise ConfigurationError(f"lfu_aging needs max_count >= 1 and interval_events >= 1, got "
                                     f"max_count={self.max_count}, interval_events={self.interval_events}")


@dataclass(frozen=True)
class GdsParams:
    """
    :param cost: 'transfer' uses Cs + k/Bs, 'latency' the full fetch time Cs + size/Bs, 'unit' a cost of 1.
    :param k: Transfer allowance in bytes for the 'transfer' cost.
    """
    cost: str = 'transfer'
    k: float = 1_000_000.0

    def __post_init__(self):
        if self.cost not in ('transfer', 'latency', 'unit'):
            raise ConfigurationError(f"gds.cost must be 'transfer', 'latency' or 'unit', got {self.cost!r}")
        if not self.k > 0:
            raise ConfigurationError(f"gds.k must be > 0, got {self.k}")


@dataclass(frozen=True)
class PolicyConfig:
    kind: PolicyKind = PolicyKind.RV
    rv: RvParams = field(default_factory=RvParams)
    lru_k: LruKParams = field(default_factory=LruKParams)
    lfu_aging: LfuAgingParams = field(default_factory=LfuAgingParams)
    gds: GdsParams = field(default_factory=GdsParams)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'kind', PolicyKind.parse(self.kind))


class PopularityEstimator:
    """
    Frequency histogram of the request stream. ``v(i)`` is the number of videos seen so far that were
    requested at least i times.
    """

    def __init__(self):
        self._counts: Dict[int, int] = {}
        self._levels: List[int] = []  # _levels[i - 1] == V_i

    def observe(self, video_id: int) -> int:
        count = self._counts.get(video_id, 0) + 1
        self._counts[video_id] = count
        if count > len(self._levels):
            self._levels.append(0)
        self._levels[count - 1] += 1
        return count

    def count(self, video_id: int) -> int:
        return self._counts.get(video_id, 0)

    def v(self, i: int) -> int:
        if i <= 0:
            return len(self._counts)
        return self._levels[i - 1] if i <= len(self._levels) else 0

    @property
    def support_size(self) -> int:
        return len(self._levels)

    def histogram(self) -> List[int]:
        return list(self._levels)

    def is_consistent(self) -> bool:
        levels = self._levels
        return all(x >= 0 for x in levels) and all(a >= b for a, b in zip(levels, levels[1:]))


def age(entry: CacheEntry, now_ms: int, epsilon_ms: int = 1) -> float:
    """
    Staying time divided by the gap between the last two references.

    :param entry: Resident entry.
    :param now_ms: Current time.
    :param epsilon_ms: Lower clamp of the gap.
    :return: (now - admit_time) / max(t_cur - t_ref, epsilon_ms)
    """
    return (now_ms - entry.admit_time_ms) / max(entry.t_cur_ms - entry.t_ref_ms, epsilon_ms)


def transfer_cost(server: ServerProfile, k: float) -> float:
    """Cost in seconds of fetching ``k`` bytes from ``server``: Cs + k/Bs."""
    return server.connect_time_s + k / server.bandwidth_Bps


def reaccess_probability(est: PopularityEstimator, video_freq: int, size_bytes: int, params: RvParams) -> float:
    """
    Size-penalized, Zipf-corrected re-access probability.

    :param est: Popularity estimator.
    :param video_freq: Number of requests seen for the video, i.
    :param size_bytes: Size of the video.
    :param params: RV parameters.
    :return: p^(1/alpha) / max(log10(size), 1)^b with p = V_(i+1) / V_i, or 1 / (1 + support size) when V_i is 0.
    """
    v_i = est.v(video_freq)
    if v_i > 0:
        p = est.v(video_freq + 1) / v_i
    else:
        p = 1.0 / (1 + est.support_size)
    return p ** (1.0 / params.alpha) / max(math.log10(size_bytes), 1.0) ** params.b


def rank_value(entry: CacheEntry, server: ServerProfile, est: PopularityEstimator, now_ms: int,
               params: RvParams, at_admission: bool = False, video_freq: int = None) -> float:
    """
    Rank value Age + (cost / size) * Pv of a resident video. The age is 0 at admission.

    :param video_freq: Request count used for Pv. Taken from the estimator if None.
    """
    if video_freq is None:
        video_freq = est.count(entry.video_id) or entry.freq_count
    entry_age = 0.0 if at_admission else age(entry, now_ms, params.epsilon_ms)
    cost = transfer_cost(server, params.k)
    return entry_age + cost / entry.size_bytes * reaccess_probability(est, video_freq, entry.size_bytes, params)


@dataclass
class ScoreContext:
    """Everything beyond the entry a score may depend on."""
    now_ms: int = 0
    at_admission: bool = False
    server: Optional[ServerProfile] = None
    estimator: Optional[PopularityEstimator] = None
    rv: RvParams = field(default_factory=RvParams)
    inflation: float = 0.0
    cost: float = 1.0
    aged_count: float = 0.0
    k: int = 2
    rng: Optional[np.random.Generator] = None


def _missing(context: ScoreContext, kind: PolicyKind, names):
    missing = [name for name in names if getattr(context, name) is None]
    raise ConfigurationError(f"{kind.value} scores need ScoreContext.{', '.join(missing)}")


def policy_score(kind, entry: CacheEntry, context: ScoreContext) -> float:
    """
    Eviction score of a resident entry; the lowest score is evicted first.

    :param kind: PolicyKind or its name.
    :param entry: Resident entry.
    :param context: Policy state the score depends on (inflation value, estimator, server, ...).
    :return: The score.
    """
    kind = PolicyKind.parse(kind)
    if kind is PolicyKind.LRU:
        return float(entry.t_cur_ms)
    if kind is PolicyKind.LFU:
        return float(entry.freq_count)
    if kind is PolicyKind.FIFO:
        return float(entry.admit_time_ms)
    if kind is PolicyKind.LFU_AGING:
        return float(context.aged_count)
    if kind is PolicyKind.LFUDA:
        return entry.freq_count + context.inflation
    if kind is PolicyKind.GDS:
        return context.inflation + context.cost / entry.size_bytes
    if kind is PolicyKind.GDS_F:
        return context.inflation + entry.freq_count * context.cost / entry.size_bytes
    if kind is PolicyKind.LRU_K:
        if len(entry.k_access_times) < context.k:
            return -math.inf
        return float(entry.k_access_times[-context.k])
    if kind is PolicyKind.RAND:
        if context.rng is None:
            _missing(context, kind, ('rng',))
        return float(context.rng.random())
    if context.server is None or context.estimator is None:
        _missing(context, kind, ('server', 'estimator'))
    return rank_value(entry, context.server, context.estimator, context.now_ms, context.rv,
                      at_admission=context.at_admission)


class ReplacementPolicy:
    """
    Scoring side of a cache. The cache keeps each entry's ``stored_key`` and evicts the minimum; policies
    compute the key on admission and on every hit. Policies whose keys all shift at once set
    ``pending_rescore`` and the cache asks ``rescore`` for every resident.
    """

    kind: PolicyKind = None
    indexed = True
    history_length = 1

    def __init__(self, catalog: Catalog = None):
        self.catalog = catalog
        self.pending_rescore = False

    def observe(self, video_id: int, now_ms: int):
        pass

    def context(self, entry: CacheEntry, now_ms: int, at_admission: bool) -> ScoreContext:
        return ScoreContext(now_ms=now_ms, at_admission=at_admission)

    def key_on_admit(self, entry: CacheEntry, now_ms: int) -> float:
        return policy_score(self.kind, entry, self.context(entry, now_ms, True))

    def key_on_hit(self, entry: CacheEntry, now_ms: int) -> float:
        return policy_score(self.kind, entry, self.context(entry, now_ms, False))

    def on_evict(self, entry: CacheEntry, score: float, now_ms: int):
        pass

    def rescore(self, entry: CacheEntry, now_ms: int) -> float:
        return entry.stored_key

    def score_round(self, entries: List[CacheEntry], now_ms: int) -> List[float]:
        return [entry.stored_key for entry in entries]

    def history_for(self, video_id: int, now_ms: int) -> deque:
        return deque(maxlen=self.history_length)

    def __repr__(self):
        return f"{type(self).__name__}()"


class LruPolicy(ReplacementPolicy):
    kind = PolicyKind.LRU


class LfuPolicy(ReplacementPolicy):
    kind = PolicyKind.LFU


class FifoPolicy(ReplacementPolicy):
    kind = PolicyKind.FIFO


class LfuAgingPolicy(ReplacementPolicy):
    """LFU over capped counts that are halved every ``interval_events`` requests."""

    kind = PolicyKind.LFU_AGING

    def __init__(self, catalog: Catalog = None, params: LfuAgingParams = None):
        super().__init__(catalog)
        self.params = params if params is not None else LfuAgingParams()
        self.counts: Dict[int, float] = {}
        self.events = 0

    def observe(self, video_id, now_ms):
        self.events += 1
        if self.events % self.params.interval_events == 0 and self.counts:
            for video in self.counts:
                self.counts[video] /= 2.0
            self.pending_rescore = True

    def context(self, entry, now_ms, at_admission):
        if at_admission:
            count = 1.0
        else:
            count = min(self.counts.get(entry.video_id, 0.0) + 1.0, float(self.params.max_count))
        self.counts[entry.video_id] = count
        return ScoreContext(now_ms=now_ms, at_admission=at_admission, aged_count=count)

    def rescore(self, entry, now_ms):
        return self.counts[entry.video_id]

    def on_evict(self, entry, score, now_ms):
        self.counts.pop(entry.video_id, None)


class LfudaPolicy(ReplacementPolicy):
    """LFU with dynamic aging: keys are count + cache age, the cache age becoming each victim's key."""

    kind = PolicyKind.LFUDA

    def __init__(self, catalog: Catalog = None):
        super().__init__(catalog)
        self.cache_age = 0.0

    def context(self, entry, now_ms, at_admission):
        return ScoreContext(now_ms=now_ms, at_admission=at_admission, inflation=self.cache_age)

    def on_evict(self, entry, score, now_ms):
        self.cache_age = score


class RandomPolicy(ReplacementPolicy):
    kind = PolicyKind.RAND
    indexed = False

    def __init__(self, catalog: Catalog = None, seed: int = 0):
        super().__init__(catalog)
        self.rng = np.random.default_rng(seed)

    def key_on_admit(self, entry, now_ms):
        return 0.0

    def key_on_hit(self, entry, now_ms):
        return 0.0

    def score_round(self, entries, now_ms):
        return self.rng.random(len(entries)).tolist()


class GreedyDualSizePolicy(ReplacementPolicy):
    """
    GreedyDual-Size. Keys are L + cost/size, or L + count * cost/size with ``frequency``; L is raised to the
    key of every victim.
    """

    def __init__(self, catalog: Catalog, params: GdsParams = None, frequency: bool = False):
        super().__init__(catalog)
        self.params = params if params is not None else GdsParams()
        self.kind = PolicyKind.GDS_F if frequency else PolicyKind.GDS
        self.inflation = 0.0

    def cost(self, video_id: int) -> float:
        if self.params.cost == 'unit':
            return 1.0
        server = self.catalog.server_of(video_id)
        if self.params.cost == 'latency':
            return server.connect_time_s + self.catalog.video(video_id).size_bytes / server.bandwidth_Bps
        return transfer_cost(server, self.params.k)

    def context(self, entry, now_ms, at_admission):
        return ScoreContext(now_ms=now_ms, at_admission=at_admission, inflation=self.inflation,
                            cost=self.cost(entry.video_id))

    def on_evict(self, entry, score, now_ms):
        self.inflation = score


class LruKPolicy(ReplacementPolicy):
    """
    LRU-K. Entries with fewer than K recorded references go first, then the oldest K-th last reference.
    Reference histories outlive eviction for ``rp_ms``.
    """

    kind = PolicyKind.LRU_K

    def __init__(self, catalog: Catalog = None, params: LruKParams = None):
        super().__init__(catalog)
        self.params = params if params is not None else LruKParams()
        self.history_length = self.params.k
        self.retained: Dict[int, tuple] = {}
        self.events = 0

    def _expired(self, evicted_at, now_ms):
        return now_ms - evicted_at > self.params.rp_ms

    def observe(self, video_id, now_ms):
        self.events += 1
        if self.events % 1000 == 0:
            for video in [v for v, (_, t) in self.retained.items() if self._expired(t, now_ms)]:
                del self.retained[video]

    def history_for(self, video_id, now_ms):
        retained = self.retained.pop(video_id, None)
        if retained is None or self._expired(retained[1], now_ms):
            return deque(maxlen=self.params.k)
        return retained[0]

    def context(self, entry, now_ms, at_admission):
        return ScoreContext(now_ms=now_ms, at_admission=at_admission, k=self.params.k)

    def on_evict(self, entry, score, now_ms):
        self.retained[entry.video_id] = (entry.k_access_times, now_ms)


class RankValuePolicy(ReplacementPolicy):
    """Rank value replacement: evicts the lowest Age + (cost / size) * Pv."""

    kind = PolicyKind.RV

    def __init__(self, catalog: Catalog, params: RvParams = None):
        super().__init__(catalog)
        self.params = params if params is not None else RvParams()
        self.estimator = PopularityEstimator()

    def observe(self, video_id, now_ms):
        self.estimator.observe(video_id)

    def context(self, entry, now_ms, at_admission):
        return ScoreContext(now_ms=now_ms, at_admission=at_admission, estimator=self.estimator,
                            server=self.catalog.server_of(entry.video_id), rv=self.params)


def make_policy(config: PolicyConfig, catalog: Catalog) -> ReplacementPolicy:
    """
    Builds the policy a config selects.

    :param config: Policy configuration.
    :param catalog: Catalog the cache serves; cost-aware policies read server profiles from it.
    :return: A fresh policy instance owning all of its state.
    """
    kind = config.kind
    if kind is PolicyKind.RV:
        return RankValuePolicy(catalog, config.rv)
    if kind is PolicyKind.LRU:
        return LruPolicy(catalog)
    if kind is PolicyKind.LFU:
        return LfuPolicy(catalog)
    if kind is PolicyKind.FIFO:
        return FifoPolicy(catalog)
    if kind is PolicyKind.LFU_AGING:
        return LfuAgingPolicy(catalog, config.lfu_aging)
    if kind is PolicyKind.LFUDA:
        return LfudaPolicy(catalog)
    if kind is PolicyKind.RAND:
        return RandomPolicy(catalog, config.seed)
    if kind in (PolicyKind.GDS, PolicyKind.GDS_F):
        return GreedyDualSizePolicy(catalog, config.gds, frequency=kind is PolicyKind.GDS_F)
    if kind is PolicyKind.LRU_K:
        return LruKPolicy(catalog, config.lru_k)
    raise ConfigurationError(f"unknown policy kind {kind!r}")
