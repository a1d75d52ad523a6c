from __future__ import annotations

import heapq
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Deque, Iterable, List, NamedTuple, Tuple

from .catalog import VideoMeta
from .exceptions import CacheInvariantError, ConfigurationError, DomainError

__all__ = [
    'CacheEntry',
    'EvictionRecord',
    'Admission',
    'Outcome',
    'ProxyCache',
    'write_eviction_log',
]

logger = logging.getLogger(__name__)

# lazily deleted heap records are compacted once they outnumber live entries by this factor
_COMPACT_FACTOR = 4


@dataclass(eq=False)
class CacheEntry:
    """
    A resident video and the metadata replacement policies score it with. ``now - admit_time_ms`` is the
    staying time, ``t_cur_ms`` the latest and ``t_ref_ms`` the previous reference.
    """
    video_id: int
    size_bytes: int
    admit_time_ms: int
    t_ref_ms: int
    t_cur_ms: int
    freq_count: int = 1
    stored_key: float = 0.0
    k_access_times: Deque[int] = field(default_factory=deque)
    seq: int = field(default=-1, repr=False)


class EvictionRecord(NamedTuple):
    timestamp_ms: int
    video_id: int
    score: float


class Admission(NamedTuple):
    cached: bool  # False when the object is larger than the whole cache and bypasses it
    evicted: Tuple[int, ...]


class Outcome(NamedTuple):
    hit: bool
    cached: bool
    evicted: Tuple[int, ...]


class ProxyCache:
    """
    Byte-capacity cache of whole videos. On a miss the video is always admitted, evicting the residents with
    the lowest policy score until it fits; ties go to the least recently used entry. Objects larger than the
    capacity bypass the cache.

    :param capacity_bytes: Capacity in bytes. 0 gives a cache that bypasses every object.
    :param policy: Replacement policy providing the scores (see ``vodcache.policies``).
    :param debug: Re-check capacity, byte accounting and victim minimality after every operation.
    :param log_evictions: Keep an ``EvictionRecord`` per eviction in ``eviction_log``.
    """

    def __init__(self, capacity_bytes: int, policy, debug: bool = False, log_evictions: bool = False):
        if capacity_bytes < 0 or int(capacity_bytes) != capacity_bytes:
            raise ConfigurationError(f"capacity_bytes must be a non-negative integer, got {capacity_bytes}")
        self.capacity_bytes = int(capacity_bytes)
        self.policy = policy
        self.debug = debug
        self.log_evictions = log_evictions
        self.used_bytes = 0
        self.evictions = 0
        self.eviction_log: List[EvictionRecord] = []
        self._entries = {}
        self._heap = []
        self._seq = 0

    def __len__(self):
        return len(self._entries)

    def __contains__(self, video_id):
        return video_id in self._entries

    @property
    def entries(self):
        return MappingProxyType(self._entries)

    def lookup(self, video_id: int, now_ms: int) -> bool:
        """
        Looks up a video. A hit moves t_cur to t_ref, records the new reference and lets the policy refresh
        the stored key. A miss leaves the cache untouched.

        :return: True on a hit.
        """
        entry = self._entries.get(video_id)
        if entry is None:
            return False
        entry.t_ref_ms = entry.t_cur_ms
        entry.t_cur_ms = now_ms
        entry.freq_count += 1
        entry.k_access_times.append(now_ms)
        entry.stored_key = self.policy.key_on_hit(entry, now_ms)
        self._push(entry)
        if self.debug:
            self.check_invariants()
        return True

    def admit(self, video: VideoMeta, now_ms: int) -> Admission:
        """
        Brings a video into the cache, evicting minimum-score residents one at a time until it fits.

        :param video: Video to admit. Must not be resident.
        :param now_ms: Current time.
        :return: Admission with the victims in eviction order, or ``cached=False`` for an oversized video.
        """
        if video.video_id in self._entries:
            raise DomainError(f"video {video.video_id} is already resident")
        if video.size_bytes > self.capacity_bytes:
            logger.debug("video %d (%d bytes) exceeds the capacity, bypassing", video.video_id, video.size_bytes)
            return Admission(False, ())
        self._sync_policy(now_ms)

        evicted = []
        while self.used_bytes + video.size_bytes > self.capacity_bytes:
            evicted.append(self._evict_one(now_ms))

        entry = CacheEntry(video_id=video.video_id, size_bytes=video.size_bytes, admit_time_ms=now_ms,
                           t_ref_ms=now_ms, t_cur_ms=now_ms,
                           k_access_times=self.policy.history_for(video.video_id, now_ms))
        entry.k_access_times.append(now_ms)
        entry.stored_key = self.policy.key_on_admit(entry, now_ms)
        self._entries[video.video_id] = entry
        self.used_bytes += video.size_bytes
        self._push(entry)
        if self.debug:
            self.check_invariants()
        return Admission(True, tuple(evicted))

    def access(self, video: VideoMeta, now_ms: int) -> Outcome:
        """Serves one request: the policy observes it, then lookup, then admission on a miss."""
        self.policy.observe(video.video_id, now_ms)
        self._sync_policy(now_ms)
        if self.lookup(video.video_id, now_ms):
            return Outcome(True, True, ())
        admission = self.admit(video, now_ms)
        return Outcome(False, admission.cached, admission.evicted)

    def resident_set(self) -> List[Tuple[int, float]]:
        return [(video_id, self._entries[video_id].stored_key) for video_id in sorted(self._entries)]

    def check_invariants(self):
        used = sum(entry.size_bytes for entry in self._entries.values())
        if used != self.used_bytes:
            raise CacheInvariantError(f"used_bytes is {self.used_bytes} but residents sum to {used}")
        if self.used_bytes > self.capacity_bytes:
            raise CacheInvariantError(f"used_bytes {self.used_bytes} exceeds capacity {self.capacity_bytes}")
        for entry in self._entries.values():
            if not entry.admit_time_ms <= entry.t_ref_ms <= entry.t_cur_ms:
                raise CacheInvariantError(f"video {entry.video_id}: reference times out of order")
            if entry.freq_count < 1:
                raise CacheInvariantError(f"video {entry.video_id}: freq_count {entry.freq_count}")

    def _push(self, entry: CacheEntry):
        self._seq += 1
        entry.seq = self._seq
        if not self.policy.indexed:
            return
        heapq.heappush(self._heap, (entry.stored_key, entry.t_cur_ms, entry.seq, entry.video_id))
        if len(self._heap) > _COMPACT_FACTOR * len(self._entries) + 1024:
            self._rebuild_index()

    def _rebuild_index(self):
        self._heap = [(e.stored_key, e.t_cur_ms, e.seq, e.video_id) for e in self._entries.values()]
        heapq.heapify(self._heap)

    def _sync_policy(self, now_ms):
        if not self.policy.pending_rescore:
            return
        for entry in self._entries.values():
            entry.stored_key = self.policy.rescore(entry, now_ms)
        self.policy.pending_rescore = False
        if self.policy.indexed:
            self._rebuild_index()

    def _select_victim(self, now_ms) -> Tuple[CacheEntry, float]:
        if not self.policy.indexed:
            residents = list(self._entries.values())
            scores = self.policy.score_round(residents, now_ms)
            _, entry, score = min(((s, e.t_cur_ms, e.seq), e, s) for s, e in zip(scores, residents))
            return entry, score

        while self._heap:
            key, _, seq, video_id = self._heap[0]
            entry = self._entries.get(video_id)
            if entry is None or entry.seq != seq:
                heapq.heappop(self._heap)
                continue
            heapq.heappop(self._heap)
            if self.debug:
                best = min(self._entries.values(), key=lambda e: (e.stored_key, e.t_cur_ms, e.seq))
                if best is not entry:
                    raise CacheInvariantError(f"victim {video_id} (key {key}) is not the minimum; "
                                              f"{best.video_id} has key {best.stored_key}")
            return entry, key
        raise CacheInvariantError("eviction requested from an empty cache index")

    def _evict_one(self, now_ms) -> int:
        entry, score = self._select_victim(now_ms)
        del self._entries[entry.video_id]
        self.used_bytes -= entry.size_bytes
        self.evictions += 1
        self.policy.on_evict(entry, score, now_ms)
        if self.log_evictions:
            self.eviction_log.append(EvictionRecord(now_ms, entry.video_id, score))
        return entry.video_id


def write_eviction_log(records: Iterable[EvictionRecord], path) -> None:
    """Writes ``timestamp_ms,evicted_video_id,score`` lines. Scores use ``repr`` so reruns are byte-identical."""
    with Path(path).open('w', encoding='ascii', newline='\n') as fh:
        for record in records:
            fh.write(f"{record.timestamp_ms},{record.video_id},{float(record.score)!r}\n")
