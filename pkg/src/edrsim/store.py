"""Per-EDR bucket storage and the HIT/MISS reuse decision."""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List, Optional, Sequence

from .core import Bucket, BucketId, Query, SimTime, StoredEntry
from .lsh import nearest_similar

log = logging.getLogger(__name__)


class BucketNotOwned(KeyError):
    """Raised when a store is asked about a bucket it does not hold."""


class DuplicateOwnership(ValueError):
    pass


class Decision(Enum):
    HIT = "HIT"
    MISS = "MISS"


@dataclass(frozen=True)
class ReuseDecision:
    kind: Decision
    lookup_cost_ms: float = 0.0
    entry: Optional[StoredEntry] = None
    similarity: Optional[float] = None

    @property
    def hit(self) -> bool:
        return self.kind is Decision.HIT


@dataclass
class BucketTransfer:
    bucket: Bucket
    total_bytes: int
    origin: int
    destination: int
    # id(entry) -> secondary table ids, so the destination can rebuild its index
    secondary: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.origin == self.destination:
            raise ValueError("transfer origin and destination must differ")


class ReuseStore:
    """Buckets owned by one EDR.

    ``secondary`` maps (table, hash) of the non-routing LSH tables to stored
    entries, which widens the candidate set for vector lookups to every
    locally held bucket that collides in any table.
    """

    def __init__(self, node_id: int, budget_bytes: Optional[int] = None):
        self.node_id = node_id
        self.budget_bytes = budget_bytes or None
        self.buckets: Dict[BucketId, Bucket] = {}
        self.bytes_stored = 0
        self.evictions = 0
        self._dedup: Dict[BucketId, dict] = {}
        self._secondary: Dict[BucketId, List[StoredEntry]] = {}
        self._entry_ids: Dict[int, List[BucketId]] = {}
        self._age: list = []
        self._seq = 0

    # -- ownership -----------------------------------------------------------

    def owns(self, b: BucketId) -> bool:
        return b in self.buckets

    def create(self, b: BucketId, reuse_rating: float = 0.0) -> Bucket:
        if b in self.buckets:
            raise DuplicateOwnership(f"node {self.node_id} already owns {b}")
        bucket = Bucket(id=b, reuse_rating=reuse_rating)
        self.buckets[b] = bucket
        self._dedup[b] = {}
        return bucket

    def bucket(self, b: BucketId) -> Bucket:
        try:
            return self.buckets[b]
        except KeyError:
            raise BucketNotOwned(f"node {self.node_id} does not own bucket {b}") from None

    def __iter__(self) -> Iterator[Bucket]:
        return iter(self.buckets.values())

    # -- reuse path ----------------------------------------------------------

    def lookup(
        self,
        q: Query,
        bucket_id: BucketId,
        threshold: float,
        lookup_cost_ms: float = 0.0,
        secondary_ids: Sequence[BucketId] = (),
    ) -> ReuseDecision:
        bucket = self.bucket(bucket_id)
        miss = ReuseDecision(Decision.MISS, lookup_cost_ms)
        if bucket.app is not None and bucket.app != q.app:
            decision = miss
        elif q.vector is None:
            if bucket.entries and q.reuse_coin:
                decision = ReuseDecision(Decision.HIT, lookup_cost_ms, bucket.entries[0], 1.0)
            else:
                decision = miss
        else:
            found = nearest_similar(self._candidates(bucket, secondary_ids, q.app), q.vector, threshold)
            if found is None:
                decision = miss
            else:
                entry, sim = found
                decision = ReuseDecision(Decision.HIT, lookup_cost_ms, entry, sim)
        if decision.hit:
            bucket.stats.hits += 1
        else:
            bucket.stats.misses += 1
        return decision

    def _candidates(self, bucket: Bucket, secondary_ids, app) -> list:
        if not secondary_ids:
            return bucket.entries
        seen = {id(e) for e in bucket.entries}
        out = list(bucket.entries)
        for sid in secondary_ids:
            for e in self._secondary.get(sid, ()):
                if id(e) not in seen and e.app == app:
                    seen.add(id(e))
                    out.append(e)
        return out

    def insert(
        self,
        q: Query,
        bucket_id: BucketId,
        result: object,
        result_size_bytes: int,
        now: SimTime,
        secondary_ids: Sequence[BucketId] = (),
    ) -> Optional[StoredEntry]:
        """Store a processed query with its result. Returns None when deduplicated
        or when the bucket belongs to another application."""
        bucket = self.bucket(bucket_id)
        if bucket.app is None:
            bucket.app = q.app
        elif bucket.app != q.app:
            log.debug("bucket %s holds app %s; not storing %s", bucket_id, bucket.app, q.app)
            return None
        entry = StoredEntry(
            query_index=q.index,
            app=q.app,
            result=result,
            size_bytes=q.size_bytes,
            result_size_bytes=result_size_bytes,
            stored_at=now,
            vector=q.vector,
            bucket_key=q.bucket_key,
        )
        key = entry.dedup_key()
        dedup = self._dedup[bucket_id]
        if key in dedup:
            return None
        dedup[key] = entry
        self._add_entry(bucket, entry, tuple(secondary_ids))
        self._enforce_budget()
        return entry

    def _add_entry(self, bucket: Bucket, entry: StoredEntry, secondary_ids: tuple):
        bucket.entries.append(entry)
        bucket.stats.bytes_stored += entry.total_bytes
        self.bytes_stored += entry.total_bytes
        if secondary_ids:
            self._entry_ids[id(entry)] = list(secondary_ids)
            for sid in secondary_ids:
                self._secondary.setdefault(sid, []).append(entry)
        if self.budget_bytes is not None:
            self._seq += 1
            heapq.heappush(self._age, (entry.stored_at, self._seq, bucket.id, entry))

    def _remove_entry(self, bucket: Bucket, entry: StoredEntry):
        _discard(bucket.entries, entry)
        bucket.stats.bytes_stored -= entry.total_bytes
        self.bytes_stored -= entry.total_bytes
        self._dedup[bucket.id].pop(entry.dedup_key(), None)
        for sid in self._entry_ids.pop(id(entry), ()):
            self._drop_secondary(sid, entry)

    def _drop_secondary(self, sid: BucketId, entry: StoredEntry):
        lst = self._secondary.get(sid)
        if lst is not None:
            _discard(lst, entry)
            if not lst:
                del self._secondary[sid]

    def _enforce_budget(self):
        if self.budget_bytes is None:
            return
        while self.bytes_stored > self.budget_bytes and self._age:
            stored_at, _, bid, entry = heapq.heappop(self._age)
            bucket = self.buckets.get(bid)
            if bucket is None or not _contains(bucket.entries, entry):
                continue  # stale heap record (bucket exported or entry gone)
            self._remove_entry(bucket, entry)
            self.evictions += 1
            log.debug("node %s evicted entry q%s from %s (stored %.3f ms)",
                      self.node_id, entry.query_index, bid, stored_at)

    # -- transfers -----------------------------------------------------------

    def export_bucket(self, b: BucketId, destination: int) -> BucketTransfer:
        bucket = self.bucket(b)
        secondary = {}
        for e in bucket.entries:
            sids = self._entry_ids.pop(id(e), [])
            for sid in sids:
                self._drop_secondary(sid, e)
            secondary[id(e)] = sids
        del self.buckets[b]
        del self._dedup[b]
        self.bytes_stored -= sum(e.total_bytes for e in bucket.entries)
        return BucketTransfer(bucket, bucket.total_bytes, self.node_id, destination, secondary)

    def import_bucket(self, xfer: BucketTransfer):
        if xfer.destination != self.node_id:
            raise ValueError(f"transfer for node {xfer.destination} delivered to {self.node_id}")
        bucket = xfer.bucket
        if bucket.id in self.buckets:
            raise DuplicateOwnership(f"node {self.node_id} already owns {bucket.id}")
        self.buckets[bucket.id] = bucket
        self._dedup[bucket.id] = {e.dedup_key(): e for e in bucket.entries}
        entries, bucket.entries = bucket.entries, []
        bucket.stats.bytes_stored = 0
        for e in entries:
            self._add_entry(bucket, e, tuple(xfer.secondary.get(id(e), ())))
        self._enforce_budget()


def dump_buckets(store: ReuseStore) -> str:
    """Debug dump: one entry per line, ``bucket_id, app_tag, stored_at_ms, result_size_bytes``."""
    lines = []
    for b in sorted(store.buckets):
        bucket = store.buckets[b]
        for e in bucket.entries:
            lines.append(f"{b}, {e.app}, {e.stored_at!r}, {e.result_size_bytes}")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_dump(text: str) -> list:
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        bid, app, stored_at, size = (p.strip() for p in line.split(","))
        out.append((BucketId.parse(bid), app, float(stored_at), int(size)))
    return out


def _contains(lst: list, obj) -> bool:
    return any(x is obj for x in lst)


def _discard(lst: list, obj):
    for i, x in enumerate(lst):
        if x is obj:
            del lst[i]
            return
