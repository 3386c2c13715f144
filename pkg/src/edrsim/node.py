"""Queueing model of one EDR: ingress hashing, routing, FIFO multi-core service."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional

import numpy as np

from .core import BucketId, Query, SimTime
from .events import EventKind
from .store import ReuseDecision, ReuseStore

log = logging.getLogger(__name__)


class WorkKind(Enum):
    LSH_HASH = "LSH_HASH"
    PROCESS = "PROCESS"
    REUSE_FETCH = "REUSE_FETCH"


@dataclass(eq=False)
class WorkItem:
    query: Query
    kind: WorkKind
    service_ms: float
    enqueued_at: SimTime
    bucket: BucketId
    started_at: Optional[SimTime] = None
    credited_until: Optional[SimTime] = None
    hops_ms: float = 0.0

    def __post_init__(self):
        if not self.service_ms > 0:
            raise ValueError(f"service_ms must be positive, got {self.service_ms}")

    @property
    def serving(self) -> bool:
        return self.kind is not WorkKind.LSH_HASH


@dataclass(frozen=True)
class NodeMetricsWindow:
    node_id: int
    window_start: SimTime
    window_end: SimTime
    cpu_utilisation: float
    busy_ms: float
    mean_req_proc_time: float
    max_queue_delay: float
    per_bucket_cpu_ms: Dict[BucketId, float] = field(default_factory=dict)
    per_bucket_reuse_rate: Dict[BucketId, float] = field(default_factory=dict)


class ForwardingTable:
    """BucketId -> owning node. Shared by every node: plan updates are applied
    to all tables at the same simulated instant, so one object stands in for
    the identical per-node copies."""

    def __init__(self, num_nodes: int, entries: Optional[Dict[BucketId, int]] = None):
        self.num_nodes = num_nodes
        self.entries: Dict[BucketId, int] = dict(entries or {})
        self.default_routes = 0

    def default_owner(self, b: BucketId) -> int:
        return b.hash_value % self.num_nodes

    def lookup(self, b: BucketId) -> int:
        owner = self.entries.get(b)
        if owner is None:
            owner = self.default_owner(b)
            self.entries[b] = owner
            self.default_routes += 1
            log.debug("no forwarding entry for %s; defaulting to node %d", b, owner)
        return owner

    def update(self, moves: Dict[BucketId, int]):
        self.entries.update(moves)


class ServiceSampler:
    """Per-query service times drawn up front, so that switching a query between
    the process and reuse paths never shifts any other query's draw."""

    def __init__(self, process_ms: np.ndarray, reuse_ms: np.ndarray):
        self._process = process_ms
        self._reuse = reuse_ms

    @classmethod
    def from_profile(cls, profile, n: int, process_rng, reuse_rng, process_dist=None, reuse_dist=None):
        process_dist = process_dist or profile.process_time_dist
        reuse_dist = reuse_dist or profile.reuse_fetch_dist
        return cls(process_dist.sample(process_rng, n), reuse_dist.sample(reuse_rng, n))

    def process_ms(self, q: Query) -> float:
        return float(self._process[q.index])

    def reuse_ms(self, q: Query) -> float:
        return float(self._reuse[q.index])


class EdrNode:
    def __init__(
        self,
        node_id: int,
        cores: int,
        store: ReuseStore,
        forwarding: ForwardingTable,
        sampler: ServiceSampler,
        hashes_of: Callable[[Query], tuple],
        lsh_ms: float,
        inter_edr_delay_ms: float = 2.0,
        gateway_delay_ms: float = 2.0,
        result_size_bytes: int = 1024,
        store_results: bool = True,
    ):
        if cores <= 0:
            raise ValueError("cores must be positive")
        self.id = node_id
        self.cores = cores
        self.store = store
        self.forwarding = forwarding
        self.sampler = sampler
        self.hashes_of = hashes_of
        self.lsh_ms = lsh_ms
        self.inter_edr_delay_ms = inter_edr_delay_ms
        self.gateway_delay_ms = gateway_delay_ms
        self.result_size_bytes = result_size_bytes
        self.store_results = store_results

        self.queue: deque = deque()
        self.in_service: List[WorkItem] = []
        self.busy_total_ms = 0.0
        self.proc_time_sum = 0.0
        self.proc_count = 0
        self.reset_window(0.0)

    # -- accounting ----------------------------------------------------------

    def reset_window(self, now: SimTime):
        self.window_start = now
        self.busy_ms_in_window = 0.0
        self.max_queue_delay = 0.0
        self.per_bucket_cpu_ms: Dict[BucketId, float] = {}

    def _credit(self, item: WorkItem, upto: SimTime):
        ms = upto - item.credited_until
        if ms <= 0:
            return
        item.credited_until = upto
        self.busy_ms_in_window += ms
        self.busy_total_ms += ms
        b = item.bucket
        self.per_bucket_cpu_ms[b] = self.per_bucket_cpu_ms.get(b, 0.0) + ms
        if item.serving:
            bucket = self.store.buckets.get(b)
            if bucket is not None:
                bucket.stats.cpu_time_since_update += ms

    def apportion(self, now: SimTime):
        """Credit the elapsed part of every in-service item up to ``now``."""
        for item in self.in_service:
            self._credit(item, now)

    def cpu_utilisation(self, now: SimTime) -> float:
        self.apportion(now)
        span = now - self.window_start
        if span <= 0:
            return 0.0
        return min(1.0, self.busy_ms_in_window / (self.cores * span))

    @property
    def mean_req_proc_time(self) -> float:
        return self.proc_time_sum / self.proc_count if self.proc_count else 0.0

    def snapshot_metrics(self, window_end: SimTime, reset: bool = False) -> NodeMetricsWindow:
        util = self.cpu_utilisation(window_end)
        snap = NodeMetricsWindow(
            node_id=self.id,
            window_start=self.window_start,
            window_end=window_end,
            cpu_utilisation=util,
            busy_ms=self.busy_ms_in_window,
            mean_req_proc_time=self.mean_req_proc_time,
            max_queue_delay=self.max_queue_delay,
            per_bucket_cpu_ms=dict(self.per_bucket_cpu_ms),
            per_bucket_reuse_rate={b.id: b.stats.reuse_rate for b in self.store},
        )
        if reset:
            self.reset_window(window_end)
        return snap

    # -- queueing ------------------------------------------------------------

    def enqueue(self, item: WorkItem, now: SimTime) -> list:
        self.queue.append(item)
        return self._start_ready(now)

    def _start_ready(self, now: SimTime) -> list:
        events = []
        while self.queue and len(self.in_service) < self.cores:
            item = self.queue.popleft()
            item.started_at = now
            item.credited_until = now
            wait = now - item.enqueued_at
            if wait > self.max_queue_delay:
                self.max_queue_delay = wait
            if item.serving:
                bucket = self.store.buckets.get(item.bucket)
                if bucket is not None and wait > bucket.stats.max_queue_delay:
                    bucket.stats.max_queue_delay = wait
            self.in_service.append(item)
            events.append((now + item.service_ms, EventKind.SERVICE_END, (self.id, item)))
        return events

    # -- workflow ------------------------------------------------------------

    def admit(self, q: Query, now: SimTime) -> list:
        """Hash the query on this (ingress) node; routing follows on completion."""
        if q.ingress_edr != self.id:
            raise ValueError(f"query {q.index} ingresses at {q.ingress_edr}, not {self.id}")
        bucket = self.bucket_of(q)
        if self.lsh_ms <= 0:
            return self._route(q, bucket, now)
        item = WorkItem(q, WorkKind.LSH_HASH, self.lsh_ms, now, bucket)
        return self.enqueue(item, now)

    def _route(self, q: Query, bucket: BucketId, now: SimTime) -> list:
        owner = self.forwarding.lookup(bucket)
        if owner == self.id:
            return [(now, EventKind.FORWARDED, (owner, q, 0.0))]
        delay = self.inter_edr_delay_ms
        return [(now + delay, EventKind.FORWARDED, (owner, q, delay))]

    def serve(self, decision: ReuseDecision, q: Query, now: SimTime, hops_ms: float = 0.0):
        """Turn a reuse decision into a queued work item. Returns (item, events)."""
        bucket = self.bucket_of(q)
        if decision.hit:
            item = WorkItem(q, WorkKind.REUSE_FETCH, self.sampler.reuse_ms(q), now, bucket)
        else:
            item = WorkItem(q, WorkKind.PROCESS, self.sampler.process_ms(q), now, bucket)
        item.hops_ms = hops_ms
        return item, self.enqueue(item, now)

    def on_complete(self, item: WorkItem, now: SimTime) -> list:
        self._credit(item, now)
        for i, x in enumerate(self.in_service):
            if x is item:
                del self.in_service[i]
                break
        else:
            raise RuntimeError(f"node {self.id}: completed item was not in service")

        events = []
        if item.kind is WorkKind.LSH_HASH:
            events.extend(self._route(item.query, item.bucket, now))
        else:
            if item.kind is WorkKind.PROCESS:
                self.proc_time_sum += item.service_ms
                self.proc_count += 1
                result = ("result", item.query.index)
                if self.store_results and self.store.owns(item.bucket):
                    self._insert(item.query, item.bucket, result, now)
                elif self.store_results:
                    events.append((now, EventKind.DEFERRED_INSERT, (item.query, item.bucket, result)))
            events.append((now + self.gateway_delay_ms, EventKind.RESULT_RETURNED, item))
        events.extend(self._start_ready(now))
        return events

    def _insert(self, q: Query, bucket: BucketId, result, now: SimTime):
        self.store.insert(q, bucket, result, self.result_size_bytes, now, self.secondary_ids(q))

    def bucket_of(self, q: Query) -> BucketId:
        return self.hashes_of(q)[0]

    def secondary_ids(self, q: Query) -> tuple:
        return self.hashes_of(q)[1:]
