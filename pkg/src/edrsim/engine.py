"""Discrete-event simulation of a federation of EDRs with bucket reuse and
orchestration, plus batch sweeps."""

from __future__ import annotations

import logging
import math
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from .config import ConfigError, SimConfig, build_config, to_dict
from .core import BucketId, Query
from .events import EventKind, EventQueue
from .lsh import DimensionMismatch, build_index
from .metrics import MetricsReport
from .node import EdrNode, ForwardingTable, ServiceSampler, WorkItem, WorkKind
from .orchestrator import (
    BucketView, EnvState, EpochGate, GateOutcome, OrchestrationPlan, make_plan,
    transfer_time_ms, trigger_condition,
)
from .store import BucketTransfer, Decision, ReuseDecision, ReuseStore
from .workload import assign_ingress, generate_workload, ingest_trace, substream

log = logging.getLogger(__name__)


@dataclass
class QueryRecord:
    """Latency decomposition of one satisfied query (all ms)."""

    arrival: float
    hash_wait: float = 0.0
    hash_ms: float = 0.0
    hops_ms: float = 0.0
    wait: float = 0.0
    service_ms: float = 0.0
    returned: Optional[float] = None
    kind: Optional[str] = None

    def latency(self) -> float:
        return self.returned - self.arrival


class Simulation:
    def __init__(self, cfg: SimConfig, queries: Optional[Sequence[Query]] = None, record_queries: bool = False):
        self.cfg = cfg
        topo = cfg.topology
        w = cfg.workload
        self.profile = cfg.profile
        self.spec = cfg.workload_spec()
        self.epoch = cfg.epoch_config()
        self.horizon = w.duration_s * 1000.0
        self.num_bins = int(math.ceil(w.duration_s - 1e-9))
        self.record_queries = record_queries
        self.records: Dict[int, QueryRecord] = {}

        if queries is None:
            if w.trace is not None:
                queries = assign_ingress(ingest_trace(w.trace), topo.num_edrs, w.seed)
            else:
                queries = generate_workload(self.spec, topo.num_edrs)
        self.queries = list(queries)
        for q in self.queries:
            if not 0 <= q.ingress_edr < topo.num_edrs:
                raise ConfigError(f"query {q.index} ingresses at unknown EDR {q.ingress_edr}")
        self.vector_mode = any(q.vector is not None for q in self.queries)
        self._hashes = self._hash_all()

        n = len(self.queries)
        sampler = ServiceSampler.from_profile(
            self.profile, n, substream(w.seed, "process"), substream(w.seed, "reuse"))
        self.forwarding = ForwardingTable(topo.num_edrs)
        budget = topo.storage_budget_bytes or None
        lsh_ms = cfg.lsh_ms
        self.nodes: List[EdrNode] = []
        for i in range(topo.num_edrs):
            node = EdrNode(i, topo.cores, ReuseStore(i, budget), self.forwarding, sampler,
                           self._hashes_of, lsh_ms, topo.inter_edr_delay_ms, topo.gateway_delay_ms,
                           self.profile.result_size_bytes, store_results=w.reuse)
            self.nodes.append(node)

        # Ground truth of where each bucket lives (owner, or destination while in flight).
        self.location: Dict[BucketId, int] = {}
        self.in_flight: Dict[BucketId, int] = {}
        self.pending_inserts: Dict[BucketId, list] = defaultdict(list)
        if not self.vector_mode:
            keys = set(range(w.num_buckets)) | {q.bucket_key for q in self.queries}
            rating = self.spec.bucket_rating
            for key in sorted(keys):
                b = BucketId(0, key)
                owner = self.forwarding.default_owner(b)
                self.nodes[owner].store.create(b, rating)
                self.forwarding.entries[b] = owner
                self.location[b] = owner

        self.gate = EpochGate(self.epoch)
        self.events = EventQueue()
        self.report = MetricsReport(
            run_id=cfg.run_id, strategy=cfg.strategy.name.value, profile=self.profile.name,
            rate=cfg.rate, duration_s=w.duration_s, warmup_s=w.warmup_s,
            throughput_per_bin=[0] * self.num_bins, hits_per_bin=[0] * self.num_bins,
            misses_per_bin=[0] * self.num_bins, calls_per_bin=[0] * self.num_bins,
            per_edr_cpu=[[0.0] * self.num_bins for _ in range(topo.num_edrs)],
        )
        self._last_busy = [0.0] * topo.num_edrs
        self._last_bin_time = 0.0
        self._plans: List[OrchestrationPlan] = []

    # -- hashing ---------------------------------------------------------------

    def _hash_all(self) -> List[tuple]:
        if not self.vector_mode:
            out = []
            for q in self.queries:
                if q.bucket_key is None:
                    raise ConfigError("workload mixes profile-mode and vector-mode queries")
                out.append((BucketId(0, q.bucket_key),))
            return out
        index = build_index(self.cfg.lsh_config())
        if any(q.vector is None for q in self.queries):
            raise ConfigError("workload mixes profile-mode and vector-mode queries")
        if not self.queries:
            return []
        try:
            h = index.hash_matrix(np.stack([q.vector.components for q in self.queries]))
        except (DimensionMismatch, ValueError) as e:
            raise ConfigError(f"[lsh] dimension: {e}") from None
        return [tuple(BucketId(t, int(v)) for t, v in enumerate(row)) for row in h]

    def _hashes_of(self, q: Query) -> tuple:
        return self._hashes[q.index]

    # -- snapshots -------------------------------------------------------------

    def _node_env(self, now: float, with_buckets: bool = False) -> EnvState:
        ids = tuple(n.id for n in self.nodes)
        cpu = {n.id: n.cpu_utilisation(now) for n in self.nodes}
        delay = {n.id: n.max_queue_delay for n in self.nodes}
        total = sum(n.proc_count for n in self.nodes)
        mean = sum(n.proc_time_sum for n in self.nodes) / total if total else 0.0
        buckets = {}
        if with_buckets:
            for n in self.nodes:
                for b in n.store:
                    s = b.stats
                    buckets[b.id] = BucketView(n.id, s.cpu_time_since_update, s.reuse_rate,
                                               s.max_queue_delay, s.bytes_stored, s.hits + s.misses)
        return EnvState(ids, cpu, delay, mean, buckets, now)

    # -- orchestration ---------------------------------------------------------

    def orchestrate(self, now: float) -> OrchestrationPlan:
        env = self._node_env(now, with_buckets=True)
        plan = make_plan(self.epoch, env, self.report.orchestration_calls)
        self.apply_plan(plan, now)
        for n in self.nodes:
            n.reset_window(now)
            for b in n.store:
                b.stats.reset_window()
        return plan

    def apply_plan(self, plan: OrchestrationPlan, now: float) -> list:
        """Start bucket transfers and schedule the forwarding-table broadcast.
        Returns the scheduled events."""
        topo = self.cfg.topology
        scheduled = []
        moves: Dict[BucketId, int] = {}
        for d in plan.directives:
            singles = [(d.bucket, d.origin, d.destination)]
            if d.paired_bucket is not None:
                singles.append((d.paired_bucket, d.destination, d.origin))
            if any(self.location.get(b) != o or b in self.in_flight or not self.nodes[o].store.owns(b)
                   for b, o, _ in singles):
                self.report.skipped_directives += 1
                log.info("skipping stale directive %s", d)
                continue
            for b, o, dst in singles:
                xfer = self.nodes[o].store.export_bucket(b, dst)
                self.in_flight[b] = dst
                self.location[b] = dst
                moves[b] = dst
                done = now + transfer_time_ms(xfer.total_bytes, topo.link_bandwidth_bits_per_s,
                                              topo.inter_edr_delay_ms)
                scheduled.append((done, EventKind.TRANSFER_DONE, xfer))
                self.report.moved_buckets += 1
        if moves:
            scheduled.append((now + topo.inter_edr_delay_ms, EventKind.TABLE_UPDATE, moves))
        self.events.extend(scheduled)
        self.report.orchestration_calls += 1
        self.report.calls_per_bin[self._bin(now)] += 1
        self._plans.append(plan)
        if self.cfg.output.verbose:
            log.info("plan %s", plan.log_line())
        return scheduled

    # -- event handlers --------------------------------------------------------

    def _bin(self, t: float) -> int:
        return min(int(t // 1000.0), self.num_bins - 1)

    def _on_arrival(self, now: float, q: Query):
        self.report.arrivals += 1
        if self.record_queries:
            self.records[q.index] = QueryRecord(arrival=now)
        cfg = self.epoch
        outcome = self.gate.tick(lambda: trigger_condition(cfg.strategy, self._node_env(now), cfg.trigger_threshold))
        if outcome is GateOutcome.TRIGGERED:
            self.report.gate_triggers += 1
            self.orchestrate(now)
        self.events.schedule(now + self.cfg.topology.gateway_delay_ms, EventKind.INGRESS, q)

    def _on_forwarded(self, now: float, payload):
        node_id, q, hops = payload
        node = self.nodes[node_id]
        b = self._hashes[q.index][0]
        if node.store.owns(b):
            decision = self._lookup(node, q, b)
        elif self.in_flight.get(b) == node_id:
            self.report.in_flight_misses += 1
            decision = ReuseDecision(Decision.MISS, node.lsh_ms)
        elif b not in self.location:
            # Vector mode: a bucket comes into existence where it is first routed.
            node.store.create(b)
            self.location[b] = node_id
            decision = self._lookup(node, q, b)
        else:
            target = self.location[b]
            self.report.reroutes += 1
            delay = self.cfg.topology.inter_edr_delay_ms
            self.events.schedule(now + delay, EventKind.FORWARDED, (target, q, hops + delay))
            return
        _, events = node.serve(decision, q, now, hops)
        self.events.extend(events)

    def _lookup(self, node: EdrNode, q: Query, b: BucketId) -> ReuseDecision:
        if self.cfg.workload.reuse:
            return node.store.lookup(q, b, self.cfg.workload.similarity_threshold, node.lsh_ms,
                                     self._hashes[q.index][1:])
        node.store.bucket(b).stats.misses += 1
        return ReuseDecision(Decision.MISS, node.lsh_ms)

    def _on_service_end(self, now: float, payload):
        node_id, item = payload
        node = self.nodes[node_id]
        if self.record_queries and item.kind is WorkKind.LSH_HASH:
            rec = self.records[item.query.index]
            rec.hash_wait = item.started_at - item.enqueued_at
            rec.hash_ms = item.service_ms
        events = node.on_complete(item, now)
        self.events.extend(events)

    def _on_result(self, now: float, item: WorkItem):
        r = self.report
        k = self._bin(now)
        r.throughput_per_bin[k] += 1
        if item.kind is WorkKind.REUSE_FETCH:
            r.hits += 1
            r.hits_per_bin[k] += 1
        else:
            r.misses += 1
            r.misses_per_bin[k] += 1
        r.latency_samples.append(now - item.query.arrival_time)
        if self.record_queries:
            rec = self.records[item.query.index]
            rec.hops_ms = item.hops_ms
            rec.wait = item.started_at - item.enqueued_at
            rec.service_ms = item.service_ms
            rec.returned = now
            rec.kind = item.kind.value

    def _on_transfer_done(self, now: float, xfer: BucketTransfer):
        b = xfer.bucket.id
        dest = self.nodes[xfer.destination]
        dest.store.import_bucket(xfer)
        del self.in_flight[b]
        for q, result in self.pending_inserts.pop(b, ()):
            dest._insert(q, b, result, now)

    def _on_deferred_insert(self, now: float, payload):
        q, b, result = payload
        if b in self.in_flight:
            self.pending_inserts[b].append((q, result))
            return
        owner = self.location.get(b)
        if owner is not None:
            self.nodes[owner]._insert(q, b, result, now)

    def _on_bin_tick(self, now: float, k: int):
        span = now - self._last_bin_time
        for n in self.nodes:
            n.apportion(now)
            busy = n.busy_total_ms - self._last_busy[n.id]
            self._last_busy[n.id] = n.busy_total_ms
            self.report.per_edr_cpu[n.id][k] = min(1.0, busy / (n.cores * span)) if span > 0 else 0.0
        self._last_bin_time = now

    # -- main loop -------------------------------------------------------------

    def run(self) -> MetricsReport:
        ev = self.events
        for q in self.queries:
            if q.arrival_time < self.horizon:
                ev.schedule(q.arrival_time, EventKind.ARRIVAL, q)
        for k in range(self.num_bins):
            ev.schedule(min((k + 1) * 1000.0, self.horizon), EventKind.BIN_TICK, k)

        handlers = {
            EventKind.ARRIVAL: self._on_arrival,
            EventKind.INGRESS: lambda now, q: ev.extend(self.nodes[q.ingress_edr].admit(q, now)),
            EventKind.SERVICE_END: self._on_service_end,
            EventKind.FORWARDED: self._on_forwarded,
            EventKind.RESULT_RETURNED: self._on_result,
            EventKind.TABLE_UPDATE: lambda now, moves: self.forwarding.update(moves),
            EventKind.TRANSFER_DONE: self._on_transfer_done,
            EventKind.DEFERRED_INSERT: self._on_deferred_insert,
            EventKind.BIN_TICK: self._on_bin_tick,
        }
        while len(ev) and ev.peek_time() <= self.horizon:
            t, _, kind, payload = ev.pop()
            handlers[kind](t, payload)

        r = self.report
        r.unprocessed_at_end = r.arrivals - r.hits - r.misses
        r.default_routes = self.forwarding.default_routes
        r.evictions = sum(n.store.evictions for n in self.nodes)
        r.counters = {"pending_events": len(ev), "buckets": len(self.location)}
        r.check_conservation()
        self.check_ownership()
        return r

    def check_ownership(self):
        """Every bucket is held by exactly one store or is in flight, never both."""
        seen: Dict[BucketId, int] = {}
        for n in self.nodes:
            for b in n.store.buckets:
                if b in seen:
                    raise AssertionError(f"bucket {b} owned by nodes {seen[b]} and {n.id}")
                if b in self.in_flight:
                    raise AssertionError(f"bucket {b} both stored and in flight")
                seen[b] = n.id
        if set(seen) | set(self.in_flight) != set(self.location):
            raise AssertionError("bucket location map out of sync")

    @property
    def plans(self) -> List[OrchestrationPlan]:
        return list(self._plans)


def run(cfg: SimConfig, queries: Optional[Sequence[Query]] = None) -> MetricsReport:
    return Simulation(cfg, queries).run()


# --------------------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepError:
    index: int
    message: str


ConfigLike = Union[SimConfig, Mapping]


def _seeded(cfg: ConfigLike, seed: Optional[int]) -> SimConfig:
    sections = to_dict(cfg) if isinstance(cfg, SimConfig) else {k: dict(v) for k, v in cfg.items()}
    overrides = [] if seed is None else [("workload.seed", seed)]
    return build_config(sections, overrides)


def _run_one(args):
    index, cfg, seed = args
    try:
        return run(_seeded(cfg, seed))
    except (ConfigError, ValueError, OSError) as e:
        return SweepError(index, f"{type(e).__name__}: {e}")


def sweep_seeds(master_seed: int, n: int) -> List[int]:
    children = np.random.SeedSequence(master_seed).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


def sweep(configs: Sequence[ConfigLike], master_seed: Optional[int] = None,
          workers: Optional[int] = 1, pair_keys: Optional[Sequence] = None) -> List[Union[MetricsReport, SweepError]]:
    """Run configs independently; results come back in input order. A failing
    config yields a :class:`SweepError` in its slot and the others still run.

    With ``master_seed`` set, each run gets its own seed derived from it.
    ``pair_keys`` (one hashable per config) makes configs with equal keys share
    a seed, e.g. every strategy at one rate replays the same workload."""
    n = len(configs)
    if master_seed is None:
        seeds = [None] * n
    else:
        keys = list(pair_keys) if pair_keys is not None else list(range(n))
        if len(keys) != n:
            raise ValueError("pair_keys must have one entry per config")
        distinct = list(dict.fromkeys(keys))
        by_key = dict(zip(distinct, sweep_seeds(master_seed, len(distinct))))
        seeds = [by_key[k] for k in keys]
    jobs = [(i, c, s) for i, (c, s) in enumerate(zip(configs, seeds))]
    workers = workers or os.cpu_count() or 1
    if workers <= 1 or len(jobs) <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_run_one, jobs))
