"""Epoch gate and the four bucket-redistribution strategies.

Strategies are pure functions of an :class:`EnvState` snapshot. Every argmax /
argmin breaks ties by lowest node id, then lowest bucket id.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Tuple

from .core import BucketId, SimTime

log = logging.getLogger(__name__)


class Strategy(str, Enum):
    NONE = "NONE"
    QUEUE_DELAY = "QUEUE_DELAY"
    CPU_USAGE = "CPU_USAGE"
    CPU_WORKLOAD = "CPU_WORKLOAD"
    CPU_REUSE = "CPU_REUSE"


class GateOutcome(str, Enum):
    TRIGGERED = "TRIGGERED"
    NOT_TRIGGERED = "NOT_TRIGGERED"


@dataclass(frozen=True)
class EpochConfig:
    strategy: Strategy = Strategy.NONE
    epoch_ticks: int = 500
    trigger_threshold: float = 0.75
    no_of_buckets: int = 1

    def __post_init__(self):
        if self.epoch_ticks < 1:
            raise ValueError("epoch_ticks must be >= 1")
        if not 0 < self.trigger_threshold <= 1:
            raise ValueError("trigger_threshold must be in (0, 1]")
        if self.no_of_buckets < 1:
            raise ValueError("no_of_buckets must be >= 1")


@dataclass(frozen=True)
class BucketView:
    owner: int
    cpu_ms: float = 0.0
    reuse_rate: float = 0.0
    max_queue_delay: float = 0.0
    bytes: int = 0
    traffic: int = 0


@dataclass(frozen=True)
class EnvState:
    """Immutable snapshot handed to strategies. Only buckets that sit in a
    node's store (not in flight) appear in ``buckets``."""

    nodes: Tuple[int, ...]
    node_cpu: Mapping[int, float]
    node_max_queue_delay: Mapping[int, float]
    mean_req_proc_time: float
    buckets: Mapping[BucketId, BucketView] = field(default_factory=dict)
    now: SimTime = 0.0


@dataclass(frozen=True)
class MoveDirective:
    origin: int
    destination: int
    bucket: BucketId
    paired_bucket: Optional[BucketId] = None

    def __post_init__(self):
        if self.origin == self.destination:
            raise ValueError("self-move directive")

    def __str__(self):
        tail = f"<->{self.paired_bucket}" if self.paired_bucket is not None else ""
        return f"{self.bucket}{tail}:{self.origin}->{self.destination}"


@dataclass(frozen=True)
class OrchestrationPlan:
    directives: Tuple[MoveDirective, ...]
    strategy: Strategy
    created_at: SimTime = 0.0
    call_index: int = 0

    def log_line(self) -> str:
        return f"{self.created_at:.3f}, {self.strategy.value}, [{' '.join(map(str, self.directives))}]"


# --------------------------------------------------------------------------- gate


def trigger_condition(strategy: Strategy, env: EnvState, threshold: float) -> bool:
    """Metric half of the gate; the epoch half lives in :class:`EpochGate`."""
    if strategy is Strategy.NONE:
        return False
    if strategy is Strategy.CPU_WORKLOAD:
        return True
    if strategy is Strategy.QUEUE_DELAY:
        worst = max(env.node_max_queue_delay.values(), default=0.0)
        return bool(worst > 2 * env.mean_req_proc_time)
    return bool(max(env.node_cpu.values(), default=0.0) > threshold)


class EpochGate:
    """Counts ingress requests. Once ``epoch_ticks`` have been counted the
    strategy's condition is checked on every request; the count resets only
    when the gate fires. CPU_WORKLOAD fires at every epoch unconditionally."""

    def __init__(self, cfg: EpochConfig):
        self.cfg = cfg
        self.ticks = 0
        self.triggered = 0

    def tick(self, condition=None) -> GateOutcome:
        self.ticks += 1
        strategy = self.cfg.strategy
        if strategy is Strategy.NONE or self.ticks < self.cfg.epoch_ticks:
            return GateOutcome.NOT_TRIGGERED
        if strategy is Strategy.CPU_WORKLOAD or (condition is not None and condition()):
            self.ticks = 0
            self.triggered += 1
            return GateOutcome.TRIGGERED
        return GateOutcome.NOT_TRIGGERED


def epoch_gate(gate: EpochGate, env_fn, now: SimTime = 0.0) -> GateOutcome:
    cfg = gate.cfg
    return gate.tick(lambda: trigger_condition(cfg.strategy, env_fn(), cfg.trigger_threshold))


# --------------------------------------------------------------------------- strategies


def _argmax(items, key):
    """Highest key; ties to lowest (node, bucket)."""
    best = None
    for b, v in items:
        k = (-key(v), v.owner, b)
        if best is None or k < best[0]:
            best = (k, b)
    return None if best is None else best[1]


def _argmin(items, key):
    best = None
    for b, v in items:
        k = (key(v), v.owner, b)
        if best is None or k < best[0]:
            best = (k, b)
    return None if best is None else best[1]


def _plan(strategy, directives, env) -> OrchestrationPlan:
    return OrchestrationPlan(tuple(directives), strategy, env.now)


def queue_delay_strategy(env: EnvState, k: int = 1) -> OrchestrationPlan:
    """Exchange the k highest-delay buckets with the k lowest-delay ones."""
    buckets = env.buckets
    if len({v.owner for v in buckets.values()}) < 2:
        return _plan(Strategy.QUEUE_DELAY, [], env)
    high = sorted(buckets, key=lambda b: (-buckets[b].max_queue_delay, buckets[b].owner, b))[:k]
    low = sorted(buckets, key=lambda b: (buckets[b].max_queue_delay, buckets[b].owner, b))[:k]
    used = set()
    out = []
    for h, l in zip(high, low):
        vh, vl = buckets[h], buckets[l]
        if h in used or l in used or vh.owner == vl.owner:
            continue
        if not vh.max_queue_delay > vl.max_queue_delay:
            continue
        used.update((h, l))
        out.append(MoveDirective(vh.owner, vl.owner, h, l))
    return _plan(Strategy.QUEUE_DELAY, out, env)


def _node_loads(env: EnvState, owner: Dict[BucketId, int]) -> Dict[int, float]:
    loads = {n: 0.0 for n in env.nodes}
    for b, n in owner.items():
        loads[n] = loads.get(n, 0.0) + env.buckets[b].cpu_ms
    return loads


def cpu_usage_strategy(env: EnvState, iterations: Optional[int] = None) -> OrchestrationPlan:
    """Repeatedly hand the hottest bucket to the least-loaded node, taking that
    node's coolest bucket in exchange, on a working copy of the load."""
    iterations = len(env.nodes) if iterations is None else iterations
    owner = {b: v.owner for b, v in env.buckets.items()}
    cpu = {b: v.cpu_ms for b, v in env.buckets.items()}
    loads = _node_loads(env, owner)
    used = set()
    out = []
    for _ in range(iterations):
        free = [(b, env.buckets[b]) for b in owner if b not in used]
        h = _argmax(free, lambda v: v.cpu_ms)
        if h is None:
            break
        n_h = owner[h]
        others = [n for n in env.nodes if n != n_h]
        if not others:
            break
        n_l = min(others, key=lambda n: (loads[n], n))
        on_l = [(b, v) for b, v in free if owner[b] == n_l]
        l = _argmin(on_l, lambda v: v.cpu_ms)
        cpu_l = cpu[l] if l is not None else 0.0
        # exchange must shed load from n_h without leaving n_l above n_h's old load
        if not (cpu[h] > cpu_l and loads[n_l] - cpu_l + cpu[h] < loads[n_h]):
            break
        out.append(MoveDirective(n_h, n_l, h, l))
        used.add(h)
        owner[h] = n_l
        loads[n_h] += cpu_l - cpu[h]
        loads[n_l] += cpu[h] - cpu_l
        if l is not None:
            used.add(l)
            owner[l] = n_h
    return _plan(Strategy.CPU_USAGE, out, env)


def cpu_workload_strategy(env: EnvState, iterations: Optional[int] = None) -> OrchestrationPlan:
    """Greedy longest-processing-time placement of this epoch's busiest buckets."""
    active = {b: v for b, v in env.buckets.items() if v.cpu_ms > 0}
    iterations = len(active) if iterations is None else iterations
    owner = {b: v.owner for b, v in env.buckets.items()}
    loads = _node_loads(env, owner)
    order = sorted(active, key=lambda b: (-active[b].cpu_ms, active[b].owner, b))
    out = []
    for b in order[:iterations]:
        w = active[b].cpu_ms
        origin = owner[b]
        loads[origin] -= w
        dest = min(env.nodes, key=lambda n: (loads[n], n))
        loads[dest] += w
        if dest != origin:
            owner[b] = dest
            out.append(MoveDirective(origin, dest, b))
    return _plan(Strategy.CPU_WORKLOAD, out, env)


def cpu_reuse_strategy(env: EnvState, iterations: Optional[int] = None) -> OrchestrationPlan:
    """Phase 1 swaps the most CPU-hungry bucket with the most reusable one;
    phase 2 swaps the least reusable bucket with the least CPU-hungry one."""
    iterations = len(env.nodes) if iterations is None else iterations
    owner = {b: v.owner for b, v in env.buckets.items()}
    view = env.buckets
    used = set()
    out = []

    def free(pred=lambda b: True):
        return [(b, view[b]) for b in owner if b not in used and pred(b)]

    def exchange(a, b):
        na, nb = owner[a], owner[b]
        out.append(MoveDirective(na, nb, a, b))
        owner[a], owner[b] = nb, na
        used.update((a, b))

    for _ in range(iterations):
        hp = _argmax(free(), lambda v: v.cpu_ms)
        if hp is None:
            break
        hr = _argmax(free(lambda b: owner[b] != owner[hp] and view[b].traffic > 0),
                     lambda v: v.reuse_rate)
        if hr is None or not (view[hp].cpu_ms > view[hr].cpu_ms
                              and view[hr].reuse_rate > view[hp].reuse_rate):
            break
        exchange(hp, hr)

    for _ in range(iterations):
        lr = _argmin(free(lambda b: view[b].traffic > 0), lambda v: v.reuse_rate)
        if lr is None:
            break
        lp = _argmin(free(lambda b: owner[b] != owner[lr]), lambda v: v.cpu_ms)
        if lp is None or not (view[lr].reuse_rate < view[lp].reuse_rate
                              and view[lp].cpu_ms < view[lr].cpu_ms):
            break
        exchange(lr, lp)

    return _plan(Strategy.CPU_REUSE, out, env)


def make_plan(cfg: EpochConfig, env: EnvState, call_index: int = 0) -> OrchestrationPlan:
    s = cfg.strategy
    if s is Strategy.QUEUE_DELAY:
        plan = queue_delay_strategy(env, cfg.no_of_buckets)
    elif s is Strategy.CPU_USAGE:
        plan = cpu_usage_strategy(env)
    elif s is Strategy.CPU_WORKLOAD:
        plan = cpu_workload_strategy(env)
    elif s is Strategy.CPU_REUSE:
        plan = cpu_reuse_strategy(env)
    else:
        plan = OrchestrationPlan((), s, env.now)
    return OrchestrationPlan(plan.directives, s, env.now, call_index)


# --------------------------------------------------------------------------- application


class PlanViolation(RuntimeError):
    pass


def apply_to_ownership(plan: OrchestrationPlan, owner: Dict[BucketId, int]) -> Dict[BucketId, int]:
    """Apply directives in order to an ownership map, checking every precondition.
    Used as the model-checking reference for plan safety."""
    owner = dict(owner)
    seen = set()
    for d in plan.directives:
        if d.origin == d.destination:
            raise PlanViolation(f"self-move {d}")
        moved = [d.bucket] + ([d.paired_bucket] if d.paired_bucket is not None else [])
        for b in moved:
            if b in seen:
                raise PlanViolation(f"bucket {b} appears twice in one plan")
            seen.add(b)
        if owner.get(d.bucket) != d.origin:
            raise PlanViolation(f"{d.bucket} not owned by origin {d.origin}")
        if d.paired_bucket is not None and owner.get(d.paired_bucket) != d.destination:
            raise PlanViolation(f"{d.paired_bucket} not owned by destination {d.destination}")
        owner[d.bucket] = d.destination
        if d.paired_bucket is not None:
            owner[d.paired_bucket] = d.origin
    return owner


def transfer_time_ms(total_bytes: int, bandwidth_bits_per_s: float, link_delay_ms: float) -> float:
    return total_bytes * 8 / bandwidth_bits_per_s * 1000.0 + link_delay_ms


def plan_moves(plan: OrchestrationPlan) -> List[Tuple[BucketId, int, int]]:
    """Flatten a plan to (bucket, origin, destination) single moves."""
    moves = []
    for d in plan.directives:
        moves.append((d.bucket, d.origin, d.destination))
        if d.paired_bucket is not None:
            moves.append((d.paired_bucket, d.destination, d.origin))
    return moves
