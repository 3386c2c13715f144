"""Query streams: synthetic Poisson/Zipf workloads and trace replay."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .core import DatasetProfile, DimensionRegistry, FeatureVector, InvalidQuery, Query, validate_query

TRACE_HEADER = "# edrsim-trace v1"

# Fixed substream ids; adding a stream must append, never reorder.
STREAMS = ("arrivals", "ingress", "buckets", "coins", "sizes", "process", "reuse", "vectors")


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator per component so toggling one feature never
    perturbs another component's draws."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAMS.index(name),)))


class WorkloadError(ValueError):
    pass


class TraceError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True)
class WorkloadSpec:
    profile: DatasetProfile
    rate_reqs_per_s: float
    duration_s: float = 60.0
    mode: str = "profile"
    num_buckets: int = 64
    zipf_s: float = 0.8
    similarity_threshold: float = 0.6
    reusability: Optional[float] = None
    cluster_count: int = 16
    noise_scale: float = 0.3
    dimension: int = 32
    arrivals: str = "poisson"
    seed: int = 0

    def __post_init__(self):
        if not self.rate_reqs_per_s > 0:
            raise WorkloadError("rate must be positive")
        if not self.duration_s > 0:
            raise WorkloadError("duration_s must be positive")
        if self.mode not in ("profile", "vector"):
            raise WorkloadError(f"mode must be 'profile' or 'vector', got {self.mode!r}")
        if self.arrivals not in ("poisson", "deterministic"):
            raise WorkloadError(f"arrivals must be 'poisson' or 'deterministic', got {self.arrivals!r}")
        if self.num_buckets < 1:
            raise WorkloadError("num_buckets must be >= 1")
        if self.zipf_s < 0:
            raise WorkloadError("zipf_s must be >= 0")
        if self.cluster_count < 0 or self.noise_scale < 0 or self.dimension < 1:
            raise WorkloadError("bad vector-mode parameters")
        if self.reusability is not None and not 0 <= self.reusability <= 1:
            raise WorkloadError("reusability must be in [0, 1]")
        if self.reusability is None:
            self.profile.reusability(self.similarity_threshold)  # raises for uncalibrated thresholds

    @property
    def bucket_rating(self) -> float:
        if self.reusability is not None:
            return self.reusability
        return self.profile.reusability(self.similarity_threshold)


def zipf_weights(n: int, s: float) -> np.ndarray:
    w = np.arange(1, n + 1, dtype=np.float64) ** -s
    return w / w.sum()


def arrival_times_ms(rng: np.random.Generator, rate: float, duration_s: float, kind: str) -> np.ndarray:
    horizon = duration_s * 1000.0
    mean_gap = 1000.0 / rate
    if kind == "deterministic":
        n = int(math.ceil(horizon / mean_gap))
        t = np.arange(n, dtype=np.float64) * mean_gap
        return t[t < horizon]
    expected = rate * duration_s
    chunk = int(expected + 6 * math.sqrt(expected) + 16)
    gaps = rng.exponential(mean_gap, size=chunk)
    t = np.cumsum(gaps)
    while t[-1] < horizon:
        more = np.cumsum(rng.exponential(mean_gap, size=chunk)) + t[-1]
        t = np.concatenate([t, more])
    return t[t < horizon]


def cluster_vectors(rng: np.random.Generator, n: int, clusters: int, noise: float, dim: int,
                    zipf_s: float = 0.0) -> np.ndarray:
    """Unit cluster centres plus isotropic noise whose expected norm is ``noise``.
    With zero clusters every vector is an independent Gaussian draw."""
    if clusters == 0:
        return rng.standard_normal((n, dim))
    centres = rng.standard_normal((clusters, dim))
    centres /= np.linalg.norm(centres, axis=1, keepdims=True)
    which = rng.choice(clusters, size=n, p=zipf_weights(clusters, zipf_s))
    z = rng.standard_normal((n, dim))
    return centres[which] + z * (noise / math.sqrt(dim))


def generate_workload(spec: WorkloadSpec, num_edrs: int = 1) -> List[Query]:
    seed = spec.seed
    times = arrival_times_ms(substream(seed, "arrivals"), spec.rate_reqs_per_s, spec.duration_s, spec.arrivals)
    n = len(times)
    ingress = substream(seed, "ingress").integers(0, num_edrs, size=n)
    sizes = spec.profile.query_size.sample(substream(seed, "sizes"), n)
    app = spec.profile.name
    if spec.mode == "profile":
        keys = substream(seed, "buckets").choice(
            spec.num_buckets, size=n, p=zipf_weights(spec.num_buckets, spec.zipf_s))
        coins = substream(seed, "coins").random(n) < spec.bucket_rating
        return [
            Query(i, app, int(sizes[i]), float(times[i]), int(ingress[i]),
                  bucket_key=int(keys[i]), reuse_coin=bool(coins[i]))
            for i in range(n)
        ]
    vecs = cluster_vectors(substream(seed, "vectors"), n, spec.cluster_count, spec.noise_scale,
                           spec.dimension, spec.zipf_s)
    out = []
    for i in range(n):
        q = Query(i, app, int(sizes[i]), float(times[i]), int(ingress[i]), vector=FeatureVector(vecs[i]))
        out.append(validate_query(q))
    return out


def assign_ingress(queries: Sequence[Query], num_edrs: int, seed: int) -> List[Query]:
    ingress = substream(seed, "ingress").integers(0, num_edrs, size=len(queries))
    return [replace(q, ingress_edr=int(e)) for q, e in zip(queries, ingress)]


# --------------------------------------------------------------------------- traces


def format_trace_line(q: Query) -> str:
    head = f"{q.arrival_time!r},{q.app},{q.size_bytes}"
    if q.vector is None:
        return f"{head},b:{q.bucket_key},{int(q.reuse_coin)}"
    return head + ",v:" + ",".join(repr(float(x)) for x in q.vector.components)


def write_trace(queries: Sequence[Query], path) -> None:
    lines = [TRACE_HEADER] + [format_trace_line(q) for q in queries]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_trace(text: str) -> List[Query]:
    queries: List[Query] = []
    registry = DimensionRegistry()
    seen_header = False
    last_t = -math.inf
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if not seen_header:
            if line != TRACE_HEADER:
                raise TraceError(lineno, f"expected header {TRACE_HEADER!r}")
            seen_header = True
            continue
        if line.startswith("#"):
            continue
        parts = line.split(",", 3)
        if len(parts) != 4:
            raise TraceError(lineno, "expected timestamp_ms,app_tag,size_bytes,payload")
        ts, app, size, payload = parts
        try:
            t = float(ts)
            size_bytes = int(size)
        except ValueError as e:
            raise TraceError(lineno, str(e)) from None
        if t < last_t:
            raise TraceError(lineno, f"timestamp {t} goes backwards (previous {last_t})")
        last_t = t
        idx = len(queries)
        try:
            if payload.startswith("b:"):
                key, coin = payload[2:].split(",")
                if coin not in ("0", "1"):
                    raise ValueError(f"reuse coin must be 0 or 1, got {coin!r}")
                q = Query(idx, app, size_bytes, t, bucket_key=int(key), reuse_coin=coin == "1")
            elif payload.startswith("v:"):
                comps = [float(x) for x in payload[2:].split(",")]
                q = Query(idx, app, size_bytes, t, vector=FeatureVector(comps))
            else:
                raise ValueError("payload must start with 'b:' or 'v:'")
            validate_query(q, registry)
        except (ValueError, InvalidQuery) as e:
            raise TraceError(lineno, str(e)) from None
        queries.append(q)
    return queries


def ingest_trace(path) -> List[Query]:
    return parse_trace(Path(path).read_text())
