"""Domain types shared across the simulator: queries, buckets, dataset profiles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

# Simulated time in milliseconds since the start of a run.
SimTime = float
# Opaque application class identifier.
AppTag = str

THRESHOLDS = (0.6, 0.7, 0.8, 0.9)

# z-score of the 95th percentile of a standard normal
_Z95 = 1.6448536269514722


class InvalidQuery(ValueError):
    pass


class UnknownProfile(KeyError):
    pass


class FeatureVector:
    """Read-only real vector. Equality is exact (bitwise) on the components."""

    __slots__ = ("components", "_norm")

    def __init__(self, components):
        arr = np.array(components, dtype=np.float64).ravel()
        arr.setflags(write=False)
        self.components = arr
        self._norm = float(np.linalg.norm(arr))

    @property
    def dimension(self) -> int:
        return self.components.shape[0]

    @property
    def norm(self) -> float:
        return self._norm

    def key(self) -> bytes:
        return self.components.tobytes()

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return np.array_equal(self.components, other.components)

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"FeatureVector(dim={self.dimension})"


@dataclass(frozen=True, order=True)
class BucketId:
    table_index: int
    hash_value: int

    def __str__(self):
        return f"{self.table_index}:{self.hash_value}"

    @classmethod
    def parse(cls, text: str) -> "BucketId":
        t, h = text.split(":")
        return cls(int(t), int(h))


@dataclass(frozen=True)
class Query:
    """One unit of user work.

    Exactly one of ``vector`` (vector mode) or ``bucket_key`` (profile mode) is set.
    ``index`` is the position of the query in its stream and doubles as its id.
    """

    index: int
    app: AppTag
    size_bytes: int
    arrival_time: SimTime
    ingress_edr: int = 0
    vector: Optional[FeatureVector] = None
    bucket_key: Optional[int] = None
    reuse_coin: bool = False

    @property
    def id(self) -> int:
        return self.index

    @property
    def profile_mode(self) -> bool:
        return self.vector is None


@dataclass(frozen=True)
class StoredEntry:
    query_index: int
    app: AppTag
    result: object
    size_bytes: int
    result_size_bytes: int
    stored_at: SimTime
    vector: Optional[FeatureVector] = None
    bucket_key: Optional[int] = None

    def __post_init__(self):
        if self.result_size_bytes <= 0:
            raise ValueError("result_size_bytes must be positive")

    @property
    def total_bytes(self) -> int:
        return self.size_bytes + self.result_size_bytes

    def dedup_key(self):
        return self.vector.key() if self.vector is not None else ("b", self.bucket_key)


@dataclass
class BucketStats:
    hits: int = 0
    misses: int = 0
    cpu_time_since_update: float = 0.0
    max_queue_delay: float = 0.0
    bytes_stored: int = 0

    def reset_window(self):
        self.hits = 0
        self.misses = 0
        self.cpu_time_since_update = 0.0
        self.max_queue_delay = 0.0

    @property
    def reuse_rate(self) -> float:
        n = self.hits + self.misses
        return self.hits / n if n else 0.0


@dataclass
class Bucket:
    # Mutable: owned by exactly one ReuseStore (single writer).
    id: BucketId
    app: Optional[AppTag] = None
    entries: list = field(default_factory=list)
    reuse_rating: float = 0.0
    stats: BucketStats = field(default_factory=BucketStats)

    @property
    def total_bytes(self) -> int:
        return sum(e.total_bytes for e in self.entries)


# --------------------------------------------------------------------------- latency


@dataclass(frozen=True)
class LogNormalLatency:
    """Log-normal latency fitted to a (median, 95th percentile) pair, in ms.

    A p95 equal to the median degenerates to a constant.
    """

    median_ms: float
    p95_ms: float

    def __post_init__(self):
        if self.median_ms <= 0 or self.p95_ms < self.median_ms:
            raise ValueError("need 0 < median <= p95")

    @property
    def mu(self) -> float:
        return math.log(self.median_ms)

    @property
    def sigma(self) -> float:
        return (math.log(self.p95_ms) - self.mu) / _Z95

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        z = rng.standard_normal(n)  # drawn even when constant, to keep streams aligned
        if self.p95_ms == self.median_ms:
            return np.full(n, float(self.median_ms))
        return np.exp(self.mu + self.sigma * z)


@dataclass(frozen=True)
class EmpiricalLatency:
    samples_ms: tuple

    def __post_init__(self):
        if not self.samples_ms or min(self.samples_ms) <= 0:
            raise ValueError("empirical latency needs positive samples")

    @property
    def median_ms(self) -> float:
        return float(np.median(self.samples_ms))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.choice(np.asarray(self.samples_ms, dtype=np.float64), size=n)


@dataclass(frozen=True)
class SizeRange:
    """Uniform integer byte size on [low, high]; low == high is a fixed size."""

    low: int
    high: int

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.low == self.high:
            return np.full(n, self.low, dtype=np.int64)
        return rng.integers(self.low, self.high, size=n, endpoint=True)


# --------------------------------------------------------------------------- profiles


@dataclass(frozen=True)
class DatasetProfile:
    name: str
    reusability_by_threshold: Mapping[float, float]
    lsh_ms_by_threshold: Mapping[float, float]
    process_time_dist: object
    reuse_fetch_dist: object
    query_size: SizeRange
    rates_reqs_per_s: tuple
    result_size_bytes: int = 1024
    dataset_items: int = 0

    def reusability(self, threshold: float) -> float:
        return self.reusability_by_threshold[_threshold_key(threshold)]

    def lsh_search_ms(self, threshold: float) -> float:
        return self.lsh_ms_by_threshold[_threshold_key(threshold)]


def _threshold_key(threshold: float) -> float:
    for t in THRESHOLDS:
        if abs(t - threshold) < 1e-9:
            return t
    raise ValueError(
        f"similarity threshold {threshold} has no calibration data; use one of {THRESHOLDS}"
    )


KB = 1_000
MB = 1_000_000

# Latency defaults are approximate (median, p95) readings; override them per run.
_BUILTIN = {
    "MNIST": dict(
        reusability=(0.12, 0.0074, 0.0042, 0.0026),
        lsh=(5.3, 6.8, 6.8, 6.9),
        process=(60.0, 110.0),
        reuse=(3.0, 8.0),
        size=SizeRange(40 * KB, 40 * KB),
        rates=(250, 500, 1000),
        result=64,
        items=42_000,
    ),
    "TrafficDetection": dict(
        reusability=(0.70, 0.725, 0.672, 0.608),
        lsh=(0.6, 0.6, 0.8, 0.9),
        process=(40.0, 75.0),
        reuse=(3.0, 6.0),
        size=SizeRange(1 * MB, 5 * MB),
        rates=(2000, 4000, 6000),
        result=2048,
        items=3000,
    ),
    "Alexa": dict(
        reusability=(0.866, 0.818, 0.593, 0.253),
        lsh=(0.1, 0.1, 0.1, 0.1),
        process=(90.0, 160.0),
        reuse=(4.0, 10.0),
        size=SizeRange(40 * KB, 200 * KB),
        rates=(250, 400, 800),
        result=256,
        items=365,
    ),
    "GeneralCommands": dict(
        reusability=(0.186, 0.184, 0.183, 0.1936),
        lsh=(0.14, 0.14, 0.14, 0.15),
        process=(250.0, 450.0),
        reuse=(5.0, 12.0),
        size=SizeRange(40 * KB, 200 * KB),
        rates=(150, 200, 300),
        result=256,
        items=899,
    ),
}

PROFILE_NAMES = tuple(_BUILTIN)


def builtin_profile(name: str) -> DatasetProfile:
    try:
        p = _BUILTIN[name]
    except KeyError:
        raise UnknownProfile(f"unknown profile {name!r}; built-ins: {', '.join(PROFILE_NAMES)}")
    return DatasetProfile(
        name=name,
        reusability_by_threshold=dict(zip(THRESHOLDS, p["reusability"])),
        lsh_ms_by_threshold=dict(zip(THRESHOLDS, p["lsh"])),
        process_time_dist=LogNormalLatency(*p["process"]),
        reuse_fetch_dist=LogNormalLatency(*p["reuse"]),
        query_size=p["size"],
        rates_reqs_per_s=tuple(p["rates"]),
        result_size_bytes=p["result"],
        dataset_items=p["items"],
    )


# --------------------------------------------------------------------------- validation


class DimensionRegistry:
    """Remembers the vector dimension of each application tag."""

    def __init__(self, dims: Optional[Mapping[AppTag, int]] = None):
        self.dims = dict(dims or {})

    def register(self, app: AppTag, dimension: int):
        known = self.dims.setdefault(app, dimension)
        if known != dimension:
            raise InvalidQuery(f"app {app!r} already registered with dimension {known}")


def validate_query(q: Query, registry: Optional[DimensionRegistry] = None) -> Query:
    if q.size_bytes <= 0:
        raise InvalidQuery(f"query {q.index}: size_bytes must be positive, got {q.size_bytes}")
    if q.arrival_time < 0 or not math.isfinite(q.arrival_time):
        raise InvalidQuery(f"query {q.index}: bad arrival time {q.arrival_time}")
    if (q.vector is None) == (q.bucket_key is None):
        raise InvalidQuery(f"query {q.index}: needs exactly one of vector or bucket_key")
    if q.vector is not None:
        if q.vector.dimension == 0:
            raise InvalidQuery(f"query {q.index}: empty vector")
        if not (math.isfinite(q.vector.norm) and q.vector.norm > 0):
            raise InvalidQuery(f"query {q.index}: vector norm must be finite and positive")
        if registry is not None:
            expected = registry.dims.get(q.app)
            if expected is None:
                registry.register(q.app, q.vector.dimension)
            elif expected != q.vector.dimension:
                raise InvalidQuery(
                    f"query {q.index}: dimension {q.vector.dimension} != {expected} for app {q.app!r}"
                )
    elif q.bucket_key < 0:
        raise InvalidQuery(f"query {q.index}: negative bucket key")
    return q


def stack_vectors(vectors: Sequence[FeatureVector]) -> np.ndarray:
    return np.vstack([v.components for v in vectors])
