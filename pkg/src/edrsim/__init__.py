"""Discrete-event simulator of edge data repositories (EDRs) that reuse prior
computation through LSH buckets and rebalance buckets with orchestration
strategies."""

from .config import ConfigError, SimConfig, build_config, load_config, parse_config_text
from .core import (
    Bucket, BucketId, BucketStats, DatasetProfile, FeatureVector, InvalidQuery, Query, StoredEntry,
    UnknownProfile, builtin_profile, validate_query, PROFILE_NAMES, THRESHOLDS,
)
from .engine import Simulation, SweepError, run, sweep
from .lsh import LshConfig, LshIndex, build_index, collision_probability, cosine_similarity, nearest_similar
from .metrics import MetricsReport
from .orchestrator import (
    EnvState, EpochConfig, EpochGate, GateOutcome, MoveDirective, OrchestrationPlan, Strategy,
    cpu_reuse_strategy, cpu_usage_strategy, cpu_workload_strategy, queue_delay_strategy,
)
from .store import ReuseStore
from .workload import WorkloadSpec, generate_workload, ingest_trace

__version__ = "0.1.0"

__all__ = [
    "Bucket", "BucketId", "BucketStats", "ConfigError", "DatasetProfile", "EnvState", "EpochConfig",
    "EpochGate", "FeatureVector", "GateOutcome", "InvalidQuery", "LshConfig", "LshIndex", "MetricsReport",
    "MoveDirective", "OrchestrationPlan", "PROFILE_NAMES", "Query", "ReuseStore", "SimConfig", "Simulation",
    "StoredEntry", "Strategy", "SweepError", "THRESHOLDS", "UnknownProfile", "WorkloadSpec", "build_config",
    "build_index", "builtin_profile", "collision_probability", "cosine_similarity", "cpu_reuse_strategy",
    "cpu_usage_strategy", "cpu_workload_strategy", "generate_workload", "ingest_trace", "load_config",
    "nearest_similar", "parse_config_text", "queue_delay_strategy", "run", "sweep", "validate_query",
]
