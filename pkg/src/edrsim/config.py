"""Run configuration: INI-style file with [topology], [workload], [strategy],
[lsh] and [output] sections. Unknown sections or keys are errors."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional

from .core import LogNormalLatency, PROFILE_NAMES, UnknownProfile, builtin_profile
from .lsh import LshConfig, LshConfigError
from .orchestrator import EpochConfig, Strategy
from .workload import WorkloadError, WorkloadSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Topology:
    num_edrs: int = 15
    cores: int = 4
    inter_edr_delay_ms: float = 2.0
    gateway_delay_ms: float = 2.0
    link_bandwidth_bits_per_s: float = 1e9
    storage_budget_bytes: int = 0

    def __post_init__(self):
        if self.num_edrs < 1 or self.cores < 1:
            raise ValueError("num_edrs and cores must be positive")
        if self.inter_edr_delay_ms < 0 or self.gateway_delay_ms < 0:
            raise ValueError("delays must be non-negative")
        if not self.link_bandwidth_bits_per_s > 0:
            raise ValueError("link bandwidth must be positive")
        if self.storage_budget_bytes < 0:
            raise ValueError("storage_budget_bytes must be >= 0 (0 = unlimited)")


@dataclass(frozen=True)
class WorkloadSection:
    profile: str = "TrafficDetection"
    rate: Optional[float] = None
    duration_s: float = 60.0
    warmup_s: float = 0.0
    mode: str = "profile"
    arrivals: str = "poisson"
    num_buckets: int = 64
    zipf_s: float = 0.8
    similarity_threshold: float = 0.6
    reuse: bool = True
    reusability: Optional[float] = None
    lsh_ms: Optional[float] = None
    process_median_ms: Optional[float] = None
    process_p95_ms: Optional[float] = None
    reuse_median_ms: Optional[float] = None
    reuse_p95_ms: Optional[float] = None
    cluster_count: int = 16
    noise_scale: float = 0.3
    trace: Optional[str] = None
    seed: int = 1


@dataclass(frozen=True)
class StrategySection:
    name: Strategy = Strategy.NONE
    epoch_ticks: int = 500
    trigger_threshold: float = 0.75
    no_of_buckets: int = 1


@dataclass(frozen=True)
class LshSection:
    dimension: int = 32
    num_tables: int = 4
    hyperplanes_per_table: int = 16
    seed: int = 0


@dataclass(frozen=True)
class OutputSection:
    csv: Optional[str] = None
    run_id: Optional[str] = None
    figures: bool = False
    verbose: bool = False


SECTIONS = {
    "topology": Topology,
    "workload": WorkloadSection,
    "strategy": StrategySection,
    "lsh": LshSection,
    "output": OutputSection,
}


@dataclass(frozen=True)
class SimConfig:
    topology: Topology = field(default_factory=Topology)
    workload: WorkloadSection = field(default_factory=WorkloadSection)
    strategy: StrategySection = field(default_factory=StrategySection)
    lsh: LshSection = field(default_factory=LshSection)
    output: OutputSection = field(default_factory=OutputSection)

    # -- derived views ---------------------------------------------------------

    @property
    def profile(self):
        p = builtin_profile(self.workload.profile)
        w = self.workload
        changes = {}
        if w.process_median_ms is not None:
            changes["process_time_dist"] = LogNormalLatency(
                w.process_median_ms, w.process_p95_ms or w.process_median_ms)
        if w.reuse_median_ms is not None:
            changes["reuse_fetch_dist"] = LogNormalLatency(
                w.reuse_median_ms, w.reuse_p95_ms or w.reuse_median_ms)
        return dataclasses.replace(p, **changes) if changes else p

    @property
    def rate(self) -> float:
        return self.workload.rate if self.workload.rate is not None else float(self.profile.rates_reqs_per_s[0])

    @property
    def lsh_ms(self) -> float:
        if self.workload.lsh_ms is not None:
            return self.workload.lsh_ms
        return self.profile.lsh_search_ms(self.workload.similarity_threshold)

    @property
    def run_id(self) -> str:
        if self.output.run_id:
            return self.output.run_id
        reuse = "" if self.workload.reuse else "-noreuse"
        return (f"{self.workload.profile}-{self.rate:g}-{self.strategy.name.value}"
                f"{reuse}-s{self.workload.seed}")

    def workload_spec(self) -> WorkloadSpec:
        w = self.workload
        return WorkloadSpec(
            profile=self.profile,
            rate_reqs_per_s=self.rate,
            duration_s=w.duration_s,
            mode=w.mode,
            num_buckets=w.num_buckets,
            zipf_s=w.zipf_s,
            similarity_threshold=w.similarity_threshold,
            reusability=w.reusability,
            cluster_count=w.cluster_count,
            noise_scale=w.noise_scale,
            dimension=self.lsh.dimension,
            arrivals=w.arrivals,
            seed=w.seed,
        )

    def epoch_config(self) -> EpochConfig:
        s = self.strategy
        return EpochConfig(s.name, s.epoch_ticks, s.trigger_threshold, s.no_of_buckets)

    def lsh_config(self) -> LshConfig:
        l = self.lsh
        return LshConfig(l.dimension, l.num_tables, l.hyperplanes_per_table, l.seed)

    def with_overrides(self, **sections) -> "SimConfig":
        """``cfg.with_overrides(workload={"rate": 500})``"""
        return build_config(to_dict(self), [(f"{s}.{k}", v) for s, kv in sections.items() for k, v in kv.items()])


# --------------------------------------------------------------------------- parsing


def _coerce(section: str, key: str, raw, ftype):
    where = f"[{section}] {key}"
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    optional = "Optional" in str(ftype)
    if optional and text.lower() in ("", "none"):
        return None
    base = str(ftype).replace("Optional[", "").rstrip("]")
    try:
        if base == "bool":
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if base == "int":
            return int(float(text)) if "e" in text.lower() else int(text)
        if base == "float":
            return float(text)
        if base == "Strategy":
            return Strategy(text.upper())
        return text
    except ValueError as e:
        raise ConfigError(f"{where}: {e}") from None


def _validate(cfg: SimConfig) -> SimConfig:
    w = cfg.workload
    try:
        if w.profile not in PROFILE_NAMES:
            raise UnknownProfile(f"unknown profile {w.profile!r}; built-ins: {', '.join(PROFILE_NAMES)}")
        cfg.workload_spec()
        cfg.epoch_config()
        cfg.lsh_config()
        cfg.lsh_ms
    except UnknownProfile as e:
        raise ConfigError(f"[workload] profile: {e.args[0]}") from None
    except LshConfigError as e:
        raise ConfigError(f"[lsh] {e}") from None
    except (WorkloadError, ValueError) as e:
        raise ConfigError(f"[workload]/[strategy] {e}") from None
    if not 0 <= w.warmup_s < w.duration_s:
        raise ConfigError("[workload] warmup_s must be in [0, duration_s)")
    if w.trace is not None and not Path(w.trace).exists():
        raise ConfigError(f"[workload] trace: no such file {w.trace!r}")
    return cfg


def build_config(sections: Mapping[str, Mapping[str, object]], overrides: Iterable = ()) -> SimConfig:
    """Build and validate a config from ``{section: {key: value}}`` plus
    ``("section.key", value)`` overrides applied after the base values."""
    merged: Dict[str, Dict[str, object]] = {}
    for sec, kv in sections.items():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]")
        merged[sec] = dict(kv)
    seen = {}
    for dotted, value in overrides:
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        sec, key = dotted.split(".", 1)
        if sec not in SECTIONS:
            raise ConfigError(f"override {dotted!r}: unknown section [{sec}]")
        if dotted in seen and seen[dotted] != value:
            raise ConfigError(f"conflicting overrides for {dotted}: {seen[dotted]!r} vs {value!r}")
        seen[dotted] = value
        merged.setdefault(sec, {})[key] = value

    built = {}
    for sec, cls in SECTIONS.items():
        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, raw in merged.get(sec, {}).items():
            if key not in fields:
                raise ConfigError(f"[{sec}] unknown key {key!r}")
            kwargs[key] = _coerce(sec, key, raw, fields[key].type)
        try:
            built[sec] = cls(**kwargs)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"[{sec}] {e}") from None
    return _validate(SimConfig(**built))


def parse_config_text(text: str, overrides: Iterable = (), source: str = "<config>") -> SimConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       default_section="__no_defaults__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(str(e)) from None
    sections = {s: dict(parser.items(s)) for s in parser.sections()}
    return build_config(sections, overrides)


def load_config(path, overrides: Iterable = ()) -> SimConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text(), overrides, source=str(p))


def parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"override {text!r} must be KEY=VALUE")
    key, value = text.split("=", 1)
    key = key.strip()
    if "." not in key:
        key = _guess_section(key)
    return key, value.strip()


def _guess_section(key: str) -> str:
    owners = [s for s, cls in SECTIONS.items() if key in {f.name for f in dataclasses.fields(cls)}]
    if key == "strategy":
        return "strategy.name"
    if len(owners) != 1:
        raise ConfigError(f"override key {key!r} is ambiguous or unknown; use section.key")
    return f"{owners[0]}.{key}"


def to_dict(cfg: SimConfig) -> Dict[str, Dict[str, object]]:
    out = {}
    for sec in SECTIONS:
        obj = getattr(cfg, sec)
        out[sec] = {}
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if v is None:
                continue
            out[sec][f.name] = v.value if isinstance(v, Strategy) else v
    return out


def dump_config(cfg: SimConfig) -> str:
    lines = []
    for sec, kv in to_dict(cfg).items():
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {v}" for k, v in kv.items())
        lines.append("")
    return "\n".join(lines)
