from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

CSV_COLUMNS = (
    "run_id", "strategy", "profile", "rate", "bin_start_ms", "throughput", "node_id",
    "cpu_utilisation", "orchestration_calls", "hits", "misses", "unprocessed",
)


@dataclass
class MetricsReport:
    run_id: str
    strategy: str
    profile: str
    rate: float
    duration_s: float
    bin_ms: float = 1000.0
    warmup_s: float = 0.0
    throughput_per_bin: List[int] = field(default_factory=list)
    hits_per_bin: List[int] = field(default_factory=list)
    misses_per_bin: List[int] = field(default_factory=list)
    calls_per_bin: List[int] = field(default_factory=list)
    per_edr_cpu: List[List[float]] = field(default_factory=list)
    latency_samples: List[float] = field(default_factory=list)
    arrivals: int = 0
    hits: int = 0
    misses: int = 0
    unprocessed_at_end: int = 0
    orchestration_calls: int = 0
    gate_triggers: int = 0
    skipped_directives: int = 0
    moved_buckets: int = 0
    reroutes: int = 0
    default_routes: int = 0
    in_flight_misses: int = 0
    evictions: int = 0
    counters: Dict[str, int] = field(default_factory=dict)

    @property
    def satisfied(self) -> int:
        return self.hits + self.misses

    @property
    def throughput(self) -> float:
        """Satisfied requests per second over the whole horizon."""
        return self.satisfied / self.duration_s

    @property
    def hit_rate(self) -> float:
        return self.hits / self.satisfied if self.satisfied else 0.0

    def _first_bin(self) -> int:
        return int(np.ceil(self.warmup_s * 1000.0 / self.bin_ms - 1e-9))

    @property
    def steady_throughput(self) -> float:
        """Mean per-second throughput over the post-warmup bins."""
        bins = self.throughput_per_bin[self._first_bin():]
        return float(np.mean(bins)) * (1000.0 / self.bin_ms) if bins else 0.0

    def mean_cpu_per_node(self) -> List[float]:
        b0 = self._first_bin()
        return [float(np.mean(c[b0:])) if c[b0:] else 0.0 for c in self.per_edr_cpu]

    def max_cpu_per_node(self) -> List[float]:
        b0 = self._first_bin()
        return [float(np.max(c[b0:])) if c[b0:] else 0.0 for c in self.per_edr_cpu]

    def check_conservation(self):
        if self.hits + self.misses + self.unprocessed_at_end != self.arrivals:
            raise AssertionError(
                f"conservation violated: {self.hits}+{self.misses}+{self.unprocessed_at_end} != {self.arrivals}")

    def rows(self):
        b0 = self._first_bin()
        for b in range(b0, len(self.throughput_per_bin)):
            for n, cpu in enumerate(self.per_edr_cpu):
                yield (
                    self.run_id, self.strategy, self.profile, f"{self.rate:g}",
                    f"{b * self.bin_ms:g}", self.throughput_per_bin[b], n, f"{cpu[b]:.6f}",
                    self.calls_per_bin[b], self.hits_per_bin[b], self.misses_per_bin[b],
                    self.unprocessed_at_end,
                )


def csv_text(reports: Sequence[MetricsReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerows(r.rows())
    return buf.getvalue()


def write_csv_atomic(reports: Sequence[MetricsReport], path) -> Path:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(csv_text(reports))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_csv(path) -> List[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def summary_text(r: MetricsReport) -> str:
    """Fixed-width, one-page run summary."""
    lines = [
        f"{'run_id':<22}{r.run_id}",
        f"{'strategy':<22}{r.strategy}",
        f"{'profile':<22}{r.profile}",
        f"{'rate_reqs_per_s':<22}{r.rate:>12.1f}",
        f"{'arrivals':<22}{r.arrivals:>12d}",
        f"{'satisfied':<22}{r.satisfied:>12d}",
        f"{'throughput_req_s':<22}{r.steady_throughput:>12.2f}",
        f"{'hit_rate':<22}{r.hit_rate:>12.4f}",
        f"{'orchestration_calls':<22}{r.orchestration_calls:>12d}",
        f"{'unprocessed_at_end':<22}{r.unprocessed_at_end:>12d}",
    ]
    if r.latency_samples:
        lat = np.asarray(r.latency_samples)
        lines.append(f"{'latency_p50_ms':<22}{np.percentile(lat, 50):>12.2f}")
        lines.append(f"{'latency_p95_ms':<22}{np.percentile(lat, 95):>12.2f}")
    lines.append("")
    lines.append(f"{'node':>6}{'mean_cpu':>12}{'max_cpu':>12}")
    for n, (mean, mx) in enumerate(zip(r.mean_cpu_per_node(), r.max_cpu_per_node())):
        lines.append(f"{n:>6d}{mean:>12.4f}{mx:>12.4f}")
    return "\n".join(lines) + "\n"
