"""Optional figures rendered next to the metrics CSV."""

from __future__ import annotations

from pathlib import Path
from typing import List, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import MetricsReport  # noqa: E402


def render_figures(reports: Sequence[MetricsReport], csv_path) -> List[Path]:
    """Write ``<stem>_throughput.png`` and ``<stem>_cpu.png`` beside ``csv_path``."""
    csv_path = Path(csv_path)
    stem = csv_path.with_suffix("")
    out = []

    fig, ax = plt.subplots(figsize=(8, 4.5))
    for r in reports:
        t = [i * r.bin_ms / 1000.0 for i in range(len(r.throughput_per_bin))]
        ax.plot(t, r.throughput_per_bin, label=r.run_id, linewidth=1.2)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("satisfied requests / s")
    ax.grid(alpha=0.3)
    if len(reports) <= 12:
        ax.legend(fontsize=7)
    path = Path(f"{stem}_throughput.png")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    out.append(path)

    fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(reports) + 2), 4.5))
    ax.boxplot([r.mean_cpu_per_node() for r in reports])
    ax.set_xticks(range(1, len(reports) + 1))
    ax.set_xticklabels([r.run_id for r in reports], rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("mean CPU utilisation per EDR")
    ax.set_ylim(0, 1.05)
    ax.grid(axis="y", alpha=0.3)
    path = Path(f"{stem}_cpu.png")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    out.append(path)
    return out
