"""Figure rendering for scan and performance reports.

Charts are written as PNG files next to the delimited output when the CLI is
given --figures. Rendering is headless (Agg backend).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .detector import STATUSES, ScanReport
from .perfmon import DELTA_FIELDS, GB, PerfSnapshot

_STATUS_COLORS = {
    "Clean": "#4c9f70",
    "Modified": "#e07b39",
    "Missing": "#b65546",
    "Unknown": "#7a7a7a",
    "SignatureHit": "#a23b72",
}


def save_scan_status_figure(report: ScanReport, out_path) -> Path:
    """Bar chart of finding counts by status."""
    counts = report.counts
    labels = list(STATUSES)
    values = [counts[s] for s in labels]
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    bars = ax.bar(labels, values, color=[_STATUS_COLORS[s] for s in labels])
    ax.bar_label(bars)
    ax.set_ylabel("findings")
    ax.set_title(f"scan findings ({len(report.findings)} files)")
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def save_perf_compare_figure(
    before: PerfSnapshot, after: PerfSnapshot, out_path
) -> Path:
    """Before/after bars for every metric available in both snapshots."""
    comparable = [
        name
        for name in DELTA_FIELDS
        if getattr(before, name) is not None and getattr(after, name) is not None
    ]
    n = max(len(comparable), 1)
    fig, axes = plt.subplots(1, n, figsize=(2.4 * n, 3.2))
    if n == 1:
        axes = [axes]
    for ax, name in zip(axes, comparable):
        b = getattr(before, name)
        a = getattr(after, name)
        if name == "mem_used_bytes":
            b, a = b / GB, a / GB
            label = "mem used (GB)"
        else:
            label = name.replace("_", " ")
        bars = ax.bar(["before", "after"], [b, a], color=["#5b8db8", "#e07b39"])
        ax.bar_label(bars, fmt="%g")
        ax.set_title(label, fontsize=9)
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
    if not comparable:
        axes[0].text(0.5, 0.5, "no comparable metrics", ha="center", va="center")
        axes[0].set_axis_off()
    fig.tight_layout()
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out
