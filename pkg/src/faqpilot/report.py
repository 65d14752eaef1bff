"""Replay report emission: delimited output plus rendered figures.

The CSV column set is fixed and documented; the text table carries the same
rows for terminals. ``render_figures`` writes PNG charts next to the
delimited output so a replay or comparison run leaves both machine- and
human-readable artifacts behind.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .simulator import ReplayMetrics  # noqa: E402

CSV_COLUMNS = [
    "profile", "runs", "sets", "matched_suggested", "generated_suggested",
    "matched_selected", "generated_selected", "rag_calls", "rag_bypassed",
    "p50_ms", "p95_ms", "max_ms", "degraded",
]


def _as_mapping(metrics) -> Mapping[str, ReplayMetrics]:
    if isinstance(metrics, ReplayMetrics):
        return {"replay": metrics}
    return metrics


def emit_report(metrics, path: str | Path, format: str = "csv") -> Path:
    """Write the replay report. ``metrics`` is one ReplayMetrics or a
    mapping of profile label to ReplayMetrics."""
    by_label = _as_mapping(metrics)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if format == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for label, m in by_label.items():
                writer.writerow(m.to_row(label))
    elif format == "text-table":
        path.write_text(format_table(by_label), encoding="utf-8")
    else:
        raise ValueError(f"unknown report format {format!r}")
    return path


def format_table(metrics) -> str:
    by_label = _as_mapping(metrics)
    rows = [CSV_COLUMNS] + [
        [str(c) for c in m.to_row(label)] for label, m in by_label.items()
    ]
    widths = [max(len(row[i]) for row in rows) for i in range(len(CSV_COLUMNS))]
    lines = []
    for r, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if r == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def render_figures(metrics, out_dir: str | Path) -> list[Path]:
    """Render latency and RAG-savings charts as PNG files."""
    by_label = _as_mapping(metrics)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = list(by_label)
    written: list[Path] = []

    # end-to-end latency percentiles per profile
    fig, ax = plt.subplots(figsize=(max(6.0, 1.8 * len(labels)), 4.0))
    x = range(len(labels))
    width = 0.27
    for offset, pct in zip((-width, 0.0, width), ("p50", "p95", "max")):
        values = [
            by_label[l].wall_latency.get("end_to_end", {}).get(pct, 0.0) * 1000.0
            for l in labels
        ]
        ax.bar([xi + offset for xi in x], values, width=width, label=pct)
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=15, ha="right")
    ax.set_ylabel("end-to-end latency (ms)")
    ax.set_title("Suggestion round latency by profile")
    ax.legend()
    fig.tight_layout()
    latency_path = out_dir / "latency.png"
    fig.savefig(latency_path, dpi=120)
    plt.close(fig)
    written.append(latency_path)

    # RAG calls made vs bypassed per profile
    fig, ax = plt.subplots(figsize=(max(6.0, 1.8 * len(labels)), 4.0))
    made = [by_label[l].rag_calls_made for l in labels]
    bypassed = [by_label[l].rag_calls_bypassed for l in labels]
    ax.bar(list(x), made, width=0.4, label="RAG calls made")
    ax.bar([xi + 0.4 for xi in x], bypassed, width=0.4, label="RAG calls bypassed")
    ax.set_xticks([xi + 0.2 for xi in x])
    ax.set_xticklabels(labels, rotation=15, ha="right")
    ax.set_ylabel("calls")
    ax.set_title("RAG cost: calls made vs bypassed")
    ax.legend()
    fig.tight_layout()
    rag_path = out_dir / "rag_savings.png"
    fig.savefig(rag_path, dpi=120)
    plt.close(fig)
    written.append(rag_path)
    return written
