"""Matplotlib figures written next to report tables (PNG, Agg backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .anno_model import ALL_CLASSES  # noqa: E402
from .reports import RECALL_SHORT  # noqa: E402


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def per_class_recall_plot(series: Mapping[str, Mapping], path: str | Path) -> Path:
    """Grouped bars of per-class recall (percent), one bar group per class."""
    fig, ax = plt.subplots(figsize=(10, 4))
    n = max(1, len(series))
    width = 0.8 / n
    for k, (label, recall) in enumerate(series.items()):
        xs = [i + k * width - 0.4 + width / 2 for i in range(len(ALL_CLASSES))]
        ax.bar(xs, [100 * recall[c] for c in ALL_CLASSES], width, label=label)
    ax.set_xticks(range(len(ALL_CLASSES)))
    ax.set_xticklabels(RECALL_SHORT, rotation=30)
    ax.set_ylabel("recall (%)")
    ax.set_ylim(0, 100)
    ax.legend(fontsize="small")
    return _save(fig, path)


def stage_flow_plot(flow: Sequence[int], labels: Sequence[str], path: str | Path) -> Path:
    """Records remaining after each preprocessing stage."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar(range(len(flow)), flow, color="tab:blue")
    for i, v in enumerate(flow):
        ax.annotate(str(v), (i, v), ha="center", va="bottom", fontsize="small")
    ax.set_xticks(range(len(flow)))
    ax.set_xticklabels(labels, rotation=20)
    ax.set_ylabel("records")
    return _save(fig, path)


def agreement_plot(rows: Mapping[str, Mapping[str, float | None]], path: str | Path) -> Path:
    """Grouped bars of agreement measures per dataset or dimension."""
    measures = sorted({m for r in rows.values() for m in r})
    fig, ax = plt.subplots(figsize=(7, 3.5))
    n = max(1, len(measures))
    width = 0.8 / n
    for k, m in enumerate(measures):
        xs = [i + k * width - 0.4 + width / 2 for i in range(len(rows))]
        ys = [rows[name].get(m) for name in rows]
        ax.bar(xs, [0.0 if y is None else y for y in ys], width, label=m)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(list(rows))
    ax.axhline(0, color="black", linewidth=0.5)
    ax.set_ylabel("value")
    ax.legend(fontsize="small")
    return _save(fig, path)
