"""Figures for the comparison report: latency CDFs and message counts.

Rendering goes through the Agg backend with a fixed style and no timestamp
metadata, so identical inputs give identical PNG bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.dpi": 100,
    "savefig.dpi": 100,
}


def _save(fig, path: Path) -> Path:
    path = Path(path)
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_cdfs(series: dict[str, list[tuple[float, float]]], path) -> Path:
    """One step curve per config label."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for label, points in series.items():
            if not points:
                continue
            xs = [0.0] + [p[0] for p in points]
            ys = [0.0] + [p[1] for p in points]
            ax.step(xs, ys, where="post", label=label, linewidth=1.2)
        ax.set_xlabel("one-way latency to origin (ms)")
        ax.set_ylabel("fraction of nodes")
        ax.set_ylim(0.0, 1.01)
        ax.legend(loc="lower right", fontsize=8)
        fig.tight_layout()
        return _save(fig, path)


def plot_messages(rows: list[tuple[str, int, int]], path) -> Path:
    """Stacked iBGP/eBGP message counts per config; rows are (label, ibgp, ebgp)."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        labels = [r[0] for r in rows]
        ibgp = [r[1] for r in rows]
        ebgp = [r[2] for r in rows]
        xs = range(len(rows))
        ax.bar(xs, ibgp, label="iBGP")
        ax.bar(xs, ebgp, bottom=ibgp, label="eBGP")
        ax.set_xticks(list(xs))
        ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
        ax.set_ylabel("messages")
        ax.legend(fontsize=8)
        fig.tight_layout()
        return _save(fig, path)
