"""Matplotlib rendering of the analysis artifacts.

Every report path writes figures next to its delimited output: the
aggregate grid as an annotated heatmap, bar summaries as grouped bars per
target, and training curves as a two-axis line plot. All rendering uses
the Agg backend and writes PNG files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import AggregateMatrix  # noqa: E402

_LABELS = {
    "magnatagatune": "MagnaTagATune",
    "fma_medium": "FMA-medium",
    "lyra": "Lyra",
    "turkish_makam": "Turkish-makam",
    "hindustani": "Hindustani",
    "carnatic": "Carnatic",
    "single_domain": "single-domain",
}


def _label(name: str) -> str:
    return _LABELS.get(name, name)


def render_aggregate_heatmap(agg: AggregateMatrix, path) -> Path:
    n = len(agg.datasets)
    fig, ax = plt.subplots(figsize=(1.1 * n + 2.5, 1.0 * n + 1.5))
    masked = np.ma.masked_invalid(agg.grid)
    cmap = plt.get_cmap("viridis").copy()
    cmap.set_bad("#dddddd")
    im = ax.imshow(masked, cmap=cmap, vmin=0.0, vmax=1.0)
    ax.set_xticks(range(n), [_label(d) for d in agg.datasets], rotation=35, ha="right")
    ax.set_yticks(range(n), [_label(d) for d in agg.datasets])
    ax.set_xlabel("target domain")
    ax.set_ylabel("source domain")
    for i in range(n):
        for j in range(n):
            if np.isfinite(agg.grid[i, j]):
                v = agg.grid[i, j]
                ax.text(j, i, f"{v:.2f}", ha="center", va="center",
                        color="white" if v < 0.6 else "black", fontsize=9)
    fig.colorbar(im, ax=ax, shrink=0.85, label="normalized transfer score")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_bar_chart(bars: dict, path, title: str = "") -> Path:
    targets = list(bars)
    sources = []
    for per_source in bars.values():
        for s in per_source:
            if s not in sources:
                sources.append(s)
    width = 0.8 / max(1, len(sources))
    fig, ax = plt.subplots(figsize=(1.9 * len(targets) + 2, 4.5))
    x = np.arange(len(targets))
    for k, source in enumerate(sources):
        heights = [bars[t].get(source) or np.nan for t in targets]
        offset = (k - (len(sources) - 1) / 2) * width
        ax.bar(x + offset, heights, width=width * 0.95, label=_label(source))
    ax.set_xticks(x, [_label(t) for t in targets], rotation=20, ha="right")
    ax.set_ylabel("mean ROC-AUC (%)")
    lo = np.nanmin([v for per in bars.values() for v in per.values() if v is not None])
    ax.set_ylim(max(0.0, lo - 5.0), None)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8, ncol=2)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_training_curves(epochs: list[dict], path, title: str = "") -> Path:
    xs = [e["epoch"] for e in epochs]
    fig, ax1 = plt.subplots(figsize=(7, 4))
    ax1.plot(xs, [e["loss"] for e in epochs], color="tab:red", label="train loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss", color="tab:red")
    aucs = [(e["epoch"], e["roc_auc"]) for e in epochs if e["roc_auc"] is not None]
    if aucs:
        ax2 = ax1.twinx()
        ax2.plot(*zip(*aucs), color="tab:blue", label="ROC-AUC")
        ax2.set_ylabel("macro ROC-AUC", color="tab:blue")
    if title:
        ax1.set_title(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
