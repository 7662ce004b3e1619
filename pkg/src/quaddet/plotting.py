"""Matplotlib figures written next to the delimited reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    "image.cmap": "viridis",
}


def _figure(width=4.0, height=3.0):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, height))
    return fig, ax


def _save(fig, path):
    with plt.rc_context(STYLE):
        fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def centerness_figure(values, extent, path, title=""):
    fig, ax = _figure(3.6, 3.2)
    x0, x1, y0, y1 = extent
    im = ax.imshow(values, extent=(x0, x1, y1, y0), vmin=0.0, vmax=1.0, interpolation="nearest")
    ax.set_aspect("equal")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    _save(fig, path)


def heatmap_figure(counts, path, title=""):
    """Confidence on the vertical axis (high at top), IoU on the horizontal."""
    fig, ax = _figure(3.6, 3.2)
    im = ax.imshow(np.asarray(counts)[::-1], extent=(0, 1, 0, 1), aspect="auto", interpolation="nearest",
                   cmap="magma")
    ax.set_xlabel("IoU")
    ax.set_ylabel("confidence")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04, label="TP count")
    _save(fig, path)


def comparison_figure(summary, path, metric="map"):
    """Bar chart of mean +- std per configuration; ``summary`` rows are dicts."""
    fig, ax = _figure(max(3.0, 0.6 * len(summary) + 1.0), 3.0)
    labels = [f"{r['strategy']}\n{r['mode']}" for r in summary]
    means = [r[f"{metric}_mean"] for r in summary]
    stds = [r[f"{metric}_std"] for r in summary]
    ax.bar(range(len(summary)), means, yerr=stds, color="0.55", capsize=3)
    ax.set_xticks(range(len(summary)))
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel("mAP" if metric == "map" else "corner L2 error (px)")
    _save(fig, path)


def capacity_figure(depths, means, stds, path):
    fig, ax = _figure()
    ax.errorbar(depths, means, yerr=stds, marker="o", color="k", capsize=3)
    ax.set_xlabel("tower layers")
    ax.set_ylabel("mAP")
    ax.set_xticks(list(depths))
    _save(fig, path)
