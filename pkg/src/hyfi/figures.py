"""Render the report histograms and curves to PNG files next to their CSVs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def save_histogram(path, counts, bin_edges, title, xlabel, mean=None):
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    edges = np.asarray(bin_edges)
    ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge",
           color="#31688e", edgecolor="white", linewidth=0.4)
    if mean is not None:
        ax.axvline(mean, color="#d1495b", linestyle="--", linewidth=1.2,
                   label=f"mean = {mean:.3f}")
        ax.legend(frameon=False)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    return _finish(fig, path)


def save_population_histograms(path, summaries, xlabel):
    """Overlay per-population origin-distance histograms (step outlines)."""
    fig, ax = plt.subplots(figsize=(6.4, 3.8))
    colors = {"interpolated": "#d1495b", "semantic": "#31688e",
              "perceptual": "#35b779", "brain": "#8b8b8b"}
    for name, s in summaries.items():
        edges = np.asarray(s.bin_edges)
        ax.stairs(s.counts, edges, label=f"{name} (mean {s.mean:.3f})",
                  color=colors.get(name), linewidth=1.4)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    ax.set_title("distance from origin by embedding population")
    ax.legend(frameon=False, fontsize=8)
    return _finish(fig, path)


def save_history(path, history):
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(np.arange(1, len(history) + 1), history, color="#31688e")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean batch loss")
    ax.set_title("training loss")
    return _finish(fig, path)


def save_rank_histogram(path, ranks, n_ways):
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    bins = np.arange(0.5, n_ways + 1.5)
    ax.hist(ranks, bins=bins, color="#31688e", edgecolor="white", linewidth=0.3)
    ax.set_xlabel("rank of the paired candidate")
    ax.set_ylabel("count")
    ax.set_title(f"{n_ways}-way retrieval ranks")
    return _finish(fig, path)
