"""Render report figures next to the delimited outputs.

Every figure has a CSV twin; these renderings are for eyeballing runs, the
CSVs stay the interchange format (2-D projections of the metric space are
deliberately not done here -- export the distance matrix and use an external
projection tool).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .eval_metrics import ConfusionMatrix
from .listing_parser import TermDictionary

__all__ = ["save_term_histogram", "save_confusion_heatmap", "save_sweep_curve"]


def save_term_histogram(
    dictionary: TermDictionary, path: str | Path, top: int = 25
) -> None:
    """Bar chart of the most frequent opcodes, descending."""
    rows = dictionary.sorted_counts()[:top]
    fig, ax = plt.subplots(figsize=(10, 5))
    if rows:
        terms = [t for t, _ in rows]
        counts = [c for _, c in rows]
        ax.bar(range(len(rows)), counts, color="#35618f")
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(terms, rotation=60, ha="right", fontsize=8)
    ax.set_xlabel("opcode")
    ax.set_ylabel("occurrences")
    ax.set_title(f"Opcode frequencies (top {len(rows)})")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_confusion_heatmap(
    cm: ConfusionMatrix, path: str | Path, title: str = "Confusion matrix"
) -> None:
    """Heatmap with true labels on the vertical axis, predictions horizontal."""
    counts = cm.counts
    n = cm.n_classes
    fig, ax = plt.subplots(figsize=(7, 6))
    im = ax.imshow(counts, cmap="Blues")
    threshold = counts.max() / 2 if counts.max() else 0.5
    for i in range(n):
        for j in range(n):
            ax.text(
                j,
                i,
                str(int(counts[i, j])),
                ha="center",
                va="center",
                fontsize=8,
                color="white" if counts[i, j] > threshold else "black",
            )
    ax.set_xticks(range(n))
    ax.set_yticks(range(n))
    ax.set_xticklabels(range(1, n + 1))
    ax.set_yticklabels(range(1, n + 1))
    ax.set_xlabel("predicted class")
    ax.set_ylabel("true class")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_sweep_curve(
    ks: list[int], accuracies: list[float], path: str | Path
) -> None:
    """Total accuracy as k increases."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(ks, accuracies, marker="o", color="#35618f")
    ax.set_xlabel("k")
    ax.set_ylabel("total accuracy")
    ax.set_xticks(ks)
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.set_title("kNN total accuracy vs k")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
