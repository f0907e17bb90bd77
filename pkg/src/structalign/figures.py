"""Matplotlib renderings for the CLI report paths (file output only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .align import AlignmentPath
from .evaluate import AccuracyReport
from .simgrid import CrossSimilarityMatrix


def render_path_figure(
    out_file,
    csm: CrossSimilarityMatrix,
    path: AlignmentPath,
    title: str = "",
) -> None:
    """Distance matrix with the alignment path overlaid."""
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(csm.values, origin="lower", aspect="auto", cmap="gray_r",
                   interpolation="nearest")
    ms = np.array([m for m, _ in path.cells])
    ns = np.array([n for _, n in path.cells])
    ax.plot(ns, ms, color="tab:red", linewidth=1.2)
    for i in path.jump_positions:
        ax.plot(path.cells[i][1], path.cells[i][0], "o", color="tab:blue", markersize=4)
    ax.set_xlabel("score frame")
    ax.set_ylabel("performance frame")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, label="chroma distance")
    fig.tight_layout()
    fig.savefig(out_file, dpi=120)
    plt.close(fig)


def render_accuracy_figure(out_file, reports: list[AccuracyReport]) -> None:
    """Grouped bars: one group per threshold, one bar per engine."""
    fig, ax = plt.subplots(figsize=(6, 4))
    thresholds = reports[0].thresholds_ms
    x = np.arange(len(thresholds))
    width = 0.8 / len(reports)
    for k, r in enumerate(reports):
        ax.bar(x + k * width, r.accuracy_percent, width, label=r.engine)
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels([f"<{t}ms" for t in thresholds])
    ax.set_ylabel("beat accuracy (%)")
    ax.set_ylim(0, 100)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_file, dpi=120)
    plt.close(fig)


def render_training_figure(out_file, history: list[tuple[int, float, float]]) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = [h[0] for h in history]
    ax.plot(epochs, [h[1] for h in history], label="train")
    ax.plot(epochs, [h[2] for h in history], label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("L2 loss")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_file, dpi=120)
    plt.close(fig)
