"""
SVG charts for reports: budget curve, format x family heatmap, attention
curves and multi-seed bars.
"""

import logging
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from app.utils.export import ensure_directory  # noqa: E402

logger = logging.getLogger(__name__)

# Stable element ids and no timestamp, so identical data gives identical files.
plt.rcParams["svg.hashsalt"] = "plandiff"
plt.rcParams["svg.fonttype"] = "none"
SVG_METADATA = {"Date": None, "Creator": None}

PathLike = Union[str, Path]


def _save(fig, path: PathLike) -> Path:
    ensure_directory(path)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    logger.debug(f"Wrote chart {path}")
    return Path(path)


def budget_curve(rows: Sequence[Dict[str, object]], path: PathLike,
                 baseline: Optional[float] = None) -> Path:
    """Accuracy against plan budget; rows carry "budget" and "accuracy" (fraction or None)."""
    points = [(int(r["budget"]), float(r["accuracy"])) for r in rows if r.get("accuracy") is not None]
    fig, ax = plt.subplots(figsize=(6, 4))
    if points:
        x, y = zip(*sorted(points))
        ax.plot(x, [v * 100 for v in y], marker="o", color="#1f77b4", label="plan-conditioned")
    if baseline is not None:
        ax.axhline(baseline * 100, linestyle="--", color="#7f7f7f", label="no plan")
    ax.set_xlabel("Plan budget (tokens)")
    ax.set_ylabel("Accuracy (%)")
    ax.set_title("Accuracy vs plan budget")
    ax.legend(loc="lower right")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def heatmap(matrix: Mapping[str, Mapping[str, Optional[float]]], path: PathLike,
            title: str = "Accuracy by format and family") -> Path:
    """Rows are formats, columns families; values are accuracies (fractions)."""
    rows = list(matrix)
    cols = sorted({c for row in matrix.values() for c in row})
    data = np.full((len(rows), len(cols)), np.nan)
    for i, r in enumerate(rows):
        for j, c in enumerate(cols):
            value = matrix[r].get(c)
            if value is not None:
                data[i, j] = value * 100

    fig, ax = plt.subplots(figsize=(1.6 * max(len(cols), 2) + 2, 0.6 * max(len(rows), 2) + 1.5))
    image = ax.imshow(data, cmap="viridis", vmin=0, vmax=100, aspect="auto")
    ax.set_xticks(range(len(cols)))
    ax.set_xticklabels(cols)
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels(rows)
    for i in range(len(rows)):
        for j in range(len(cols)):
            if not np.isnan(data[i, j]):
                ax.text(j, i, f"{data[i, j]:.1f}", ha="center", va="center",
                        color="white" if data[i, j] < 60 else "black", fontsize=9)
    fig.colorbar(image, ax=ax, label="Accuracy (%)")
    ax.set_title(title)
    return _save(fig, path)


def attention_curves(series: Mapping[str, Mapping[int, Optional[float]]], path: PathLike) -> Path:
    """Excess plan-attention ratio per traced step, one line per condition."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, by_step in series.items():
        points = sorted((s, v) for s, v in by_step.items() if v is not None)
        if points:
            x, y = zip(*points)
            ax.plot(x, y, marker=".", label=label)
    ax.axhline(1.0, linestyle="--", color="#7f7f7f", label="uniform")
    ax.set_xlabel("Denoising step")
    ax.set_ylabel("Plan attention / plan fraction")
    ax.set_title("Plan attention over denoising")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def multiseed_bars(rows: Sequence[Dict[str, object]], path: PathLike) -> Path:
    """Mean accuracy per condition with one-sd error bars; rows carry label, mean, sd (percent)."""
    labels = [str(r["label"]) for r in rows]
    means = [float(r["mean"]) for r in rows]
    sds = [float(r["sd"]) for r in rows]
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(rows) + 2), 4))
    ax.bar(range(len(rows)), means, yerr=sds, capsize=4, color="#4c72b0", edgecolor="white")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("Accuracy (%)")
    ax.set_title("Accuracy across seeds (mean +/- sd)")
    ax.grid(axis="y", alpha=0.3)
    return _save(fig, path)


def loss_curve(curve: Sequence[Dict[str, float]], path: PathLike) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = [row["epoch"] for row in curve]
    ax.plot(epochs, [row["loss"] for row in curve], label="eval")
    if all("train_loss" in row and row["train_loss"] is not None for row in curve):
        ax.plot(epochs, [row["train_loss"] for row in curve], label="train", alpha=0.7)
    ax.set_xlabel("Epoch")
    ax.set_ylabel("Weighted masked CE")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)
