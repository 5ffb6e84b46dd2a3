"""Matplotlib figure rendering for pipeline reports.

Figures are written next to the delimited outputs (loss CSV, metrics CSV)
with fixed metadata so repeated runs produce byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

# strip the matplotlib version string so repeat runs are byte-identical
_PNG_METADATA = {"Software": "evsynth"}


def _save(fig, path):
    fig.savefig(path, dpi=120, metadata=_PNG_METADATA)
    plt.close(fig)


def render_loss_curve(trace, path) -> None:
    """Per-step training loss on a log-scaled y axis."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(np.arange(1, len(trace) + 1), trace, lw=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def render_metric_bars(metrics: dict[str, float], path) -> None:
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(metrics)), 3.5))
    names = list(metrics)
    ax.bar(names, [metrics[k] for k in names], color="#4878a8")
    ax.set_ylabel("value")
    ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    _save(fig, path)


def preview_image(channels: np.ndarray) -> np.ndarray:
    """Display variant: white background, positive red / negative blue."""
    red, blue = channels[..., 0], channels[..., 2]
    out = np.ones_like(channels)
    out[..., 0] -= blue  # blue pixels lose red+green
    out[..., 1] -= np.maximum(red, blue)
    out[..., 2] -= red
    return np.clip(out, 0.0, 1.0)


def render_frame_grid(frames, path, cols: int = 8, preview: bool = True) -> None:
    """Tile frames into one figure; preview mode uses the white-background style."""
    n = len(frames)
    cols = min(cols, max(n, 1))
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(1.2 * cols, 1.2 * rows),
                             squeeze=False)
    for i in range(rows * cols):
        ax = axes[i // cols][i % cols]
        ax.axis("off")
        if i < n:
            channels = frames[i].channels if hasattr(frames[i], "channels") else frames[i]
            image = preview_image(channels) if preview else channels
            ax.imshow(image, interpolation="nearest")
    fig.tight_layout(pad=0.2)
    _save(fig, path)
