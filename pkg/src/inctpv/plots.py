"""Figure rendering for run reports: reconstruction panels, metric boxplots,
and schedule traces. All figures are written to files (no interactive UI)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_reconstruction_panel(path, gt, start, recon, titles=("ground truth", "input", "reconstruction")):
    """Side-by-side grayscale panel for one image."""
    fig, axes = plt.subplots(1, 3, figsize=(10.5, 3.8))
    for ax, img, title in zip(axes, (gt, start, recon), titles):
        ax.imshow(np.asarray(img), cmap="gray", vmin=0.0, vmax=1.0)
        ax.set_title(title, fontsize=10)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_metric_boxplot(path, series, metric_name):
    """Boxplot comparing per-method metric distributions.

    series: list of (label, values)."""
    labels = [label for label, _ in series]
    data = [np.asarray(vals, dtype=float) for _, vals in series]
    fig, ax = plt.subplots(figsize=(1.6 + 1.4 * len(series), 4.0))
    ax.boxplot(data, tick_labels=labels, whis=(0, 100))
    ax.set_ylabel(metric_name)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_trace_curves(path, traces):
    """Objective and lambda trajectories over the incremental steps for a
    batch of runs; traces is a list of IncrementalTrace."""
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6))
    for trace in traces:
        steps = [s.h for s in trace.steps]
        axes[0].semilogy(steps, [s.f for s in trace.steps], alpha=0.5, lw=1.0)
        axes[1].semilogy(steps, [s.lam for s in trace.steps], alpha=0.5, lw=1.0)
    axes[0].set_xlabel("step h")
    axes[0].set_ylabel("objective f")
    axes[1].set_xlabel("step h")
    axes[1].set_ylabel("lambda")
    for ax in axes:
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_timing_bars(path, rows):
    """Bar chart of mean per-image wall time; rows are (label, mean_seconds)."""
    labels = [r[0] for r in rows]
    means = [r[1] for r in rows]
    fig, ax = plt.subplots(figsize=(1.6 + 1.2 * len(rows), 3.8))
    ax.bar(labels, means, color="#4878a8")
    ax.set_ylabel("mean seconds per image")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
