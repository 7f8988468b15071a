"""Report figures. Figures are built on the Agg canvas directly, so no
pyplot state is shared between runs."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
}
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def new_figure(width: float = 4.5, ncols: int = 1):
    import matplotlib as mpl

    with mpl.rc_context(STYLE):
        fig = Figure(figsize=(width * ncols, width * GOLDEN))
        FigureCanvasAgg(fig)
        axes = fig.subplots(1, ncols)
    return fig, axes


def save(fig: Figure, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    # fixed metadata keeps the PNG bytes stable across runs
    fig.savefig(path, dpi=120, metadata={"Software": None})
    return path


def objective_curve(objectives, path, residuals=None, title="diffusion"):
    """Objective per step; ADMM primal residuals on a second panel."""
    fig, axes = new_figure(ncols=2 if residuals else 1)
    ax = axes[0] if residuals else axes
    ax.plot(np.arange(len(objectives)), objectives, color="C0")
    ax.set_xlabel("step")
    ax.set_ylabel("objective")
    ax.set_title(title)
    if residuals:
        ax2 = axes[1]
        steps = np.arange(1, len(residuals["edge"]) + 1)
        ax2.semilogy(steps, np.maximum(residuals["edge"], 1e-300), label="edge")
        ax2.semilogy(steps, np.maximum(residuals["node"], 1e-300), label="node")
        ax2.set_xlabel("step")
        ax2.set_ylabel("primal residual")
        ax2.legend(frameon=False)
    return save(fig, path)


def learning_curve(log_rows, path, metric="micro_f1"):
    """One line per split from train-log rows."""
    fig, ax = new_figure()
    for split in sorted({r["split"] for r in log_rows}):
        rows = [r for r in log_rows if r["split"] == split]
        ax.plot([r["epoch"] for r in rows], [r[metric] for r in rows], label=split)
    ax.set_xlabel("epoch")
    ax.set_ylabel(metric.replace("_", " "))
    ax.legend(frameon=False)
    return save(fig, path)


def approx_curve(history, model_mae, identity_mae, path):
    fig, axes = new_figure(ncols=2)
    ax = axes[0]
    if history:
        ax.semilogy([r["epoch"] for r in history], [r["val_mae"] for r in history], label="val MAE")
    ax.axhline(identity_mae, color="0.5", ls="--", label="identity")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MAE")
    ax.legend(frameon=False)
    axes[1].bar(["CoNHD", "identity"], [model_mae, identity_mae], color=["C0", "0.6"])
    axes[1].set_ylabel("test MAE")
    return save(fig, path)


def scaling_plot(sizes, times, slope, intercept, path):
    fig, ax = new_figure()
    sizes, times = np.asarray(sizes, float), np.asarray(times, float)
    ax.loglog(sizes, times, "o", color="C0", label="measured")
    fit = np.exp(intercept) * sizes**slope
    ax.loglog(sizes, fit, "-", color="C1", label=f"slope {slope:.2f}")
    ax.set_xlabel(r"$\sum_e d_e$")
    ax.set_ylabel("forward+backward time [s]")
    ax.legend(frameon=False)
    return save(fig, path)
