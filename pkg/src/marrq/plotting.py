"""Figures for sweep, per-module coefficient, and PID trajectory reports.

Everything renders with the Agg backend straight to files; nothing is shown.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.3,
    "lines.markersize": 4,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def figure(width=4.0, height=None, nrows=1, ncols=1):
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    height = width * golden if height is None else height
    with plt.rc_context(STYLE):
        return plt.subplots(nrows=nrows, ncols=ncols, figsize=(width, height), squeeze=False)


def save(fig, path) -> Path:
    path = Path(path)
    with plt.rc_context(STYLE):
        fig.savefig(path)
    plt.close(fig)
    return path


def plot_alpha_sweep(rows, path):
    """Per-module objective for each fixed coefficient, log scale."""
    with plt.rc_context(STYLE):
        fig, axes = figure(4.5)
        ax = axes[0, 0]
        for row in rows:
            names = [n for n, _ in row.objectives]
            ax.plot(range(len(names)), [j for _, j in row.objectives], marker="o",
                    label=f"alpha={row.alpha:g}")
        if rows:
            ax.set_xticks(range(len(names)), names)
        ax.set_yscale("log")
        ax.set_xlabel("module")
        ax.set_ylabel("output MSE")
        ax.legend(ncols=2)
    return save(fig, path)


def plot_alpha_per_module(report, path):
    """Estimated coefficient per module against the plain residual default of 1."""
    with plt.rc_context(STYLE):
        fig, axes = figure(4.5)
        ax = axes[0, 0]
        mods = [m for m in report.per_module if m.alpha_final is not None]
        ax.bar(range(len(mods)), [m.alpha_final for m in mods], color="tab:blue", label="estimated")
        ax.axhline(1.0, color="tab:red", ls="--", label="alpha=1")
        ax.set_xticks(range(len(mods)), [m.name for m in mods])
        ax.set_xlabel("module")
        ax.set_ylabel("alpha")
        ax.legend()
    return save(fig, path)


def plot_trajectories(traces, path, ncols=3):
    """Coefficient (left axis) and objective (right axis) against update step."""
    traces = list(traces)
    nrows = max(1, math.ceil(len(traces) / ncols))
    with plt.rc_context(STYLE):
        fig, axes = figure(3.0 * ncols, 2.2 * nrows, nrows=nrows, ncols=ncols)
        for ax in axes.ravel()[len(traces):]:
            ax.set_visible(False)
        for ax, tr in zip(axes.ravel(), traces):
            ts = [-1, 0] + [s.t for s in tr.steps]
            alphas = [a for a, _ in tr.seeds] + [s.alpha for s in tr.steps]
            objs = [j for _, j in tr.seeds] + [s.objective for s in tr.steps]
            ax.plot(ts, alphas, marker="o", color="tab:blue")
            ax.set_ylabel("alpha", color="tab:blue")
            ax.set_xlabel("step")
            ax.set_title(f"{tr.module} ({tr.termination.value})")
            ax2 = ax.twinx()
            ax2.plot(ts, objs, marker="s", color="tab:orange")
            ax2.set_ylabel("MSE", color="tab:orange")
            ax2.grid(False)
        fig.tight_layout()
    return save(fig, path)
