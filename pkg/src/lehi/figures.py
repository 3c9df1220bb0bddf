"""Figure rendering for run curves and sweep reports.

Figures go to PNG files next to the CSV outputs.  Curves show the raw
per-epoch series faded with the EMA-smoothed series on top; the
sensitivity plot shows the selection score against the learning rate on
a log axis.  Rendering strips volatile PNG metadata so repeated sweeps
of the same config produce identical bytes.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import RunRecord, SelectionRow, SweepReport, ema_smooth

_COLORS = {
    "lehi": "tab:green",
    "lehibrid": "tab:purple",
    "adam": "tab:red",
    "adamw": "tab:blue",
}
_SAVE_OPTS = {"dpi": 120, "metadata": {"Software": None}}


def _color(optimizer: str):
    return _COLORS.get(optimizer, "tab:gray")


def _mean_series(records: list[RunRecord], metric: str) -> np.ndarray:
    """Seed-mean of a per-epoch metric, truncated to the shortest run."""
    series = [rec.metric(metric) for rec in records]
    horizon = min(len(s) for s in series)
    if horizon == 0:
        return np.empty(0)
    return np.mean([s[:horizon] for s in series], axis=0)


def render_run_curves(
    records: list[RunRecord],
    metrics: list[str],
    path: str,
    ema_alpha: float = 0.3,
    title: str | None = None,
) -> None:
    """One panel per metric for a single cell's records."""
    fig, axes = plt.subplots(1, len(metrics), figsize=(5 * len(metrics), 3.6))
    if len(metrics) == 1:
        axes = [axes]
    for ax, metric in zip(axes, metrics):
        mean = _mean_series(records, metric)
        if mean.size:
            epochs = np.arange(1, mean.size + 1)
            color = _color(records[0].optimizer)
            ax.plot(epochs, mean, color=color, alpha=0.25, lw=1.0)
            ax.plot(epochs, ema_smooth(mean, ema_alpha), color=color, lw=1.8)
        ax.set_xlabel("epoch")
        ax.set_ylabel(metric.replace("_", " "))
        ax.grid(alpha=0.3)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)


def render_selected_curves(
    report: SweepReport,
    metric: str,
    path: str,
    ema_alpha: float = 0.3,
) -> None:
    """Per optimizer at its selected learning rate: faded raw seed-mean
    curve plus the EMA-smoothed curve."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for optimizer, lr in report.best.items():
        cell = [r for r in report.records if r.optimizer == optimizer and r.lr == lr]
        mean = _mean_series(cell, metric)
        if mean.size == 0:
            continue
        epochs = np.arange(1, mean.size + 1)
        color = _color(optimizer)
        ax.plot(epochs, mean, color=color, alpha=0.25, lw=1.0)
        ax.plot(
            epochs,
            ema_smooth(mean, ema_alpha),
            color=color,
            lw=1.8,
            label=f"{optimizer} (lr={lr:g})",
        )
    ax.set_xlabel("epoch")
    ax.set_ylabel(metric.replace("_", " "))
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)


def render_lr_sensitivity(
    rows: list[SelectionRow],
    path: str,
    direction: str = "minimize-upper",
) -> None:
    """Selection score versus learning rate, one line per optimizer.

    Diverged cells have non-finite scores and are drawn as markers at the
    edge of the finite range instead of breaking the axis.
    """
    by_opt: dict[str, list[SelectionRow]] = {}
    for row in rows:
        by_opt.setdefault(row.optimizer, []).append(row)
    finite_scores = [r.score for r in rows if math.isfinite(r.score)]
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for optimizer, cells in by_opt.items():
        cells = sorted(cells, key=lambda r: r.lr)
        lrs = [r.lr for r in cells]
        scores = [r.score for r in cells]
        color = _color(optimizer)
        ok = [(lr, s) for lr, s in zip(lrs, scores) if math.isfinite(s)]
        bad = [lr for lr, s in zip(lrs, scores) if not math.isfinite(s)]
        if ok:
            ax.plot(*zip(*ok), marker="o", color=color, label=optimizer)
        if bad and finite_scores:
            edge = max(finite_scores) if direction == "minimize-upper" else min(finite_scores)
            ax.plot(bad, [edge] * len(bad), linestyle="none", marker="x", color=color)
    ax.set_xscale("log")
    ax.set_xlabel("learning rate")
    ax.set_ylabel("selection score")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)
