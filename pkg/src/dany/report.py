"""Report writers: every report is a delimited table plus a rendered figure
saved next to it."""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

__all__ = ["write_table", "render_loss_curve", "render_metric_bars", "render_sweep"]


def write_table(path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def render_loss_curve(path, history: list[float], title: str = "training loss") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(1, len(history) + 1), history, lw=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(title)
    if history and min(history) > 0:
        ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_metric_bars(path, metrics: dict[str, float], title: str = "evaluation") -> None:
    names = list(metrics)
    values = [metrics[k] for k in names]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(range(len(names)), values, color="#4878a8")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_sweep(path, axis_name: str, values: list[float],
                 series: dict[str, list[float]], title: str = "sweep") -> None:
    fig, axes = plt.subplots(1, len(series), figsize=(4 * len(series), 3.5), squeeze=False)
    for ax, (name, ys) in zip(axes[0], series.items()):
        ax.plot(values, ys, marker="o", lw=1.2)
        ax.set_xlabel(axis_name)
        ax.set_ylabel(name)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
