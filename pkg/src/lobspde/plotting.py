"""Figures for the CLI report path, written next to the CSV output.

Imported only when ``--plot`` is given so the library itself never needs a
display or the plotting stack.
"""
from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def plot_trajectory(path: Path, times, v_b, v_a, s) -> Path:
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    ax0.plot(times, v_b, lw=0.8, label="bid volume")
    ax0.plot(times, v_a, lw=0.8, label="ask volume")
    ax0.set_ylabel("volume")
    ax0.legend(loc="best", fontsize=8)
    ax1.plot(times, s, lw=0.8, color="k")
    ax1.set_ylabel("mid-price")
    ax1.set_xlabel("time [s]")
    return _save(fig, path)


def plot_profile(path: Path, ticks, bid, ask, fits: Optional[dict] = None) -> Path:
    """Average sizes per tick with fitted curves (``fits``: label -> (side, values))."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ticks = np.asarray(ticks, dtype=float)
    ax.bar(-ticks, bid, width=0.8, color="tab:blue", alpha=0.6, label="bid")
    ax.bar(ticks, ask, width=0.8, color="tab:red", alpha=0.6, label="ask")
    for label, (side, vals) in (fits or {}).items():
        xs = -ticks if side == "bid" else ticks
        ax.plot(xs, vals, lw=1.2, label=label)
    ax.set_xlabel("distance from best price [ticks]")
    ax.set_ylabel("mean size")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, path)


def plot_series(path: Path, x, columns: dict, xlabel: str, ylabel: str) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, vals in columns.items():
        ax.plot(x, vals, marker="o", ms=3, lw=1.0, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(loc="best", fontsize=8)
    return _save(fig, path)


def plot_depths(path: Path, times, d_b, d_a, labels: Sequence[str] = ("bid depth", "ask depth")) -> Path:
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(times, d_b, lw=0.6, label=labels[0])
    ax.plot(times, d_a, lw=0.6, label=labels[1])
    ax.set_xlabel("time [s]")
    ax.set_ylabel("depth")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, path)
