"""Static figures written next to the CSV artifacts (Agg backend, no display)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .congestion import SystemOptimum  # noqa: E402
from .pricing import PricingPolicy  # noqa: E402
from .simulation import MetricsSeries  # noqa: E402


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_decisions(series: MetricsSeries, so: SystemOptimum, path: Path) -> Path:
    t = series.column("t")
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for j, name in enumerate(("w1", "w2")):
        line, = ax.plot(t, series.column(name), lw=0.8, label=f"$w_{j + 1}$")
        ax.axhline(so.split[j], color=line.get_color(), ls="--", lw=0.8)
    ax.set_xlabel("round")
    ax.set_ylabel("weight share")
    ax.legend(loc="best")
    return _save(fig, path)


def plot_fairness(series: MetricsSeries, path: Path) -> Path:
    t = series.column("t")
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5), sharex=True)
    for ax, mean, spread, label in ((axes[0], "mean_L", "ineqt", "$L_t$"),
                                    (axes[1], "mean_LW", "ineql", "$L_t/W$")):
        m, s = series.column(mean), series.column(spread)
        ax.plot(t, m, lw=0.9)
        ax.fill_between(t, m - s, m + s, alpha=0.3)
        ax.set_xlabel("round")
        ax.set_ylabel(label)
    return _save(fig, path)


def plot_prices(policy: PricingPolicy, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for r in (0, 1):
        xs, ys = [], []
        for b in policy.brackets:
            xs += [b.lo, b.hi]
            ys += [float(b.prices[r])] * 2
        ax.plot(xs, ys, lw=1.0, label=f"$p_{r + 1}$")
    ax.set_xlabel("weight")
    ax.set_ylabel("price")
    ax.legend(loc="best")
    return _save(fig, path)


def plot_histogram(edges: np.ndarray, counts: np.ndarray, path: Path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.stairs(counts, edges, fill=True)
    ax.set_xlabel("karma")
    ax.set_ylabel("agents")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_stationary(stationary: np.ndarray, simulated: np.ndarray | None, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    cells = np.arange(len(stationary))
    ax.bar(cells, stationary, width=0.9, alpha=0.6, label="stationary")
    if simulated is not None:
        ax.step(cells, simulated[:len(cells)], where="mid", color="k", lw=0.9, label="simulated")
    ax.set_xlabel("karma cell")
    ax.set_ylabel("probability")
    ax.legend(loc="best")
    return _save(fig, path)
