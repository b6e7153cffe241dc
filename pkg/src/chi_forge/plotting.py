"""Figures for the report command, rendered off-screen to PNG."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .analysis import SweepGrid  # noqa: E402

_META = {"Software": None}


def plot_fidelity_map(grid: SweepGrid, path, probe=(0.02, 0.02)) -> Path:
    """Density plot of fidelity over the two timing-error rates."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    extent = [grid.n2_values[0], grid.n2_values[-1], grid.n1_values[0], grid.n1_values[-1]]
    im = ax.imshow(grid.fidelities, origin="lower", extent=extent, aspect="auto", cmap="viridis", vmax=1.0)
    fig.colorbar(im, ax=ax, label="fidelity")
    if probe is not None:
        ax.plot([probe[1]], [probe[0]], marker="x", color="w")
    ax.set_xlabel("$n_2$")
    ax.set_ylabel("$n_1$")
    ax.set_title(f"{grid.model} / {grid.engine}")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return path


def plot_leakage(samples, path, limit: float = 0.02) -> Path:
    """Excited-level population against time, with the tolerance line."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5.2, 3.2))
    if samples:
        t, v = zip(*samples)
        ax.plot(t, v, lw=0.8)
    ax.axhline(limit, color="r", ls="--", lw=0.8)
    ax.set_xlabel("t (1/g)")
    ax.set_ylabel("excited population")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return path
