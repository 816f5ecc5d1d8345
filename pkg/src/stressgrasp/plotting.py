"""PNG figures written next to CSV reports (matplotlib, headless)."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def png_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".png")


def plot_convergence(trace, path, title: str = "") -> Path:
    """Lower bound, support value and running upper bound per iteration."""
    plt = _pyplot()
    arr = np.array(trace, dtype=float).reshape(-1, 4)
    fig, ax = plt.subplots(figsize=(6, 4))
    if len(arr):
        it, low, sup, up = arr.T
        ax.plot(it, sup, ".", color="0.6", ms=3, label="support value")
        ax.plot(it, up, "-", color="tab:red", label="upper bound")
        ax.plot(it, low, "-", color="tab:blue", label="lower bound")
        top = np.nanmax(np.concatenate([up, low]))
        ax.set_ylim(0, 1.15 * top if top > 0 else 1)
    ax.set_xlabel("iteration")
    ax.set_ylabel("Q")
    ax.set_title(title or "metric convergence")
    ax.legend(loc="lower right")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_candidates(positions, normals, selected, path, title: str = "") -> Path:
    """Candidate contacts in 3D with the selected ones highlighted."""
    plt = _pyplot()
    P = np.asarray(positions, dtype=float).reshape(-1, 3)
    nrm = np.asarray(normals, dtype=float).reshape(-1, 3)
    sel = np.zeros(len(P), dtype=bool)
    sel[list(selected)] = True
    fig = plt.figure(figsize=(5, 5))
    ax = fig.add_subplot(projection="3d")
    ax.scatter(*P[~sel].T, s=8, color="0.55", label="candidates")
    ax.scatter(*P[sel].T, s=40, color="tab:red", label="selected")
    if sel.any():
        L = 0.08 * max(float(np.ptp(P, axis=0).max()), 1e-9)
        ax.quiver(*P[sel].T, *(L * nrm[sel]).T, color="tab:red")
    ax.set_title(title or "contact selection")
    ax.legend(loc="upper left")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
