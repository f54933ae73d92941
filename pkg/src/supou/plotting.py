"""Optional PNG figures, rendered off-screen. Needs the ``plots`` extra (matplotlib)."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:
        raise RuntimeError("figures need matplotlib; install the 'plots' extra") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def series_figure(values: np.ndarray, path: Path, label: str) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(np.arange(1, values.size + 1), values, lw=0.5)
    ax.set_xlabel("t")
    ax.set_ylabel(label)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def curve_figure(r: np.ndarray, values: np.ndarray, path: Path, label: str) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    sel = (r > 0) & (values > 0)
    ax.loglog(r[sel], values[sel], marker=".")
    ax.set_xlabel("r")
    ax.set_ylabel(label)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def estimates_figure(estimates: np.ndarray, theta0: np.ndarray, names, path: Path) -> Path:
    plt = _pyplot()
    fig, axes = plt.subplots(1, len(names), figsize=(3 * len(names), 3))
    for ax, col, truth, name in zip(np.atleast_1d(axes), estimates.T, theta0, names):
        ax.hist(col[np.isfinite(col)], bins=20)
        ax.axvline(truth, color="k", lw=1)
        ax.set_title(name)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
