"""Static PNG figures written next to the CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamp or version in the file, so reruns are byte-identical
_PNG_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_cos_theta(result, path, label=None) -> Path:
    """Ensemble mean of cos(theta) with its bootstrap band."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.fill_between(result.times, result.ci_low, result.ci_high, alpha=0.3, linewidth=0)
    ax.plot(result.times, result.mean_cos, label=label or f"{result.n_completed} records")
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\langle\langle\cos\theta\rangle\rangle$")
    ax.set_ylim(-1.05, 1.05)
    ax.axhline(0.0, color="0.7", linewidth=0.8)
    ax.legend(loc="lower right")
    fig.tight_layout()
    return _save(fig, path)


def plot_trace(trial, path) -> Path:
    """Single-shot cos(theta) and largest posterior weight."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(trial.times, trial.cos_theta, label=r"$\cos\theta$")
    ax.plot(trial.times, trial.p_max, label=r"$\max_k P_k$")
    ax.set_xlabel("t")
    ax.set_ylim(-1.05, 1.05)
    ax.legend(loc="lower right")
    fig.tight_layout()
    return _save(fig, path)


def plot_posterior_frames(snapshots: dict, fields, b_true, path) -> Path:
    """Posterior weights on the (phi, cos theta) map, one panel per snapshot time."""
    fields = np.asarray(fields, dtype=float)
    u = fields / np.linalg.norm(fields, axis=1, keepdims=True)
    phi = np.mod(np.arctan2(u[:, 1], u[:, 0]), 2 * np.pi)
    ct = u[:, 2]
    bt = np.asarray(b_true, float) / np.linalg.norm(b_true)
    times = sorted(snapshots)
    fig, axes = plt.subplots(1, len(times), figsize=(2.6 * len(times), 2.8), squeeze=False, sharey=True)
    for ax, t in zip(axes[0], times):
        p = np.asarray(snapshots[t])
        ax.scatter(phi, ct, c=p, s=20 + 400 * p / max(p.max(), 1e-300), cmap="viridis", vmin=0)
        ax.plot(np.mod(np.arctan2(bt[1], bt[0]), 2 * np.pi), bt[2], "r+", markersize=10)
        ax.set_title(f"t = {t:g}")
        ax.set_xlim(-0.2, 2 * np.pi + 0.2)
        ax.set_ylim(-1.1, 1.1)
        ax.set_xlabel(r"$\phi$")
    axes[0][0].set_ylabel(r"$\cos\theta_k$")
    fig.tight_layout()
    return _save(fig, path)
