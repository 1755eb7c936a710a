"""Report figures written next to the stage manifests (PNG, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamp or version in the PNG, so figures are as reproducible as the data
_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def plot_as_scores(records: list[dict], path, threshold: float | None = None) -> Path:
    """Bar chart of agreement score (mean +- std) per discovered task."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    names = [r["task_id"] for r in records]
    means = [r["as_mean"] for r in records]
    stds = [r.get("as_std", 0.0) for r in records]
    if names:
        ax.bar(np.arange(len(names)), means, yerr=stds, color="#4c72b0", capsize=3)
        ax.set_xticks(np.arange(len(names)), names, rotation=45, ha="right", fontsize=8)
    else:
        ax.text(0.5, 0.5, "no task reached the threshold", ha="center", va="center", transform=ax.transAxes)
    if threshold is not None:
        ax.axhline(threshold, color="#c44e52", ls="--", lw=1, label=f"threshold {threshold:g}")
        ax.legend(loc="lower right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("agreement score")
    fig.tight_layout()
    return _save(fig, path)


def plot_clarity(tables: list[dict], path, top: int = 8) -> Path:
    """Per-task horizontal bars of the highest per-label clarity values."""
    n = max(1, len(tables))
    fig, axes = plt.subplots(n, 1, figsize=(6, 1.2 + 1.6 * n), squeeze=False)
    for ax, rec in zip(axes[:, 0], tables or [{}]):
        items = sorted(rec.get("per_label_clarity", {}).items(), key=lambda kv: (-kv[1], kv[0]))[:top]
        if not items:
            ax.text(0.5, 0.5, "no labels", ha="center", va="center", transform=ax.transAxes)
            ax.set_axis_off()
            continue
        labels, values = zip(*items)
        y = np.arange(len(labels))
        ax.barh(y, values, color="#55a868")
        ax.set_yticks(y, labels, fontsize=8)
        ax.invert_yaxis()
        ax.set_xlim(0, 1)
        ax.set_title(rec.get("task_id", ""), fontsize=9)
    axes[-1, 0].set_xlabel("clarity")
    fig.tight_layout()
    return _save(fig, path)


def plot_metrics(folds: list[dict], path) -> Path:
    """Grouped bars of accuracy / precision / recall / F1 for each CV fold."""
    keys = ("accuracy", "precision", "recall", "f1")
    fig, ax = plt.subplots(figsize=(6, 3.5))
    width = 0.8 / len(keys)
    x = np.arange(len(folds))
    for k, key in enumerate(keys):
        ax.bar(x + (k - 1.5) * width, [f[key] for f in folds], width, label=key)
    ax.set_xticks(x, [f"fold {f['fold']}" for f in folds])
    ax.set_ylim(0, 1.05)
    ax.legend(loc="lower right", fontsize=8, ncol=2)
    fig.tight_layout()
    return _save(fig, path)
