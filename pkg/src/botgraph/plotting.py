"""Matplotlib figures for evaluation reports.

Figures are written with a fixed SVG hash salt and no date stamp so the same
data always produces byte-identical files.
"""

import json

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "svg.hashsalt": "botgraph",
    "svg.fonttype": "none",
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.titlesize": 11,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def figsize(width=4.5, ratio=GOLDEN):
    return (width, width * ratio)


def _save(fig, path, config=None):
    meta = {"Date": None, "Creator": "botgraph"}
    if config is not None:
        meta["Description"] = json.dumps(config, sort_keys=True, default=str)
    fig.savefig(path, format="svg", metadata=meta, bbox_inches="tight")
    plt.close(fig)


def plot_roc(curve, path, title="ROC", youden=True, config=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(4.0, 1.0))
        ax.plot([0, 1], [0, 1], ls="--", lw=0.8, color="0.6", label="chance")
        ax.step(curve.fpr, curve.tpr, where="post", lw=0.6, color="0.4", alpha=0.6)
        ax.plot(curve.fpr, curve.tpr, lw=1.5, color="C0", label=f"AUROC = {curve.auroc:.3f}")
        if youden:
            _, k = curve.youden()
            ax.plot(curve.fpr[k], curve.tpr[k], "o", color="C3", ms=5, label="Youden J max")
        ax.set_xlim(-0.01, 1.01)
        ax.set_ylim(-0.01, 1.01)
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
        ax.set_title(title)
        ax.legend(loc="lower right", frameon=False)
        _save(fig, path, config)


def plot_auroc_matrix(matrix, names, path, averages=None, config=None):
    """Heatmap indexed [test, train] with an optional per-test average column."""
    data = np.asarray(matrix, dtype=float)
    cols = list(names)
    if averages is not None:
        data = np.column_stack([data, averages])
        cols = cols + ["Avg"]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(1.0 + 0.8 * len(cols), 0.8 + 0.6 * len(names)))
        im = ax.imshow(data, vmin=0.5, vmax=1.0, cmap="viridis", aspect="auto")
        for i in range(data.shape[0]):
            for j in range(data.shape[1]):
                v = data[i, j]
                txt = "n/a" if not np.isfinite(v) else f"{v:.2f}"
                ax.text(j, i, txt, ha="center", va="center", color="w" if v < 0.8 else "k", fontsize=8)
        ax.set_xticks(range(len(cols)), cols)
        ax.set_yticks(range(len(names)), names)
        ax.set_xlabel("train collection")
        ax.set_ylabel("test collection")
        fig.colorbar(im, ax=ax, label="AUROC")
        _save(fig, path, config)


def plot_loss_history(history, path, title="training loss", config=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        ax.plot(np.arange(1, len(history) + 1), history, lw=1.2)
        ax.set_xlabel("epoch")
        ax.set_ylabel("weighted MSE")
        ax.set_yscale("log")
        ax.set_title(title)
        _save(fig, path, config)
