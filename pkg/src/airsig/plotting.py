"""Figures written next to the text artifacts: ROC curves and training history."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "svg.hashsalt": "airsig",  # stable element ids across runs
})


def plot_roc(curves: dict, path, title: str = "Verification ROC") -> None:
    """`curves` maps a label to (far, frr, eer); axes are FAR vs 1 - FRR."""
    fig, ax = plt.subplots(figsize=(4.2, 4.0))
    for label, (far, frr, eer) in curves.items():
        far, frr = np.asarray(far), np.asarray(frr)
        ax.step(far, 1 - frr, where="post", label=f"{label} (EER {100 * eer:.2f}%)")
    ax.plot([0, 1], [1, 0], ls=":", lw=0.8, color="0.5")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.set_xlabel("false accept rate")
    ax.set_ylabel("true accept rate")
    ax.set_title(title)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def plot_history(history, path) -> None:
    epochs = [h["epoch"] for h in history]
    fig, ax = plt.subplots(figsize=(4.6, 3.0))
    ax.plot(epochs, [h["train_loss"] for h in history], color="C0", marker=".")
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss", color="C0")
    ax2 = ax.twinx()
    ax2.plot(epochs, [h["val_accuracy"] for h in history], color="C1", marker=".")
    ax2.set_ylabel("validation accuracy", color="C1")
    ax2.set_ylim(0, 1.05)
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)
