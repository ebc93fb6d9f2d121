"""Matplotlib rendering for the report paths; figures always go to files."""

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def save_loss_curves(history, path: str | Path) -> Path:
    """Loss components and validation macro-F1 across epochs."""
    path = Path(path)
    epochs = [s.epoch for s in history]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    for key, label in (("l_total", "total"), ("l_cls", "classification"),
                       ("l_con", "contrastive"), ("l_val", "valence")):
        ax1.plot(epochs, [getattr(s, key) for s in history], label=label)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.legend(fontsize=8)
    ax2.plot(epochs, [s.val_macro_f1 for s in history], marker="o")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("val macro-F1")
    ax2.set_ylim(0, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_attention_heatmap(base: np.ndarray, modulated: np.ndarray,
                           path: str | Path, branch: str = "audio") -> Path:
    """Side-by-side pre-softmax score maps, base vs polarity-modulated."""
    path = Path(path)
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.5))
    vmin = min(base.min(), modulated.min())
    vmax = max(base.max(), modulated.max())
    for ax, mat, title in ((axes[0], base, "base scores"),
                           (axes[1], modulated, "modulated scores")):
        im = ax.imshow(mat, vmin=vmin, vmax=vmax, aspect="auto", cmap="viridis")
        ax.set_title(f"{branch}: {title}", fontsize=9)
        ax.set_xlabel("key position")
        ax.set_ylabel("text position")
    fig.colorbar(im, ax=axes, shrink=0.85)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_routing_figure(by_mode: dict[str, list[float]], path: str | Path) -> Path:
    """Mean micro-branch routing weight per planted conflict mode."""
    path = Path(path)
    modes = [m for m in ("modal", "contextual", "none") if by_mode.get(m)]
    means = [float(np.mean(by_mode[m])) for m in modes]
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.bar(modes, means, color=["#d95f02", "#7570b3", "#1b9e77"][:len(modes)])
    ax.set_ylabel("mean a_mic")
    ax.set_ylim(0, 1)
    for x, y in zip(modes, means):
        ax.text(x, y + 0.02, f"{y:.2f}", ha="center", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_cv_summary(fold_metrics, path: str | Path) -> Path:
    """Per-fold accuracy and macro-F1 bars."""
    path = Path(path)
    idx = np.arange(len(fold_metrics))
    width = 0.38
    fig, ax = plt.subplots(figsize=(5.5, 3.2))
    ax.bar(idx - width / 2, [m.accuracy for m in fold_metrics], width, label="accuracy")
    ax.bar(idx + width / 2, [m.macro_f1 for m in fold_metrics], width, label="macro-F1")
    ax.set_xticks(idx)
    ax.set_xticklabels([f"fold {i}" for i in idx])
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
