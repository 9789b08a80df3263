# src/plots.py
"""
Figures written next to each stage's artifacts (PNG, Agg backend):

- feature comparison: Mel spectrogram vs MFCC for one chunk
- training curves: loss and accuracy per epoch, train vs validation
- confusion heatmap: the highest-support speakers
- group accuracy bars: per-gender and per-accent accuracy
"""
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402
import seaborn as sns  # noqa: E402

from .features_dsp import FeatureMatrix  # noqa: E402
from .log_utils import debug  # noqa: E402
from .metrics import ConfusionMatrix  # noqa: E402


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    debug(f"Figure written to {path}")
    return path


def plot_feature_comparison(mel: FeatureMatrix, mfcc: FeatureMatrix, path: str | Path, title: str = "") -> Path:
    fig, axes = plt.subplots(2, 1, figsize=(10, 7))
    for ax, m, label in ((axes[0], mel, "Mel spectrogram (log power)"), (axes[1], mfcc, "MFCC")):
        image = ax.imshow(m.values, origin="lower", aspect="auto", cmap="magma")
        ax.set_title(label)
        ax.set_xlabel("Frame")
        ax.set_ylabel("Band" if m.kind == "mel_spectrogram" else "Coefficient")
        fig.colorbar(image, ax=ax)
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_training_curves(history, path: str | Path, title: str = "") -> Path:
    df = pd.DataFrame([r.to_dict() for r in history])
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(12, 4.5))
    ax_loss.plot(df["epoch"], df["train_loss"], marker="o", label="train")
    ax_loss.plot(df["epoch"], df["val_loss"], marker="o", label="validation")
    ax_loss.set_title("Loss")
    ax_loss.set_xlabel("Epoch")
    ax_loss.legend()
    ax_acc.plot(df["epoch"], df["train_accuracy"], marker="o", label="train")
    ax_acc.plot(df["epoch"], df["val_accuracy"], marker="o", label="validation")
    ax_acc.set_title("Accuracy")
    ax_acc.set_xlabel("Epoch")
    ax_acc.set_ylim(0, 1.05)
    ax_acc.legend()
    for ax in (ax_loss, ax_acc):
        ax.grid(True, alpha=0.3)
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_confusion_heatmap(cm: ConfusionMatrix, path: str | Path, title: str = "Confusion matrix") -> Path:
    size = max(6, 0.45 * cm.num_classes + 3)
    fig, ax = plt.subplots(figsize=(size, size * 0.85))
    sns.heatmap(cm.to_frame(), annot=cm.num_classes <= 20, fmt="d", cmap="Blues", cbar=True, ax=ax)
    ax.set_xlabel("Predicted speaker")
    ax.set_ylabel("True speaker")
    ax.set_title(title)
    return _save(fig, path)


def plot_group_accuracy(bias: dict, path: str | Path) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(12, 4.5), gridspec_kw={"width_ratios": [1, 2]})
    for ax, grouping in zip(axes, ("gender", "accent")):
        report = bias[grouping]
        df = pd.DataFrame(
            {"group": report["ranking"], "accuracy": [report["per_group_accuracy"][g] for g in report["ranking"]]}
        )
        sns.barplot(data=df, x="group", y="accuracy", color="steelblue", ax=ax)
        ax.set_ylim(0, 1.05)
        ax.set_title(f"Accuracy by {grouping} (disparity {report['disparity']:.3f})")
        ax.set_xlabel(grouping.capitalize())
        ax.tick_params(axis="x", rotation=45)
    return _save(fig, path)
