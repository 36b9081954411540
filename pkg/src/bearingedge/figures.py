"""Matplotlib renderers for training curves and the resource profile."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .model import Architecture, ResourceReport  # noqa: E402
from .training import AblationReport, TrainReport  # noqa: E402


def save_training_curves(report: TrainReport, path) -> Path:
    """Accuracy and loss per epoch, with the learning rate on a twin axis."""
    epochs = [r.epoch for r in report.records]
    fig, (ax_acc, ax_loss) = plt.subplots(1, 2, figsize=(10, 4))

    ax_acc.plot(epochs, [r.train_acc for r in report.records], label="train")
    ax_acc.plot(epochs, [r.val_acc for r in report.records], label="validation")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_acc.set_title(f"best val acc {report.best_val_accuracy:.4f} "
                     f"@ epoch {report.best_epoch}")
    ax_acc.legend()

    ax_loss.plot(epochs, [r.train_loss for r in report.records], label="train")
    ax_loss.plot(epochs, [r.val_loss for r in report.records], label="validation")
    ax_lr = ax_loss.twinx()
    ax_lr.plot(epochs, [r.lr for r in report.records], color="gray",
               linestyle=":", label="lr")
    ax_lr.set_ylabel("learning rate")
    ax_lr.set_yscale("log")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.legend()

    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_ablation_curves(report: AblationReport, path) -> Path:
    """Validation accuracy per epoch for the four activation/schedule runs."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for entry in report.entries:
        epochs = [r.epoch for r in entry.report.records]
        ax.plot(epochs, entry.report.val_accuracies(),
                label=f"{entry.name} (best {entry.report.best_val_accuracy:.3f})")
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation accuracy")
    ax.set_title("activation / schedule comparison")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_ram_profile(arch: Architecture, report: ResourceReport, path) -> Path:
    """Per-layer activation RAM bar chart with the ping-pong peak marked."""
    names = arch.layer_names()
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.bar(names, [b / 1024 for b in report.per_layer_ram_bytes])
    ax.axhline(report.peak_ram_bytes / 1024, color="red", linestyle="--",
               label=f"ping-pong peak {report.peak_ram_bytes / 1024:.1f} KB")
    ax.set_ylabel("activation RAM (KB)")
    ax.tick_params(axis="x", rotation=45)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
