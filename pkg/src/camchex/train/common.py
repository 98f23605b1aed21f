"""Shared training-loop machinery: logging rows, batching, quick metrics."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from ..config import TrainConfig
from ..data.prevalence import PrevalenceError, compute_prevalence
from ..data.types import Dataset
from ..losses import class_weights
from ..metrics import UndefinedMetricError, average_precision, auroc


class TrainingDiverged(RuntimeError):
    """Raised when the loss or logits stop being finite."""


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    split: str
    loss: float
    mAP: float | None
    macro_auroc: float | None
    lr: float


def write_training_log(path: str | Path, rows: list[EpochLog]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "split", "loss", "mAP", "macro_auroc", "lr"])
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else v) for k, v in asdict(row).items()})


def resolve_total_steps(cfg: TrainConfig, steps_per_epoch: int) -> int:
    if cfg.total_steps is not None:
        return cfg.total_steps
    return max(1, cfg.epochs * steps_per_epoch)


def build_optimizer(model: nn.Module, cfg: TrainConfig) -> torch.optim.AdamW:
    trainable = [p for p in model.parameters() if p.requires_grad]
    return torch.optim.AdamW(trainable, lr=0.0, weight_decay=cfg.weight_decay)


def set_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr


def resolve_class_weights(labeled: Dataset, cfg: TrainConfig) -> tuple[np.ndarray, str | None]:
    """Class weights per the configured scheme, falling back to uniform.

    Returns the weights and a warning message when the fallback fired.
    """
    if cfg.weight_scheme == "uniform":
        return np.ones(labeled.num_classes), None
    try:
        prevalence = compute_prevalence(labeled)
        return class_weights(prevalence, cfg.weight_scheme), None
    except (PrevalenceError, ValueError) as exc:
        return np.ones(labeled.num_classes), f"falling back to uniform class weights: {exc}"


def image_arrays(dataset: Dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flatten a dataset into per-image samples carrying their study's labels."""
    pixels, values, mask = [], [], []
    for study in dataset.studies:
        for image in study.images:
            pixels.append(image.pixels)
            values.append(study.labels.values)
            mask.append(study.labels.mask)
    return (
        np.stack(pixels),
        np.stack(values).astype(np.float32),
        np.stack(mask),
    )


def masked_mean_ap(scores: np.ndarray, values: np.ndarray, mask: np.ndarray) -> float | None:
    aps = []
    for c in range(scores.shape[1]):
        sel = mask[:, c]
        if not sel.any():
            continue
        try:
            aps.append(average_precision(scores[sel, c], values[sel, c] > 0.5))
        except UndefinedMetricError:
            continue
    return float(np.mean(aps)) if aps else None


def masked_macro_auroc(scores: np.ndarray, values: np.ndarray, mask: np.ndarray) -> float | None:
    out = []
    for c in range(scores.shape[1]):
        sel = mask[:, c]
        if not sel.any():
            continue
        try:
            out.append(auroc(scores[sel, c], values[sel, c] > 0.5))
        except UndefinedMetricError:
            continue
    return float(np.mean(out)) if out else None


def concat_datasets(a: Dataset, b: Dataset) -> Dataset:
    if a.label_names != b.label_names:
        raise ValueError("datasets disagree on label names")
    return Dataset(studies=a.studies + b.studies, label_names=a.label_names, split=a.split)


def parameter_fingerprint(model: nn.Module) -> str:
    """Stable hash of all parameter values, for snapshot-identity bookkeeping."""
    digest = hashlib.sha256()
    for name, param in sorted(model.named_parameters()):
        digest.update(name.encode())
        digest.update(param.detach().cpu().numpy().tobytes())
    return digest.hexdigest()
