"""Study-level training of the full multimodal classifier.

Each batch holds whole studies with variable image counts; views above the
cap are re-subsampled every epoch, while evaluation always subsamples with a
fixed seed. Missing text modalities route through the learned placeholder
blocks. Modality flags reproduce the ablation rows (single-view, text-only,
multi-view, and combinations) structurally.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from ..config import AblationFlags, ModelConfig, TrainConfig
from ..data.types import Dataset, Split
from ..data.vocab import Vocabulary
from ..ema import EMA
from ..losses import asl_loss
from ..nn.image_encoder import ImageEncoder
from ..nn.model import StudyClassifier, build_study_classifier, select_images, study_to_sample
from ..schedules import lr_at
from ..seeding import derive_seed, np_rng, torch_rng
from .common import (
    EpochLog,
    TrainingDiverged,
    build_optimizer,
    masked_macro_auroc,
    masked_mean_ap,
    resolve_class_weights,
    resolve_total_steps,
    set_lr,
)

log = logging.getLogger(__name__)


@dataclass
class Stage2Result:
    model: StudyClassifier
    ema: EMA
    loss_trace: list[float]
    logs: list[EpochLog]
    steps: int

    def ema_model(self) -> StudyClassifier:
        return self.ema.shadow_model(self.model)


def _load_encoder(target: ImageEncoder, source: ImageEncoder) -> None:
    target.load_state_dict(source.state_dict())


def _dataset_metrics(
    model: StudyClassifier,
    dataset: Dataset,
    vocab: Vocabulary,
    cap: int,
    seed: int,
) -> tuple[float | None, float | None]:
    _, scores = model.predict_dataset(dataset, vocab, seed, cap=cap)
    values = np.stack([s.labels.values for s in dataset.studies])
    mask = np.stack([s.labels.mask for s in dataset.studies])
    return (
        masked_mean_ap(scores, values, mask),
        masked_macro_auroc(scores, values, mask),
    )


def train_stage2(
    datasets: dict[Split, Dataset],
    cfg: TrainConfig,
    model_config: ModelConfig,
    vocab: Vocabulary,
    ablation: AblationFlags | None = None,
    frontal_encoder: ImageEncoder | None = None,
    lateral_encoder: ImageEncoder | None = None,
) -> Stage2Result:
    """Train the study-level model, optionally from stage-1 view encoders.

    With no encoders given the image towers start fresh (ablation mode);
    ``cfg.stage2_freeze_encoders`` keeps provided towers fixed.
    """
    train_set = datasets[Split.TRAIN]
    val_set = datasets.get(Split.VAL)
    ablation = ablation if ablation is not None else AblationFlags()

    model = build_study_classifier(
        model_config, len(vocab), derive_seed(cfg.seed, "stage2-init"), ablation
    )
    if frontal_encoder is not None:
        _load_encoder(model.frontal_encoder, frontal_encoder)
    if lateral_encoder is not None:
        _load_encoder(model.lateral_encoder, lateral_encoder)
    if cfg.stage2_freeze_encoders:
        for encoder in (model.frontal_encoder, model.lateral_encoder):
            for p in encoder.parameters():
                p.requires_grad_(False)

    dtype = next(model.parameters()).dtype
    weights_np, warning = resolve_class_weights(train_set, cfg)
    if warning:
        log.warning(warning)
    weights = torch.from_numpy(weights_np).to(dtype)

    n = len(train_set)
    steps_per_epoch = max(1, -(-n // cfg.batch_size))
    total_steps = resolve_total_steps(cfg, steps_per_epoch)
    optimizer = build_optimizer(model, cfg)
    ema = EMA(model, cfg.ema_decay)

    values_t = torch.from_numpy(
        np.stack([s.labels.values for s in train_set.studies])
    ).to(dtype)
    mask_t = torch.from_numpy(np.stack([s.labels.mask for s in train_set.studies]))

    loss_trace: list[float] = []
    logs: list[EpochLog] = []
    step = 0
    epoch = 0
    while step < total_steps:
        view_rng = np_rng(cfg.seed, "stage2-views", epoch)
        samples = [
            study_to_sample(
                study,
                select_images(study, ablation, cfg.view_cap, view_rng),
                vocab,
                model_config,
                ablation,
                dtype,
            )
            for study in train_set.studies
        ]
        order = torch.randperm(n, generator=torch_rng(cfg.seed, "stage2-shuffle", epoch))
        epoch_losses = []
        last_lr = 0.0
        for start in range(0, n, cfg.batch_size):
            if step >= total_steps:
                break
            idx = order[start : start + cfg.batch_size].tolist()
            last_lr = lr_at(step, cfg.peak_lr, total_steps, cfg.warmup_fraction)
            set_lr(optimizer, last_lr)
            optimizer.zero_grad()
            try:
                logits = model.forward_batch([samples[i] for i in idx])
                loss = asl_loss(logits, values_t[idx], mask_t[idx], cfg.asl, weights)
            except ValueError as exc:
                raise TrainingDiverged(f"step {step}: {exc}") from exc
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"step {step}: loss is {loss.item()}")
            loss.backward()
            optimizer.step()
            ema.update(model)
            loss_trace.append(float(loss))
            epoch_losses.append(float(loss))
            step += 1

        if epoch % cfg.log_every == 0 or step >= total_steps:
            eval_model = ema.shadow_model(model)
            train_map, train_auc = _dataset_metrics(
                eval_model, train_set, vocab, cfg.view_cap, cfg.seed
            )
            logs.append(
                EpochLog(
                    epoch=epoch,
                    split="train",
                    loss=float(np.mean(epoch_losses)) if epoch_losses else float("nan"),
                    mAP=train_map,
                    macro_auroc=train_auc,
                    lr=last_lr,
                )
            )
            if val_set is not None and len(val_set):
                val_map, val_auc = _dataset_metrics(
                    eval_model, val_set, vocab, cfg.view_cap, cfg.seed
                )
                logs.append(
                    EpochLog(
                        epoch=epoch,
                        split="val",
                        loss=float("nan"),
                        mAP=val_map,
                        macro_auroc=val_auc,
                        lr=last_lr,
                    )
                )
            if (
                cfg.stop_at_train_map is not None
                and train_map is not None
                and train_map >= cfg.stop_at_train_map
            ):
                break
        epoch += 1

    return Stage2Result(model=model, ema=ema, loss_trace=loss_trace, logs=logs, steps=step)
