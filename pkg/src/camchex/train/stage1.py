"""Image-level training: the stage-1 loop and view-specific fine-tuning.

Every image is an independent sample carrying its study's label vector. The
optimizer is AdamW under the warmup+cosine schedule, with an EMA shadow of
all parameters updated after each step; metrics are logged per epoch from the
EMA weights.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from ..config import ModelConfig, TrainConfig
from ..data.types import Dataset, Split, Study, View
from ..ema import EMA
from ..losses import asl_loss
from ..nn.model import ImageClassifier, build_image_classifier
from ..schedules import lr_at
from ..seeding import derive_seed, torch_rng
from .common import (
    EpochLog,
    TrainingDiverged,
    build_optimizer,
    image_arrays,
    masked_macro_auroc,
    masked_mean_ap,
    resolve_class_weights,
    resolve_total_steps,
    set_lr,
)

log = logging.getLogger(__name__)


@dataclass
class Stage1Result:
    model: ImageClassifier
    ema: EMA
    loss_trace: list[float]
    logs: list[EpochLog]
    steps: int

    def ema_model(self) -> ImageClassifier:
        return self.ema.shadow_model(self.model)


def _augment(
    pixels: torch.Tensor,
    hflip_prob: float,
    jitter: float,
    generator: torch.Generator,
) -> torch.Tensor:
    flip = torch.rand(pixels.shape[0], generator=generator) < hflip_prob
    if flip.any():
        pixels = pixels.clone()
        pixels[flip] = torch.flip(pixels[flip], dims=[-1])
    if jitter > 0.0:
        noise = torch.randn(pixels.shape, generator=generator, dtype=pixels.dtype)
        pixels = (pixels + jitter * noise).clamp(0.0, 1.0)
    return pixels


def _image_scores(model: ImageClassifier, pixels: np.ndarray, batch_size: int = 64) -> np.ndarray:
    chunks = [
        model.predict_probs(pixels[i : i + batch_size])
        for i in range(0, len(pixels), batch_size)
    ]
    return np.concatenate(chunks) if chunks else np.zeros((0, model.config.num_classes))


def train_stage1(
    labeled: Dataset,
    cfg: TrainConfig,
    model_config: ModelConfig,
    val: Dataset | None = None,
    init_model: ImageClassifier | None = None,
) -> Stage1Result:
    """Train an image-level classifier; returns live model plus EMA shadow."""
    pixels, values, mask = image_arrays(labeled)
    if not mask.any():
        raise ValueError("training dataset has no supervised label entries")
    n = len(pixels)
    steps_per_epoch = max(1, -(-n // cfg.batch_size))
    total_steps = resolve_total_steps(cfg, steps_per_epoch)

    if init_model is None:
        model = build_image_classifier(model_config, derive_seed(cfg.seed, "stage1-init"))
    else:
        model = copy.deepcopy(init_model)
    dtype = next(model.parameters()).dtype
    weights_np, warning = resolve_class_weights(labeled, cfg)
    if warning:
        log.warning(warning)
    weights = torch.from_numpy(weights_np).to(dtype)

    optimizer = build_optimizer(model, cfg)
    ema = EMA(model, cfg.ema_decay)
    values_t = torch.from_numpy(values).to(dtype)
    mask_t = torch.from_numpy(mask)

    loss_trace: list[float] = []
    logs: list[EpochLog] = []
    step = 0
    epoch = 0
    noise_gen = torch_rng(cfg.seed, "stage1-noise")
    while step < total_steps:
        order = torch.randperm(n, generator=torch_rng(cfg.seed, "stage1-shuffle", epoch))
        epoch_losses = []
        last_lr = 0.0
        for start in range(0, n, cfg.batch_size):
            if step >= total_steps:
                break
            idx = order[start : start + cfg.batch_size]
            batch = torch.from_numpy(pixels[idx.numpy()]).to(dtype)
            feature_dropout = 0.0
            if cfg.noise.enabled:
                batch = _augment(batch, cfg.noise.hflip_prob, cfg.noise.pixel_jitter, noise_gen)
                feature_dropout = cfg.noise.feature_dropout

            last_lr = lr_at(step, cfg.peak_lr, total_steps, cfg.warmup_fraction)
            set_lr(optimizer, last_lr)
            optimizer.zero_grad()
            try:
                logits = model(batch, feature_dropout=feature_dropout, generator=noise_gen)
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
            train_scores = _image_scores(eval_model, pixels)
            train_map = masked_mean_ap(train_scores, values, mask)
            logs.append(
                EpochLog(
                    epoch=epoch,
                    split="train",
                    loss=float(np.mean(epoch_losses)) if epoch_losses else float("nan"),
                    mAP=train_map,
                    macro_auroc=masked_macro_auroc(train_scores, values, mask),
                    lr=last_lr,
                )
            )
            if val is not None and len(val):
                v_pixels, v_values, v_mask = image_arrays(val)
                v_scores = _image_scores(eval_model, v_pixels)
                logs.append(
                    EpochLog(
                        epoch=epoch,
                        split="val",
                        loss=float("nan"),
                        mAP=masked_mean_ap(v_scores, v_values, v_mask),
                        macro_auroc=masked_macro_auroc(v_scores, v_values, v_mask),
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

    return Stage1Result(model=model, ema=ema, loss_trace=loss_trace, logs=logs, steps=step)


def filter_view(dataset: Dataset, view: View) -> Dataset:
    """Keep only the given view's images, dropping studies without any."""
    studies = []
    for study in dataset.studies:
        images = tuple(img for img in study.images if img.view is view)
        if images:
            studies.append(
                Study(
                    study_id=study.study_id,
                    images=images,
                    labels=study.labels,
                    indication=study.indication,
                    vitals=study.vitals,
                )
            )
    return Dataset(studies=tuple(studies), label_names=dataset.label_names, split=dataset.split)


def finetune_view_encoder(
    base: ImageClassifier,
    view_subset: Dataset,
    cfg: TrainConfig,
    model_config: ModelConfig,
    val: Dataset | None = None,
) -> Stage1Result:
    """Fine-tune a deep copy of ``base`` on a single view; ``base`` is untouched."""
    views = {img.view for study in view_subset.studies for img in study.images}
    if len(views) != 1:
        raise ValueError(f"view subset must contain exactly one view, found {sorted(v.value for v in views)}")
    view = views.pop()
    clone = copy.deepcopy(base)
    clone.encoder.role = view.value
    return train_stage1(view_subset, cfg, model_config, val=val, init_model=clone)
