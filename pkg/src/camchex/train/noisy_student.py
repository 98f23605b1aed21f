"""Iterative self-training: pseudo-label an unlabeled pool, train a student.

The teacher is first trained on the labeled set alone. Each iteration then
pseudo-labels the pool with the teacher's EMA weights, trains a fresh student
on labeled plus pseudo-labeled data under input noise, and promotes the
student to teacher. Classes already carrying hard labels in the pool keep
them; only the remaining classes receive soft teacher probabilities.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..config import ModelConfig, TrainConfig
from ..data.types import Dataset, LabelKind, LabelVector, Split, Study
from ..nn.model import ImageClassifier
from ..seeding import derive_seed
from .common import concat_datasets, parameter_fingerprint
from .stage1 import Stage1Result, train_stage1

log = logging.getLogger(__name__)


def pseudo_label(model: ImageClassifier, pool: Dataset) -> Dataset:
    """Soft-label a pool with a teacher; hard pool labels are kept bitwise.

    Study-level probabilities are the mean of the teacher's per-image
    sigmoids. The returned dataset is fully supervised (all-true masks) and
    ready to merge with labeled training data.
    """
    if pool.split is not Split.UNLABELED_POOL:
        raise ValueError(f"pseudo_label expects the unlabeled pool, got split {pool.split.value}")
    studies = []
    for study in pool.studies:
        pixels = np.stack([img.pixels for img in study.images])
        probs = model.predict_probs(pixels).mean(axis=0).astype(np.float32)
        values = np.where(study.labels.mask, study.labels.values, probs)
        labels = LabelVector(
            values=values,
            mask=np.ones_like(study.labels.mask),
            kind=LabelKind.SOFT_PSEUDO,
        )
        studies.append(
            Study(
                study_id=study.study_id,
                images=study.images,
                labels=labels,
                indication=study.indication,
                vitals=study.vitals,
            )
        )
    return Dataset(studies=tuple(studies), label_names=pool.label_names, split=Split.TRAIN)


@dataclass
class NoisyStudentResult:
    final: Stage1Result
    teacher_fingerprints: list[str]   # fingerprint of the teacher entering each iteration
    student_fingerprints: list[str]   # fingerprint of the student leaving each iteration
    samples_per_iteration: list[int]
    student_trainings: int


def student_seed(base_seed: int, iteration: int) -> int:
    return derive_seed(base_seed, "ns-student", iteration)


def teacher_seed(base_seed: int) -> int:
    return derive_seed(base_seed, "ns-teacher")


def noisy_student_loop(
    labeled: Dataset,
    pool: Dataset,
    cfg: TrainConfig,
    model_config: ModelConfig,
    val: Dataset | None = None,
) -> NoisyStudentResult:
    """Run the teacher training plus exactly ``cfg.ns_iterations`` student trainings."""
    from dataclasses import replace

    if len(pool) == 0:
        log.warning("unlabeled pool is empty; self-training degenerates to supervised training")

    teacher_cfg = replace(cfg, seed=teacher_seed(cfg.seed), noise=replace(cfg.noise, enabled=False))
    teacher = train_stage1(labeled, teacher_cfg, model_config, val=val)

    teacher_fps: list[str] = []
    student_fps: list[str] = []
    sizes: list[int] = []
    for iteration in range(cfg.ns_iterations):
        teacher_fps.append(parameter_fingerprint(teacher.ema_model()))
        if len(pool):
            merged = concat_datasets(labeled, pseudo_label(teacher.ema_model(), pool))
        else:
            merged = labeled
        sizes.append(len(merged))
        student_cfg = replace(
            cfg,
            seed=student_seed(cfg.seed, iteration),
            noise=replace(cfg.noise, enabled=True),
        )
        student = train_stage1(merged, student_cfg, model_config, val=val)
        student_fps.append(parameter_fingerprint(student.ema_model()))
        teacher = student

    return NoisyStudentResult(
        final=teacher,
        teacher_fingerprints=teacher_fps,
        student_fingerprints=student_fps,
        samples_per_iteration=sizes,
        student_trainings=cfg.ns_iterations,
    )
