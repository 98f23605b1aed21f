"""Core study-level data types.

A :class:`Study` bundles the ordered view images of one radiology study with
its optional indication text, optional vital signs and a masked label vector.
All containers are plain frozen-ish dataclasses over numpy arrays; they are
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

#: Studies with more images than this are rejected at ingestion.
MAX_STUDY_IMAGES = 11


class View(str, enum.Enum):
    FRONTAL = "frontal"
    LATERAL = "lateral"


class Gender(str, enum.Enum):
    F = "F"
    M = "M"
    UNKNOWN = "unknown"


class Split(str, enum.Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"
    UNLABELED_POOL = "unlabeled_pool"


class LabelKind(str, enum.Enum):
    HARD = "hard"
    SOFT_PSEUDO = "soft_pseudo"


@dataclass(frozen=True)
class ViewImage:
    """One radiograph: projection, pixels in [0, 1], and acquisition order."""

    view: View
    pixels: np.ndarray  # channels x H x W, float32
    acquisition_index: int

    def __post_init__(self) -> None:
        if self.pixels.ndim != 3:
            raise ValueError(f"pixels must be CxHxW, got shape {self.pixels.shape}")
        if self.acquisition_index < 0:
            raise ValueError("acquisition_index must be >= 0")
        if not np.isfinite(self.pixels).all():
            raise ValueError("pixel values must be finite")
        if self.pixels.min() < 0.0 or self.pixels.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")


_VITALS_FIELDS = (
    "temperature",
    "heart_rate",
    "respiratory_rate",
    "o2_saturation",
    "systolic_bp",
    "diastolic_bp",
)


@dataclass(frozen=True)
class VitalSigns:
    temperature: float | None = None
    heart_rate: float | None = None
    respiratory_rate: float | None = None
    o2_saturation: float | None = None
    systolic_bp: float | None = None
    diastolic_bp: float | None = None
    gender: Gender = Gender.UNKNOWN

    def __post_init__(self) -> None:
        for name in _VITALS_FIELDS:
            value = getattr(self, name)
            if value is None:
                continue
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be finite and > 0, got {value}")

    def numeric_fields(self) -> dict[str, float | None]:
        return {name: getattr(self, name) for name in _VITALS_FIELDS}


@dataclass(frozen=True)
class LabelVector:
    """Per-class targets in [0, 1] with a supervision mask.

    Entries with ``mask`` False are ignored by every loss and metric. For
    ``kind`` HARD, all masked-true values are exactly 0 or 1; SOFT_PSEUDO
    values are teacher probabilities.
    """

    values: np.ndarray  # (Q,) float32
    mask: np.ndarray    # (Q,) bool
    kind: LabelKind = LabelKind.HARD

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float32)
        mask = np.asarray(self.mask, dtype=bool)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        if values.ndim != 1 or mask.shape != values.shape:
            raise ValueError("values and mask must be 1-D arrays of equal length")
        if not np.isfinite(values).all():
            raise ValueError("label values must be finite")
        if values.min(initial=0.0) < 0.0 or values.max(initial=0.0) > 1.0:
            raise ValueError("label values must lie in [0, 1]")
        if self.kind is LabelKind.HARD:
            masked = values[mask]
            if masked.size and not np.isin(masked, (0.0, 1.0)).all():
                raise ValueError("hard labels must be 0/1 where masked")

    @property
    def num_classes(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class Study:
    study_id: str
    images: tuple[ViewImage, ...]
    labels: LabelVector
    indication: str | None = None
    vitals: VitalSigns | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "images", tuple(self.images))
        if len(self.images) < 1:
            raise ValueError(f"study {self.study_id}: at least one image required")
        if len(self.images) > MAX_STUDY_IMAGES:
            raise ValueError(
                f"study {self.study_id}: {len(self.images)} images exceeds the"
                f" ingestion bound of {MAX_STUDY_IMAGES}"
            )

    @property
    def num_images(self) -> int:
        return len(self.images)


@dataclass(frozen=True)
class Dataset:
    studies: tuple[Study, ...]
    label_names: tuple[str, ...]
    split: Split

    def __post_init__(self) -> None:
        object.__setattr__(self, "studies", tuple(self.studies))
        object.__setattr__(self, "label_names", tuple(self.label_names))
        q = len(self.label_names)
        for study in self.studies:
            if study.labels.num_classes != q:
                raise ValueError(
                    f"study {study.study_id}: {study.labels.num_classes} label entries,"
                    f" expected {q}"
                )

    def __len__(self) -> int:
        return len(self.studies)

    @property
    def num_classes(self) -> int:
        return len(self.label_names)


class ClassGroup(str, enum.Enum):
    HEAD = "head"
    BODY = "body"
    TAIL = "tail"


def group_for_prevalence(prevalence: float) -> ClassGroup:
    """Frequency group: head > 10%, body 1-10%, tail < 1%."""
    if prevalence > 0.10:
        return ClassGroup.HEAD
    if prevalence >= 0.01:
        return ClassGroup.BODY
    return ClassGroup.TAIL


@dataclass(frozen=True)
class PrevalenceTable:
    label_names: tuple[str, ...]
    prevalence: np.ndarray  # (Q,) float64 in [0, 1]
    groups: tuple[ClassGroup, ...] = field(default=())

    def __post_init__(self) -> None:
        prev = np.asarray(self.prevalence, dtype=np.float64)
        object.__setattr__(self, "prevalence", prev)
        object.__setattr__(self, "label_names", tuple(self.label_names))
        if prev.shape != (len(self.label_names),):
            raise ValueError("prevalence length must match label_names")
        if prev.min(initial=0.0) < 0.0 or prev.max(initial=0.0) > 1.0:
            raise ValueError("prevalence must lie in [0, 1]")
        if not self.groups:
            object.__setattr__(
                self, "groups", tuple(group_for_prevalence(p) for p in prev)
            )
        elif len(self.groups) != len(self.label_names):
            raise ValueError("groups length must match label_names")

    @property
    def num_classes(self) -> int:
        return len(self.label_names)


#: The 26-label thoracic pathology vocabulary used when Q == 26.
DEFAULT_LABEL_NAMES: tuple[str, ...] = (
    "Atelectasis",
    "Cardiomegaly",
    "Edema",
    "Lung Opacity",
    "No Finding",
    "Pleural Effusion",
    "Pneumonia",
    "Support Devices",
    "Calcification of the Aorta",
    "Consolidation",
    "Emphysema",
    "Enlarged Cardiomediastinum",
    "Fracture",
    "Hernia",
    "Infiltration",
    "Mass",
    "Nodule",
    "Pneumothorax",
    "Fibrosis",
    "Lung Lesion",
    "Pleural Other",
    "Pleural Thickening",
    "Pneumomediastinum",
    "Pneumoperitoneum",
    "Subcutaneous Emphysema",
    "Tortuous Aorta",
)
