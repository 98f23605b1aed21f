"""Synthetic study generator with planted, modality-exclusive signals.

Each class is routed to one signal channel: present image-signal classes
paint a bright Gaussian blob at a class-specific location (always in frontal
views, with configurable probability in lateral views); text-signal classes
inject a class-specific marker word into the indication; vitals-signal
classes shift one vitals field at least two standard deviations above its
baseline. ``multi`` routes a class through all three channels at once. With
exclusive routing, an ablated model that cannot see a channel cannot beat
chance on that channel's classes, which is what makes modality-contribution
ordering testable at desk scale.

Vitals baselines are drawn from a small symmetric grid around each field's
mean so their rendered numbers recur often enough to be learnable from a few
hundred studies.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..seeding import np_rng
from .types import (
    DEFAULT_LABEL_NAMES,
    Dataset,
    Gender,
    LabelKind,
    LabelVector,
    Split,
    Study,
    View,
    ViewImage,
    VitalSigns,
)

SIGNAL_KINDS = ("image", "text", "vitals", "multi")

_FILLER_WORDS = (
    "year", "old", "patient", "with", "history", "of", "chest", "pain",
    "cough", "fever", "shortness", "breath", "evaluation", "for", "acute",
    "process", "followup", "and", "mild", "status",
)

# (mean, sd) per numeric vitals field, in rendering order.
_VITALS_BASELINES = (
    ("temperature", 98.3, 0.7),
    ("heart_rate", 80.0, 12.0),
    ("respiratory_rate", 17.0, 3.0),
    ("o2_saturation", 96.0, 1.5),
    ("systolic_bp", 125.0, 15.0),
    ("diastolic_bp", 72.0, 10.0),
)

_BASELINE_GRID = (-2, -1, 0, 1, 2)     # times sd/2
_SHIFTED_GRID = (-2, -1, 0, 1, 2)      # times sd/4, on top of the shift


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int = 8
    prevalence: tuple[float, ...] = (0.3, 0.25, 0.2, 0.3, 0.25, 0.2, 0.15, 0.25)
    signals: tuple[str, ...] = ("image",) * 8
    label_names: tuple[str, ...] | None = None
    n_train: int = 128
    n_val: int = 64
    n_test: int = 64
    n_pool: int = 64
    resolution: int = 64
    image_count_probs: tuple[float, ...] = (0.55, 0.30, 0.10, 0.05)
    lateral_prob: float = 0.35
    lateral_blob_prob: float = 0.5
    lateral_only_classes: tuple[int, ...] = ()
    missing_indication_frac: float = 0.15
    missing_vitals_frac: float = 0.15
    pool_labeled_classes: tuple[int, ...] = ()
    noise_sigma: float = 0.03
    blob_amplitude: float = 0.55
    vitals_shift_sds: float = 2.5

    def __post_init__(self) -> None:
        q = self.num_classes
        if len(self.prevalence) != q or len(self.signals) != q:
            raise ValueError("prevalence and signals must have one entry per class")
        for p in self.prevalence:
            if not (0.0 < p < 1.0):
                raise ValueError(f"prevalence targets must lie in (0, 1), got {p}")
        for s in self.signals:
            if s not in SIGNAL_KINDS:
                raise ValueError(f"unknown signal kind {s!r}")
        if self.label_names is not None and len(self.label_names) != q:
            raise ValueError("label_names must have one entry per class")
        if abs(sum(self.image_count_probs) - 1.0) > 1e-9:
            raise ValueError("image_count_probs must sum to 1")
        if self.vitals_shift_sds < 2.0:
            raise ValueError("vitals_shift_sds must be >= 2")

    def resolved_label_names(self) -> tuple[str, ...]:
        if self.label_names is not None:
            return tuple(self.label_names)
        if self.num_classes == len(DEFAULT_LABEL_NAMES):
            return DEFAULT_LABEL_NAMES
        return tuple(f"class_{k:02d}" for k in range(self.num_classes))

    def marker_word(self, class_index: int) -> str:
        return f"marker{class_index:02d}"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "SynthSpec":
        raw = json.loads(text)
        for key in (
            "prevalence", "signals", "label_names", "image_count_probs",
            "lateral_only_classes", "pool_labeled_classes",
        ):
            if key in raw and raw[key] is not None:
                raw[key] = tuple(raw[key])
        return SynthSpec(**raw)

    @staticmethod
    def load(path: str | Path) -> "SynthSpec":
        return SynthSpec.from_json(Path(path).read_text())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")


def _blob_centers(q: int, resolution: int) -> np.ndarray:
    """Class-specific blob centers on a grid that avoids the image border."""
    g = math.ceil(math.sqrt(q))
    centers = np.empty((q, 2), dtype=np.float64)
    for k in range(q):
        gx, gy = k % g, k // g
        centers[k, 0] = (gx + 1) * resolution / (g + 1)
        centers[k, 1] = (gy + 1) * resolution / (g + 1)
    return centers


def _base_image(view: View, resolution: int) -> np.ndarray:
    """Low-contrast view-specific background."""
    ax = np.linspace(-1.0, 1.0, resolution)
    xx, yy = np.meshgrid(ax, ax)
    if view is View.FRONTAL:
        base = 0.40 - 0.15 * (xx**2 + yy**2)
    else:
        base = 0.30 + 0.10 * xx
    return base


def _paint_blob(pixels: np.ndarray, center: np.ndarray, sigma: float, amplitude: float) -> None:
    res = pixels.shape[-1]
    ax = np.arange(res, dtype=np.float64)
    gx = np.exp(-0.5 * ((ax - center[0]) / sigma) ** 2)
    gy = np.exp(-0.5 * ((ax - center[1]) / sigma) ** 2)
    pixels[0] += amplitude * np.outer(gy, gx)


def _draw_vitals(spec: SynthSpec, present_shift_classes: list[int], rng: np.random.Generator) -> VitalSigns:
    values: dict[str, float] = {}
    shifted_fields = {k % len(_VITALS_BASELINES) for k in present_shift_classes}
    for idx, (name, mean, sd) in enumerate(_VITALS_BASELINES):
        if idx in shifted_fields:
            z = _SHIFTED_GRID[rng.integers(len(_SHIFTED_GRID))]
            values[name] = mean + sd * spec.vitals_shift_sds + sd * z / 4.0
        else:
            z = _BASELINE_GRID[rng.integers(len(_BASELINE_GRID))]
            values[name] = mean + sd * z / 2.0
    gender = Gender.F if rng.random() < 0.5 else Gender.M
    return VitalSigns(gender=gender, **{k: round(v, 1) for k, v in values.items()})


def _draw_indication(spec: SynthSpec, present_text_classes: list[int], rng: np.random.Generator) -> str:
    n_filler = int(rng.integers(4, 8))
    words = [_FILLER_WORDS[rng.integers(len(_FILLER_WORDS))] for _ in range(n_filler)]
    for k in present_text_classes:
        words.insert(int(rng.integers(len(words) + 1)), spec.marker_word(k))
    return " ".join(words) + " ."


def _generate_split(spec: SynthSpec, split: Split, n: int, seed: int) -> Dataset:
    rng = np_rng(seed, "synth", split.value)
    q = spec.num_classes
    centers = _blob_centers(q, spec.resolution)
    sigma = spec.resolution / 16.0
    bases = {v: _base_image(v, spec.resolution) for v in View}
    counts = np.arange(1, len(spec.image_count_probs) + 1)

    image_classes = [k for k, s in enumerate(spec.signals) if s in ("image", "multi")]
    text_classes = [k for k, s in enumerate(spec.signals) if s in ("text", "multi")]
    vitals_classes = [k for k, s in enumerate(spec.signals) if s in ("vitals", "multi")]

    if split is Split.UNLABELED_POOL:
        mask = np.zeros(q, dtype=bool)
        mask[list(spec.pool_labeled_classes)] = True
    else:
        mask = np.ones(q, dtype=bool)

    studies = []
    for i in range(n):
        y = (rng.random(q) < np.asarray(spec.prevalence)).astype(np.float32)
        n_images = int(rng.choice(counts, p=spec.image_count_probs))
        views = [
            View.LATERAL if rng.random() < spec.lateral_prob else View.FRONTAL
            for _ in range(n_images)
        ]

        images = []
        for j, view in enumerate(views):
            pixels = np.empty((1, spec.resolution, spec.resolution), dtype=np.float64)
            pixels[0] = bases[view]
            for k in image_classes:
                if y[k] != 1.0:
                    continue
                if k in spec.lateral_only_classes:
                    plant = view is View.LATERAL
                elif view is View.FRONTAL:
                    plant = True
                else:
                    plant = rng.random() < spec.lateral_blob_prob
                if plant:
                    _paint_blob(pixels, centers[k], sigma, spec.blob_amplitude)
            pixels += rng.normal(0.0, spec.noise_sigma, size=pixels.shape)
            np.clip(pixels, 0.0, 1.0, out=pixels)
            images.append(
                ViewImage(view=view, pixels=pixels.astype(np.float32), acquisition_index=j)
            )

        indication: str | None = _draw_indication(spec, [k for k in text_classes if y[k]], rng)
        if rng.random() < spec.missing_indication_frac:
            indication = None
        vitals: VitalSigns | None = _draw_vitals(spec, [k for k in vitals_classes if y[k]], rng)
        if rng.random() < spec.missing_vitals_frac:
            vitals = None

        studies.append(
            Study(
                study_id=f"{split.value}-{i:05d}",
                images=tuple(images),
                labels=LabelVector(values=y, mask=mask.copy(), kind=LabelKind.HARD),
                indication=indication,
                vitals=vitals,
            )
        )
    return Dataset(studies=tuple(studies), label_names=spec.resolved_label_names(), split=split)


def generate_synthetic(spec: SynthSpec, seed: int) -> dict[Split, Dataset]:
    """Generate the four standard splits; equal seeds give bit-identical data."""
    sizes = {
        Split.TRAIN: spec.n_train,
        Split.VAL: spec.n_val,
        Split.TEST: spec.n_test,
        Split.UNLABELED_POOL: spec.n_pool,
    }
    return {split: _generate_split(spec, split, n, seed) for split, n in sizes.items()}
