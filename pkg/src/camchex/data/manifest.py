"""Dataset manifests: JSON-lines studies with binary image sidecars.

Manifest line schema::

    {"study_id": str,
     "images": [{"view": "frontal"|"lateral", "path": str, "acq": int}, ...],
     "indication": str?,            # key absent when missing
     "vitals": {"temperature": num?, ..., "gender": "F"|"M"?}?,
     "labels": [num x Q],
     "mask": [bool x Q]}

Image paths are relative to the manifest's directory. Sidecars store raw
little-endian float32 pixels behind a ``CXR1`` magic and u32 C, H, W header,
which keeps the manifests themselves diffable.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .types import (
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

SIDECAR_MAGIC = b"CXR1"

_SPLIT_STEMS = {
    "train": Split.TRAIN,
    "val": Split.VAL,
    "test": Split.TEST,
    "pool": Split.UNLABELED_POOL,
    "unlabeled_pool": Split.UNLABELED_POOL,
}

LABEL_NAMES_FILE = "label_names.txt"


class ManifestError(ValueError):
    pass


def write_image_sidecar(path: str | Path, pixels: np.ndarray) -> None:
    pixels = np.ascontiguousarray(pixels, dtype="<f4")
    if pixels.ndim != 3:
        raise ManifestError(f"sidecar pixels must be CxHxW, got {pixels.shape}")
    c, h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(SIDECAR_MAGIC)
        fh.write(struct.pack("<III", c, h, w))
        fh.write(pixels.tobytes())


def read_image_sidecar(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != SIDECAR_MAGIC:
        raise ManifestError(f"{path}: bad sidecar magic {raw[:4]!r}")
    c, h, w = struct.unpack("<III", raw[4:16])
    expected = 16 + 4 * c * h * w
    if len(raw) != expected:
        raise ManifestError(f"{path}: expected {expected} bytes, found {len(raw)}")
    pixels = np.frombuffer(raw, dtype="<f4", offset=16).reshape(c, h, w)
    return np.ascontiguousarray(pixels, dtype=np.float32)


def _vitals_to_dict(vitals: VitalSigns) -> dict:
    out: dict = {}
    for name, value in vitals.numeric_fields().items():
        if value is not None:
            out[name] = float(value)
    if vitals.gender is not Gender.UNKNOWN:
        out["gender"] = vitals.gender.value
    return out


def _vitals_from_dict(raw: dict) -> VitalSigns:
    gender = Gender(raw["gender"]) if "gender" in raw else Gender.UNKNOWN
    return VitalSigns(
        temperature=raw.get("temperature"),
        heart_rate=raw.get("heart_rate"),
        respiratory_rate=raw.get("respiratory_rate"),
        o2_saturation=raw.get("o2_saturation"),
        systolic_bp=raw.get("systolic_bp"),
        diastolic_bp=raw.get("diastolic_bp"),
        gender=gender,
    )


def write_manifest(dataset: Dataset, path: str | Path, image_dir: str = "images") -> Path:
    """Write the manifest and all image sidecars; returns the manifest path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sidecar_dir = path.parent / image_dir
    sidecar_dir.mkdir(parents=True, exist_ok=True)

    lines = []
    for study in dataset.studies:
        images = []
        for i, image in enumerate(study.images):
            rel = f"{image_dir}/{study.study_id}_{i:02d}.cxr"
            write_image_sidecar(path.parent / rel, image.pixels)
            images.append(
                {"view": image.view.value, "path": rel, "acq": image.acquisition_index}
            )
        record: dict = {"study_id": study.study_id, "images": images}
        if study.indication is not None:
            record["indication"] = study.indication
        if study.vitals is not None:
            record["vitals"] = _vitals_to_dict(study.vitals)
        record["labels"] = [round(float(v), 8) for v in study.labels.values]
        record["mask"] = [bool(m) for m in study.labels.mask]
        if study.labels.kind is not LabelKind.HARD:
            record["label_kind"] = study.labels.kind.value
        lines.append(json.dumps(record))

    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    names_path = path.parent / LABEL_NAMES_FILE
    if not names_path.exists():
        names_path.write_text("\n".join(dataset.label_names) + "\n", encoding="utf-8")
    return path


def _parse_study(record: dict, manifest_dir: Path, q: int | None) -> Study:
    study_id = record["study_id"]
    images = []
    for img in record["images"]:
        try:
            view = View(img["view"])
        except ValueError:
            raise ManifestError(f"unknown view string {img['view']!r}") from None
        pixels = read_image_sidecar(manifest_dir / img["path"])
        images.append(ViewImage(view=view, pixels=pixels, acquisition_index=int(img["acq"])))

    labels = np.asarray(record["labels"], dtype=np.float32)
    mask = np.asarray(record["mask"], dtype=bool)
    if q is not None and labels.shape != (q,):
        raise ManifestError(
            f"study {study_id}: {labels.shape[0]} label entries, expected {q}"
        )
    kind = LabelKind(record.get("label_kind", "hard"))
    vitals = _vitals_from_dict(record["vitals"]) if "vitals" in record else None
    return Study(
        study_id=study_id,
        images=tuple(images),
        labels=LabelVector(values=labels, mask=mask, kind=kind),
        indication=record.get("indication"),
        vitals=vitals,
    )


def parse_manifest(
    path: str | Path,
    label_names: tuple[str, ...] | None = None,
    split: Split | None = None,
) -> Dataset:
    """Parse a JSON-lines manifest into a Dataset.

    Label names default to the sibling ``label_names.txt`` when present, else
    generic ``class_XX`` names. The split is inferred from the file stem when
    not given explicitly.
    """
    path = Path(path)
    if split is None:
        try:
            split = _SPLIT_STEMS[path.stem]
        except KeyError:
            raise ManifestError(
                f"cannot infer split from file name {path.name!r}; pass split="
            ) from None
    if label_names is None:
        names_path = path.parent / LABEL_NAMES_FILE
        if names_path.exists():
            label_names = tuple(names_path.read_text(encoding="utf-8").splitlines())

    studies: list[Study] = []
    seen_ids: set[str] = set()
    q = len(label_names) if label_names is not None else None
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            study = _parse_study(record, path.parent, q)
        except ManifestError as exc:
            raise ManifestError(f"{path.name}:{lineno}: {exc}") from None
        except (KeyError, ValueError, TypeError) as exc:
            raise ManifestError(f"{path.name}:{lineno}: malformed line ({exc})") from None
        if study.study_id in seen_ids:
            raise ManifestError(f"{path.name}:{lineno}: duplicate study_id {study.study_id!r}")
        seen_ids.add(study.study_id)
        if q is None:
            q = study.labels.num_classes
        studies.append(study)

    if label_names is None:
        label_names = tuple(f"class_{i:02d}" for i in range(q or 0))
    return Dataset(studies=tuple(studies), label_names=label_names, split=split)
