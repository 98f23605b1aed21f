from .manifest import ManifestError, parse_manifest, read_image_sidecar, write_image_sidecar, write_manifest
from .prevalence import PrevalenceError, compute_prevalence
from .sampling import subsample_views
from .synthetic import SynthSpec, generate_synthetic
from .types import (
    DEFAULT_LABEL_NAMES,
    MAX_STUDY_IMAGES,
    ClassGroup,
    Dataset,
    Gender,
    LabelKind,
    LabelVector,
    PrevalenceTable,
    Split,
    Study,
    View,
    ViewImage,
    VitalSigns,
    group_for_prevalence,
)
from .vitals import render_vitals_text
from .vocab import CLS_ID, UNK_ID, Vocabulary, split_words, vocabulary_from_datasets

__all__ = [
    "CLS_ID",
    "UNK_ID",
    "DEFAULT_LABEL_NAMES",
    "MAX_STUDY_IMAGES",
    "ClassGroup",
    "Dataset",
    "Gender",
    "LabelKind",
    "LabelVector",
    "ManifestError",
    "PrevalenceError",
    "PrevalenceTable",
    "Split",
    "Study",
    "SynthSpec",
    "View",
    "ViewImage",
    "VitalSigns",
    "Vocabulary",
    "compute_prevalence",
    "generate_synthetic",
    "group_for_prevalence",
    "parse_manifest",
    "read_image_sidecar",
    "render_vitals_text",
    "split_words",
    "subsample_views",
    "vocabulary_from_datasets",
    "write_image_sidecar",
    "write_manifest",
]
