"""Per-class prevalence and frequency grouping."""

from __future__ import annotations

import numpy as np

from .types import Dataset, PrevalenceTable


class PrevalenceError(ValueError):
    pass


def compute_prevalence(dataset: Dataset, positive_threshold: float = 0.5) -> PrevalenceTable:
    """Fraction of supervised entries per class that are positive.

    Only masked-true entries count; a class with no supervised entries has no
    defined prevalence and raises. Soft labels count as positive above
    ``positive_threshold``.
    """
    q = dataset.num_classes
    values = np.stack([s.labels.values for s in dataset.studies]) if len(dataset) else np.zeros((0, q))
    mask = np.stack([s.labels.mask for s in dataset.studies]) if len(dataset) else np.zeros((0, q), bool)

    supervised = mask.sum(axis=0)
    for c in range(q):
        if supervised[c] == 0:
            raise PrevalenceError(
                f"class {dataset.label_names[c]!r} has no supervised entries;"
                " prevalence undefined"
            )
    positives = ((values > positive_threshold) & mask).sum(axis=0)
    prevalence = positives / supervised
    return PrevalenceTable(label_names=dataset.label_names, prevalence=prevalence)
