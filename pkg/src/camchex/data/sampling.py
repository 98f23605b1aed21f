"""Per-study view subsampling under the image cap."""

from __future__ import annotations

import numpy as np

from .types import Study, View, ViewImage


def subsample_views(
    study: Study,
    cap: int,
    rng: np.random.Generator,
    stratify_by_view: bool = False,
) -> tuple[ViewImage, ...]:
    """Return at most ``cap`` of the study's images, preserving their order.

    Studies at or under the cap pass through unchanged. Larger studies are
    thinned by uniform sampling without replacement (the default), or with the
    per-view balance preserved as far as possible when ``stratify_by_view``
    is set. Deterministic for a given ``rng`` state.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    n = study.num_images
    if n <= cap:
        return study.images

    if stratify_by_view:
        chosen = _stratified_indices(study, cap, rng)
    else:
        chosen = rng.choice(n, size=cap, replace=False)
    return tuple(study.images[i] for i in sorted(int(i) for i in chosen))


def _stratified_indices(study: Study, cap: int, rng: np.random.Generator) -> list[int]:
    frontal = [i for i, img in enumerate(study.images) if img.view is View.FRONTAL]
    lateral = [i for i, img in enumerate(study.images) if img.view is View.LATERAL]
    # Proportional allocation, clamped to availability.
    n = len(frontal) + len(lateral)
    take_f = min(len(frontal), max(0, round(cap * len(frontal) / n)))
    take_l = min(len(lateral), cap - take_f)
    take_f = min(len(frontal), cap - take_l)
    picked: list[int] = []
    if take_f:
        picked.extend(frontal[i] for i in rng.choice(len(frontal), size=take_f, replace=False))
    if take_l:
        picked.extend(lateral[i] for i in rng.choice(len(lateral), size=take_l, replace=False))
    return picked
