"""Cosine-annealed learning rate with a linear warmup ramp."""

from __future__ import annotations

import math


def warmup_steps(total_steps: int, warmup_fraction: float = 0.05) -> int:
    return math.ceil(warmup_fraction * total_steps)


def lr_at(
    step: int,
    peak_lr: float,
    total_steps: int,
    warmup_fraction: float = 0.05,
) -> float:
    """Learning rate at an integer step in [0, total_steps].

    Ramps linearly from 0 to ``peak_lr`` over the first ceil(fraction*total)
    steps, then follows a half-cosine down to 0 at ``total_steps``.
    """
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    w = warmup_steps(total_steps, warmup_fraction)
    if step < w:
        return peak_lr * step / w
    span = total_steps - w
    if span == 0:
        return peak_lr
    return peak_lr * 0.5 * (1.0 + math.cos(math.pi * (step - w) / span))
