"""Weighted asymmetric loss and class-weight schemes.

Per class, with p = sigmoid(logit) and p_m = max(p - margin, 0):

    contribution = -w_c * [ y * (1-p)^g+ * log(p)
                            + (1-y) * p_m^g- * log(1 - p_m) ]

The positive branch is focal-style down-weighting of easy positives; the
negative branch additionally clamps probabilities below the margin to zero,
removing very easy negatives entirely. With both exponents and the margin at
zero and unit weights this is exactly masked binary cross-entropy. The loss
is the mean over masked class entries across the batch, so studies with few
supervised labels do not dominate.
"""

from __future__ import annotations

import numpy as np
import torch

from .config import ASLConfig
from .data.types import PrevalenceTable

_LOG_EPS = 1e-12


def asl_loss(
    logits: torch.Tensor,
    targets: torch.Tensor,
    mask: torch.Tensor,
    config: ASLConfig | None = None,
    weights: torch.Tensor | None = None,
) -> torch.Tensor:
    """Masked weighted asymmetric loss, averaged over supervised entries.

    ``logits``/``targets``/``mask`` are (B, Q) or (Q,); ``weights`` is (Q,).
    Raises on non-finite logits. Returns 0 when nothing is masked.
    """
    config = config if config is not None else ASLConfig()
    if not torch.isfinite(logits).all():
        raise ValueError("non-finite logits passed to the loss")
    if logits.shape != targets.shape or logits.shape != mask.shape:
        raise ValueError("logits, targets and mask must share a shape")

    p = torch.sigmoid(logits)
    y = targets.to(logits.dtype)
    pos_term = y * (1.0 - p).pow(config.gamma_pos) * torch.log(p.clamp_min(_LOG_EPS))
    p_m = (p - config.margin).clamp_min(0.0)
    neg_term = (1.0 - y) * p_m.pow(config.gamma_neg) * torch.log((1.0 - p_m).clamp_min(_LOG_EPS))
    per_entry = -(pos_term + neg_term)
    if weights is not None:
        per_entry = per_entry * weights.to(logits.dtype)

    mask = mask.to(logits.dtype)
    n_masked = mask.sum()
    if n_masked == 0:
        return logits.new_zeros(())
    return (per_entry * mask).sum() / n_masked


def class_weights(prevalence: PrevalenceTable, scheme: str = "inverse_prevalence") -> np.ndarray:
    """Per-class loss weights: all ones, or 1/prevalence normalized to mean 1."""
    q = prevalence.num_classes
    if scheme == "uniform":
        return np.ones(q, dtype=np.float64)
    if scheme == "inverse_prevalence":
        prev = prevalence.prevalence
        zero = np.flatnonzero(prev <= 0.0)
        if zero.size:
            names = ", ".join(prevalence.label_names[i] for i in zero)
            raise ValueError(f"zero prevalence for {names}; inverse weighting undefined")
        w = 1.0 / prev
        return w / w.mean()
    raise ValueError(f"unknown weighting scheme {scheme!r}")
