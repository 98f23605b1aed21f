"""Projection of text CLS embeddings into image-feature-shaped blocks.

A study that lacks a text modality contributes that modality's learned
placeholder block instead, keeping the fused sequence shape fixed; the
placeholders are ordinary parameters and receive gradients whenever they are
used.
"""

from __future__ import annotations

import torch
from torch import nn

from ..config import ModelConfig

TEXT_MODALITIES = ("indication", "vitals")


class TextToSpatial(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.channels = config.channels
        self.size = config.fused_size
        out_dim = config.channels * self.size * self.size
        self.proj = nn.Linear(config.text_dim, out_dim)
        self.placeholder_indication = nn.Parameter(torch.zeros(out_dim))
        self.placeholder_vitals = nn.Parameter(torch.zeros(out_dim))

    def _shape(self, flat: torch.Tensor) -> torch.Tensor:
        return flat.reshape(1, self.channels, self.size, self.size)

    def project(self, cls: torch.Tensor) -> torch.Tensor:
        """Linear map of a (d,) CLS vector to a (1, C', H'', W'') block."""
        if cls.ndim != 1 or cls.shape[0] != self.proj.in_features:
            raise ValueError(
                f"expected a ({self.proj.in_features},) CLS vector, got {tuple(cls.shape)}"
            )
        return self._shape(self.proj(cls))

    def placeholder(self, modality: str) -> torch.Tensor:
        if modality == "indication":
            return self._shape(self.placeholder_indication)
        if modality == "vitals":
            return self._shape(self.placeholder_vitals)
        raise ValueError(f"unknown text modality {modality!r}")
