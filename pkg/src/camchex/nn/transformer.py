"""Minimal pre-norm transformer encoder stack.

Written in-repo rather than with ``nn.TransformerEncoder`` so that a
zero-layer stack is a true identity (needed for the fusion identity
contract) and all parameters are visible to the explicit-generator init.
"""

from __future__ import annotations

import torch
from torch import nn


class TransformerLayer(nn.Module):
    def __init__(self, dim: int, heads: int, ff_mult: int = 4):
        super().__init__()
        self.attn_norm = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.ff_norm = nn.LayerNorm(dim)
        self.ff = nn.Sequential(
            nn.Linear(dim, ff_mult * dim),
            nn.GELU(),
            nn.Linear(ff_mult * dim, dim),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.attn_norm(x)
        x = x + self.attn(h, h, h, need_weights=False)[0]
        return x + self.ff(self.ff_norm(x))


class TransformerStack(nn.Module):
    """Self-attention encoder; with zero layers it returns its input unchanged."""

    def __init__(self, num_layers: int, dim: int, heads: int, ff_mult: int = 4):
        super().__init__()
        self.layers = nn.ModuleList(
            TransformerLayer(dim, heads, ff_mult) for _ in range(num_layers)
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer in self.layers:
            x = layer(x)
        return x
