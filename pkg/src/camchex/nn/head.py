"""Query-based classification head.

One learned query per class cross-attends to the feature tokens, passes
through a small feed-forward block, and is projected to its class logit by a
per-class weight vector. Pooling happens entirely inside the cross-attention,
so the logits are invariant to any permutation of the input tokens.
"""

from __future__ import annotations

import torch
from torch import nn


class QueryDecoderHead(nn.Module):
    def __init__(self, channels: int, num_classes: int, heads: int = 4, ff_mult: int = 4):
        super().__init__()
        self.num_classes = num_classes
        self.queries = nn.Parameter(torch.zeros(num_classes, channels))
        self.kv_norm = nn.LayerNorm(channels)
        self.attn = nn.MultiheadAttention(channels, heads, batch_first=True)
        self.ff_norm = nn.LayerNorm(channels)
        self.ff = nn.Sequential(
            nn.Linear(channels, ff_mult * channels),
            nn.GELU(),
            nn.Linear(ff_mult * channels, channels),
        )
        self.out_norm = nn.LayerNorm(channels)
        self.per_class_weight = nn.Parameter(torch.zeros(num_classes, channels))
        self.per_class_bias = nn.Parameter(torch.zeros(num_classes))

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        """Decode (T, C') tokens, or a (B, T, C') batch, into class logits."""
        single = tokens.ndim == 2
        if single:
            tokens = tokens[None]
        if tokens.shape[1] < 1:
            raise ValueError("decode needs at least one token")
        kv = self.kv_norm(tokens)
        q = self.queries[None].expand(tokens.shape[0], -1, -1)
        h = q + self.attn(q, kv, kv, need_weights=False)[0]
        h = h + self.ff(self.ff_norm(h))
        logits = (self.out_norm(h) * self.per_class_weight).sum(-1) + self.per_class_bias
        return logits[0] if single else logits
