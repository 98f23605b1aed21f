"""Token-sequence encoder for indication and vitals text."""

from __future__ import annotations

import torch
from torch import nn

from ..config import ModelConfig
from .transformer import TransformerStack


class TextEncoder(nn.Module):
    """Embeds token ids, adds learned positions, and self-attends.

    The first row of the output sequence (the CLS position) is the summary
    embedding handed to the spatial projection.
    """

    def __init__(self, config: ModelConfig, vocab_size: int):
        super().__init__()
        self.vocab_size = vocab_size
        self.max_tokens = config.max_text_tokens
        self.token_embedding = nn.Embedding(vocab_size, config.text_dim)
        self.position_embedding = nn.Parameter(
            torch.zeros(config.max_text_tokens, config.text_dim)
        )
        self.stack = TransformerStack(config.text_layers, config.text_dim, config.text_heads)
        self.out_norm = nn.LayerNorm(config.text_dim)

    def forward(self, token_ids: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns the full (n, d) sequence and the (d,) CLS embedding."""
        if token_ids.ndim != 1:
            raise ValueError("token_ids must be a 1-D tensor")
        n = token_ids.shape[0]
        if not (1 <= n <= self.max_tokens):
            raise ValueError(f"sequence length {n} outside [1, {self.max_tokens}]")
        if int(token_ids.max()) >= self.vocab_size or int(token_ids.min()) < 0:
            raise ValueError("token id outside vocabulary")
        x = self.token_embedding(token_ids) + self.position_embedding[:n]
        x = self.out_norm(self.stack(x[None]))[0]
        return x, x[0]
