"""Feature-block fusion: shared spatial reduction, token assembly, transformer.

Every feature block (one per image plus one per text modality) is reduced by
the same convolution, flattened to one token per spatial cell, and tagged
with a shared 2-D positional embedding and one of three segment embeddings
(image / indication / vitals). There is deliberately no per-image slot
embedding: a study's images form an unordered set, so the fused prediction
is invariant to their order.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from ..config import ModelConfig
from .transformer import TransformerStack

SEGMENT_IMAGE = 0
SEGMENT_INDICATION = 1
SEGMENT_VITALS = 2


@dataclass
class JointSequence:
    """Fusion-ready tokens plus per-token provenance."""

    tokens: torch.Tensor    # (T, C')
    slots: torch.Tensor     # (T,) block index within the sequence
    rows: torch.Tensor      # (T,) spatial row of the token's cell
    cols: torch.Tensor      # (T,) spatial column
    segments: torch.Tensor  # (T,) segment id

    @property
    def num_tokens(self) -> int:
        return int(self.tokens.shape[0])


class FusionModule(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        c = config.channels
        self.reduction_stride = config.reduction_stride
        self.size = config.fused_size
        self.max_tokens = config.max_fusion_tokens
        self.reduce_conv = nn.Conv2d(c, c, config.reduction_stride, stride=config.reduction_stride)
        self.positional = nn.Parameter(torch.zeros(self.size, self.size, c))
        self.segment = nn.Parameter(torch.zeros(3, c))
        self.stack = TransformerStack(config.fusion_layers, c, config.fusion_heads)

    def reduce(self, blocks: torch.Tensor) -> torch.Tensor:
        """Shared stride-r conv from (N, C', H', W') to (N, C', H'', W'')."""
        if blocks.ndim != 4:
            raise ValueError(f"expected (N, C', H', W') blocks, got {tuple(blocks.shape)}")
        if blocks.shape[-1] % self.reduction_stride or blocks.shape[-2] % self.reduction_stride:
            raise ValueError(
                f"spatial size {blocks.shape[-2]}x{blocks.shape[-1]} not divisible by"
                f" reduction stride {self.reduction_stride}"
            )
        return self.reduce_conv(blocks)

    def assemble(
        self,
        image_blocks: torch.Tensor | None,
        indication_block: torch.Tensor | None,
        vitals_block: torch.Tensor | None,
    ) -> JointSequence:
        """Concatenate blocks into one token sequence with position/segment tags.

        Block order is images (in study order), indication, vitals; blocks
        for disabled modalities are passed as None and simply absent. Each
        block contributes one token per spatial cell, flattened row-major.
        """
        pieces: list[tuple[torch.Tensor, int]] = []
        if image_blocks is not None and image_blocks.shape[0] > 0:
            pieces.extend((image_blocks[i : i + 1], SEGMENT_IMAGE) for i in range(image_blocks.shape[0]))
        if indication_block is not None:
            pieces.append((indication_block, SEGMENT_INDICATION))
        if vitals_block is not None:
            pieces.append((vitals_block, SEGMENT_VITALS))
        if not pieces:
            raise ValueError("no feature blocks to assemble")

        cells = self.size * self.size
        tokens, slots, rows, cols, segments = [], [], [], [], []
        row_idx, col_idx = torch.meshgrid(
            torch.arange(self.size), torch.arange(self.size), indexing="ij"
        )
        flat_pos = self.positional.reshape(cells, -1)
        for slot, (block, segment_id) in enumerate(pieces):
            if block.shape[-2:] != (self.size, self.size):
                raise ValueError(
                    f"block {slot}: spatial size {tuple(block.shape[-2:])} does not"
                    f" match the fused size {self.size}"
                )
            # (1, C', H'', W'') -> (H''*W'', C'), row-major over cells
            feats = block[0].permute(1, 2, 0).reshape(cells, -1)
            tokens.append(feats + flat_pos + self.segment[segment_id])
            slots.append(torch.full((cells,), slot, dtype=torch.long))
            rows.append(row_idx.reshape(-1))
            cols.append(col_idx.reshape(-1))
            segments.append(torch.full((cells,), segment_id, dtype=torch.long))

        return JointSequence(
            tokens=torch.cat(tokens),
            slots=torch.cat(slots),
            rows=torch.cat(rows),
            cols=torch.cat(cols),
            segments=torch.cat(segments),
        )

    def fuse(self, seq: JointSequence) -> torch.Tensor:
        """Run the joint sequence through the fusion transformer."""
        if seq.num_tokens > self.max_tokens:
            raise ValueError(
                f"sequence of {seq.num_tokens} tokens exceeds the maximum {self.max_tokens}"
            )
        return self.stack(seq.tokens[None])[0]
