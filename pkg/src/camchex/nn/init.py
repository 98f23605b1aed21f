"""Explicit-generator weight initialization.

All randomness during model construction flows through a passed-in torch
Generator so builds are reproducible independent of global RNG state.
Embedding-like tables (token/positional/segment/query/placeholder) get a
small fixed scale; weight matrices get fan-in scaling; biases start at zero
and normalization scales at one.
"""

from __future__ import annotations

import torch
from torch import nn

_TABLE_KEYWORDS = ("embedding", "positional", "segment", "queries", "placeholder")
_TABLE_STD = 0.02


def init_parameters(module: nn.Module, generator: torch.Generator) -> None:
    for name, param in module.named_parameters():
        with torch.no_grad():
            if any(key in name for key in _TABLE_KEYWORDS):
                param.normal_(0.0, _TABLE_STD, generator=generator)
            elif param.ndim >= 2:
                fan_in = param.numel() // param.shape[0]
                param.normal_(0.0, fan_in**-0.5, generator=generator)
            elif "bias" in name:
                param.zero_()
            else:  # normalization scales
                param.fill_(1.0)
