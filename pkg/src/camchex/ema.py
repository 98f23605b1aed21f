"""Exponential moving average of model parameters.

The shadow follows ``shadow <- decay * shadow + (1 - decay) * param`` after
every optimizer step; evaluation and pseudo-labeling read from a copy of the
model carrying the shadow weights.
"""

from __future__ import annotations

import copy

import torch
from torch import nn


class EMA:
    def __init__(self, model: nn.Module, decay: float):
        if not 0.0 <= decay <= 1.0:
            raise ValueError("decay must lie in [0, 1]")
        self.decay = decay
        self.shadow: dict[str, torch.Tensor] = {
            name: param.detach().clone() for name, param in model.named_parameters()
        }

    @torch.no_grad()
    def update(self, model: nn.Module) -> None:
        for name, param in model.named_parameters():
            shadow = self.shadow.get(name)
            if shadow is None or shadow.shape != param.shape:
                raise ValueError(f"parameter {name!r} does not match the shadow copy")
            shadow.mul_(self.decay).add_(param.detach(), alpha=1.0 - self.decay)

    @torch.no_grad()
    def copy_to(self, model: nn.Module) -> None:
        for name, param in model.named_parameters():
            param.copy_(self.shadow[name])

    def shadow_model(self, model: nn.Module) -> nn.Module:
        """Deep copy of ``model`` carrying the shadow weights."""
        clone = copy.deepcopy(model)
        self.copy_to(clone)
        return clone
