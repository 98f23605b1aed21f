"""Miniature convolutional image encoder with view-specific instances.

Three (by default) stride-2 stages of depthwise-separable blocks, each with a
per-position channel LayerNorm and a pointwise expansion, shrink an input of
``resolution`` pixels to ``resolution / 2**stages`` cells of ``channels``
features. All operations are per-position, so the encoder stays translation
covariant away from the borders. Frontal and lateral instances share the
architecture but never parameter storage.
"""

from __future__ import annotations

import torch
from torch import nn

from ..config import ModelConfig


class ChannelNorm(nn.Module):
    """LayerNorm over the channel dimension of an NCHW tensor, per position."""

    def __init__(self, channels: int, eps: float = 1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mean = x.mean(dim=1, keepdim=True)
        var = x.var(dim=1, keepdim=True, unbiased=False)
        x = (x - mean) / torch.sqrt(var + self.eps)
        return x * self.weight[:, None, None] + self.bias[:, None, None]


class ConvBlock(nn.Module):
    """Depthwise 3x3 + norm + pointwise expansion, with a residual."""

    def __init__(self, channels: int, expand: int = 2):
        super().__init__()
        self.depthwise = nn.Conv2d(channels, channels, 3, padding=1, groups=channels)
        self.norm = ChannelNorm(channels)
        self.pw_in = nn.Conv2d(channels, expand * channels, 1)
        self.act = nn.GELU()
        self.pw_out = nn.Conv2d(expand * channels, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.pw_out(self.act(self.pw_in(self.norm(self.depthwise(x)))))


class ImageEncoder(nn.Module):
    """Maps (m, C, H, W) images to (m, C', H', W') feature blocks.

    ``role`` records which instance this is (joint, frontal, lateral); it has
    no effect on the computation.
    """

    def __init__(self, config: ModelConfig, role: str = "joint"):
        super().__init__()
        self.resolution = config.resolution
        self.in_channels = config.in_channels
        self.role = role
        stages: list[nn.Module] = []
        prev = config.in_channels
        for width in config.stage_channels:
            stages.append(nn.Conv2d(prev, width, 2, stride=2))
            stages.append(ConvBlock(width))
            prev = width
        stages.append(ChannelNorm(prev))
        self.stages = nn.Sequential(*stages)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        if images.ndim != 4 or images.shape[1] != self.in_channels:
            raise ValueError(f"expected (m, {self.in_channels}, H, W), got {tuple(images.shape)}")
        if images.shape[-2:] != (self.resolution, self.resolution):
            raise ValueError(
                f"resolution mismatch: expected {self.resolution}x{self.resolution},"
                f" got {images.shape[-2]}x{images.shape[-1]}"
            )
        return self.stages(images)
