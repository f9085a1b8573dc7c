"""Mask and phase decoders: dense refinement plus sub-pixel frequency upsampling."""

from __future__ import annotations

import torch
from einops import rearrange
from torch import nn

from .config import ModelConfig
from .encoder import DilatedDenseBlock
from .norm import InstantLayerNorm2d


class SubPixelStage(nn.Module):
    """Double the frequency axis: f -> 2f by channel shuffle, then 2f -> 2f - 1.

    A (1, 3) convolution doubles the channels, the factor is folded into the
    frequency axis, and a valid (1, 2) convolution trims the count to the odd
    bin count of the next resolution (65 -> 129 -> 257).
    """

    def __init__(self, channels: int, freq_in: int) -> None:
        super().__init__()
        self.expand = nn.Conv2d(channels, 2 * channels, kernel_size=(1, 3), padding=(0, 1))
        self.refine = nn.Conv2d(channels, channels, kernel_size=(1, 2))
        self.norm = InstantLayerNorm2d(channels, 2 * freq_in - 1)
        self.act = nn.PReLU(channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.expand(x)
        h = rearrange(h, "b (r c) t f -> b c t (f r)", r=2)
        return self.act(self.norm(self.refine(h)))


class _DecoderStem(nn.Module):
    """Shared decoder body: dense block, then sub-pixel stages back to n_bins."""

    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        c = cfg.channels
        self.dense = DilatedDenseBlock(c, cfg.f_reduced, cfg.dense_depth)
        stages = []
        f = cfg.f_reduced
        for _ in range(cfg.n_down):
            stages.append(SubPixelStage(c, f))
            f = 2 * f - 1
        assert f == cfg.n_bins
        self.up = nn.Sequential(*stages)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return self.up(self.dense(z))


class MaskDecoder(nn.Module):
    """Decode a non-negative magnitude mask of shape (B, T, n_bins)."""

    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.stem = _DecoderStem(cfg)
        self.head = nn.Conv2d(cfg.channels, 1, 1)
        self.act = nn.PReLU(1)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        h = self.act(self.head(self.stem(z)))
        return h.squeeze(1).clamp_min(0.0)


class PhaseDecoder(nn.Module):
    """Decode an unnormalized phase pair, each of shape (B, T, n_bins)."""

    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.stem = _DecoderStem(cfg)
        self.head = nn.Conv2d(cfg.channels, 2, 1)

    def forward(self, z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = self.head(self.stem(z))
        return h[:, 0], h[:, 1]
