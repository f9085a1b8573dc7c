"""Spectrum encoder: frequency downsampling plus a causal dilated dense block."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig
from .norm import InstantLayerNorm2d


class DilatedDenseBlock(nn.Module):
    """Densely connected causal convolutions with doubling time dilation.

    Layer ``i`` consumes the concatenation of the block input and all earlier
    layer outputs, applies a (2, 3) kernel with time dilation ``2**i`` (left
    padded, so no lookahead) and symmetric frequency padding, and emits
    ``channels`` feature maps.  The final layer's output is the block output.
    """

    def __init__(self, channels: int, freq_bins: int, depth: int = 4) -> None:
        super().__init__()
        self.dilations = [2**i for i in range(depth)]
        self.convs = nn.ModuleList(
            nn.Conv2d(
                channels * (i + 1),
                channels,
                kernel_size=(2, 3),
                dilation=(d, 1),
                padding=(0, 1),
            )
            for i, d in enumerate(self.dilations)
        )
        self.norms = nn.ModuleList(
            InstantLayerNorm2d(channels, freq_bins) for _ in self.dilations
        )
        self.acts = nn.ModuleList(nn.PReLU(channels) for _ in self.dilations)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = [x]
        out = x
        for conv, norm, act, d in zip(self.convs, self.norms, self.acts, self.dilations):
            h = torch.cat(feats, dim=1) if len(feats) > 1 else x
            h = F.pad(h, (0, 0, d, 0))
            out = act(norm(conv(h)))
            feats.append(out)
        return out


class SpectrumEncoder(nn.Module):
    """Map (B, 2, T, n_bins) real/imag features to (B, C, T, F') latents."""

    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        c = cfg.channels
        blocks = []
        f = cfg.n_bins
        in_ch = 2
        for _ in range(cfg.n_down):
            f = (f - 1) // 2 + 1
            blocks.append(
                nn.Sequential(
                    nn.Conv2d(in_ch, c, kernel_size=(1, 3), stride=(1, 2), padding=(0, 1)),
                    InstantLayerNorm2d(c, f),
                    nn.PReLU(c),
                )
            )
            in_ch = c
        self.down = nn.Sequential(*blocks)
        self.dense = DilatedDenseBlock(c, cfg.f_reduced, cfg.dense_depth)

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        return self.dense(self.down(feats))
