"""Frame-local normalization for (B, C, T, F) feature maps."""

from __future__ import annotations

import torch
from torch import nn


class InstantLayerNorm2d(nn.Module):
    """Layer norm over (channels, freq) computed independently per frame.

    Statistics never mix time steps, so the layer is safe inside causal
    stacks.  The affine parameters are elementwise over (channels, freq).
    """

    def __init__(self, channels: int, freq_bins: int, eps: float = 1e-5) -> None:
        super().__init__()
        self.eps = eps
        self.gamma = nn.Parameter(torch.ones(1, channels, 1, freq_bins))
        self.beta = nn.Parameter(torch.zeros(1, channels, 1, freq_bins))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        mean = x.mean(dim=(1, 3), keepdim=True)
        var = x.var(dim=(1, 3), keepdim=True, unbiased=False)
        return (x - mean) / torch.sqrt(var + self.eps) * self.gamma + self.beta
