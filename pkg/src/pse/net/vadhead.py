"""Recurrent voice-activity head on the fused latent."""

from __future__ import annotations

import torch
from torch import nn

from .config import ModelConfig


class VadHead(nn.Module):
    """Per-frame speech probabilities from the (B, C, T, F') latent.

    Frequency is mean-pooled, a pointwise convolution mixes channels, and a
    GRU integrates over time (causally) before the sigmoid readout.
    """

    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        c = cfg.channels
        self.mix = nn.Conv1d(c, c, 1)
        self.act = nn.PReLU(c)
        self.norm = nn.LayerNorm(c)
        self.gru = nn.GRU(c, cfg.vad_hidden, batch_first=True)
        self.readout = nn.Linear(cfg.vad_hidden, 1)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        h = z.mean(dim=3)  # (B, C, T)
        h = self.act(self.mix(h)).transpose(1, 2)  # (B, T, C)
        h = self.norm(h)
        h, _ = self.gru(h)
        return torch.sigmoid(self.readout(h)).squeeze(-1)
