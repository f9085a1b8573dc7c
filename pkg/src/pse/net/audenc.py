"""Audiogram encoder: six thresholds to a per-frequency conditioning code."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from ..audiogram import AUDIOGRAM_FREQS_HZ, Audiogram, interpolate_thresholds
from ..errors import ValidationError
from .config import ModelConfig

HL_SCALE_DB = 120.0


def interp_matrix(n_bins: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Matrix W (n_bins, 6) with W @ thresholds == dense interpolated curve.

    Piecewise-linear interpolation with edge clamping is linear in the
    threshold vector, so the map is exactly a fixed matrix; its columns are
    the interpolations of the unit audiograms.
    """
    freqs = np.arange(n_bins) * sample_rate / n_fft
    cols = []
    for i in range(len(AUDIOGRAM_FREQS_HZ)):
        levels = [0.0] * len(AUDIOGRAM_FREQS_HZ)
        levels[i] = 1.0
        cols.append(interpolate_thresholds(Audiogram(tuple(levels)), freqs))
    return np.stack(cols, axis=1)


def dense_hl(thresholds: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    """Expand (B, 6) thresholds to (B, n_bins), scaled to roughly [0, 1]."""
    return thresholds @ weights.T / HL_SCALE_DB


class AudiogramEncoder(nn.Module):
    """Encode hearing thresholds into a (B, F', C) conditioning tensor.

    The thresholds are interpolated onto the analysis bins, lifted to four
    feature maps, downsampled along frequency in step with the spectrum
    encoder, and projected to the latent width.
    """

    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        w = interp_matrix(cfg.n_bins, cfg.n_fft, 16000)
        self.register_buffer(
            "interp", torch.tensor(w, dtype=torch.float64), persistent=False
        )
        self.lift = nn.Linear(cfg.n_bins, 4 * cfg.n_bins)
        blocks = []
        in_ch = 4
        for stage in range(cfg.n_down):
            out_ch = 16 if stage == 0 else 64
            blocks.append(
                nn.Sequential(
                    nn.Conv2d(in_ch, out_ch, kernel_size=(1, 3), stride=(1, 2), padding=(0, 1)),
                    nn.BatchNorm2d(out_ch),
                    nn.PReLU(out_ch),
                )
            )
            in_ch = out_ch
        self.down = nn.Sequential(*blocks)
        self.proj = nn.Linear(in_ch, cfg.channels)
        self.n_bins = cfg.n_bins

    def forward(self, thresholds: torch.Tensor) -> torch.Tensor:
        if thresholds.dim() != 2 or thresholds.shape[-1] != self.interp.shape[1]:
            raise ValidationError("expected (B, 6) audiogram thresholds")
        dense = dense_hl(thresholds.to(self.interp.dtype), self.interp)
        dense = dense.to(self.lift.weight.dtype)
        h = torch.nn.functional.gelu(self.lift(dense))
        h = h.reshape(dense.shape[0], 4, 1, self.n_bins)
        h = self.down(h)  # (B, 64, 1, F')
        h = h.squeeze(2).transpose(1, 2)  # (B, F', 64)
        return self.proj(h)
