"""Metric-predicting discriminator scoring (clean, estimate, audiogram) triples."""

from __future__ import annotations

import torch
from torch import nn

from ..errors import ValidationError
from .audenc import HL_SCALE_DB, interp_matrix
from .config import ModelConfig


class Discriminator(nn.Module):
    """Predict a quality score in [0, 1] for an enhanced spectrogram.

    Input channels: clean magnitude, estimate magnitude, and the audiogram
    interpolated across the analysis bins (scaled to about [0, 1]) so the
    score can depend on the listener.
    """

    def __init__(self, cfg: ModelConfig | None = None) -> None:
        super().__init__()
        self.cfg = cfg if cfg is not None else ModelConfig()
        w = interp_matrix(self.cfg.n_bins, self.cfg.n_fft, 16000)
        self.register_buffer(
            "interp", torch.tensor(w, dtype=torch.float64), persistent=False
        )
        widths = (16, 32, 64, 128)
        blocks = []
        in_ch = 3
        for width in widths:
            blocks.append(
                nn.Sequential(
                    nn.Conv2d(in_ch, width, 3, stride=2, padding=1),
                    nn.InstanceNorm2d(width),
                    nn.PReLU(width),
                )
            )
            in_ch = width
        self.blocks = nn.Sequential(*blocks)
        self.judge = nn.Sequential(
            nn.Linear(widths[-1], 64), nn.PReLU(64), nn.Linear(64, 1), nn.Sigmoid()
        )

    def forward(
        self,
        clean_spec: torch.Tensor,
        est_spec: torch.Tensor,
        thresholds: torch.Tensor,
    ) -> torch.Tensor:
        """Args: complex (B, T, F) spectrograms and (B, 6) thresholds.

        Returns:
            (B,) scores in [0, 1].
        """
        if clean_spec.shape != est_spec.shape or clean_spec.dim() != 3:
            raise ValidationError("clean and estimate spectrograms must match (B, T, F)")
        B, T, Fb = clean_spec.shape
        mag_clean = clean_spec.abs().unsqueeze(1)
        dense = (thresholds.to(self.interp.dtype) @ self.interp.T) / HL_SCALE_DB
        hl_map = dense.to(mag_clean.dtype).reshape(B, 1, 1, Fb).expand(B, 1, T, Fb)
        x = torch.cat((mag_clean, est_spec.abs().unsqueeze(1), hl_map), dim=1)
        h = self.blocks(x)
        h = h.mean(dim=(2, 3))
        return self.judge(h).squeeze(-1)
