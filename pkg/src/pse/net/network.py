"""The assembled audiogram-conditioned enhancement network."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from ..errors import ValidationError
from .audenc import AudiogramEncoder
from .config import ModelConfig
from .decoder import MaskDecoder, PhaseDecoder
from .encoder import SpectrumEncoder
from .fusion import FusionBlock
from .stft import TorchStft, reconstruct_spectrum
from .vadhead import VadHead


@dataclass
class EnhancerOutput:
    """Everything the training losses need from one forward pass."""

    noisy_spec: torch.Tensor  # complex (B, T, F)
    est_spec: torch.Tensor  # complex (B, T, F)
    mask: torch.Tensor  # (B, T, F), non-negative
    phase_real: torch.Tensor  # (B, T, F)
    phase_imag: torch.Tensor  # (B, T, F)
    vad_probs: torch.Tensor  # (B, T) in (0, 1)
    enhanced: torch.Tensor | None = None  # (B, n), set on waveform input


class Enhancer(nn.Module):
    """Joint denoising + hearing compensation conditioned on an audiogram.

    The noisy spectrogram is encoded, fused with the audiogram code through
    modulated Conformer blocks, and decoded into a magnitude mask plus a
    phase pair; a VAD head provides per-frame speech probabilities.
    """

    def __init__(self, cfg: ModelConfig | None = None) -> None:
        super().__init__()
        self.cfg = cfg if cfg is not None else ModelConfig()
        self.stft = TorchStft(self.cfg.n_fft, self.cfg.hop)
        self.spec_encoder = SpectrumEncoder(self.cfg)
        self.aud_encoder = AudiogramEncoder(self.cfg)
        self.fusion = nn.ModuleList(FusionBlock(self.cfg) for _ in range(self.cfg.n_blocks))
        self.mask_decoder = MaskDecoder(self.cfg)
        self.phase_decoder = PhaseDecoder(self.cfg)
        self.vad_head = VadHead(self.cfg)

    def forward_spec(self, spec: torch.Tensor, thresholds: torch.Tensor) -> EnhancerOutput:
        """Run on a precomputed complex spectrogram of shape (B, T, n_bins)."""
        if spec.dim() != 3 or spec.shape[-1] != self.cfg.n_bins:
            raise ValidationError(
                f"expected complex spectrogram of shape (B, T, {self.cfg.n_bins})"
            )
        feats = torch.stack((spec.real, spec.imag), dim=1)
        z = self.spec_encoder(feats)
        cond = self.aud_encoder(thresholds)
        for block in self.fusion:
            z = block(z, cond)
        mask = self.mask_decoder(z)
        phase_real, phase_imag = self.phase_decoder(z)
        vad_probs = self.vad_head(z)
        est_spec = reconstruct_spectrum(mask, spec, phase_real, phase_imag)
        return EnhancerOutput(
            noisy_spec=spec,
            est_spec=est_spec,
            mask=mask,
            phase_real=phase_real,
            phase_imag=phase_imag,
            vad_probs=vad_probs,
        )

    def forward(self, wave: torch.Tensor, thresholds: torch.Tensor) -> EnhancerOutput:
        """Enhance a batch of waveforms (B, n) for audiograms (B, 6)."""
        spec = self.stft.analyze(wave)
        out = self.forward_spec(spec, thresholds)
        out.enhanced = self.stft.synthesize(out.est_spec, wave.shape[-1])
        return out

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())
