"""Differentiable STFT twin of :mod:`pse.spectral` and phase reconstruction.

Uses the same framing convention (reflect pad ``n_fft // 2`` at the start,
minimal zero pad at the end, 50% overlap, periodic Hann) so spectrograms
computed here agree with the numpy pipeline to float precision.  The one
restriction is that reflect padding in torch requires the signal to be longer
than ``n_fft // 2`` samples.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import ValidationError
from ..spectral import StftConfig, frame_count


class TorchStft(nn.Module):
    """Batched, differentiable analysis/synthesis on the package framing."""

    def __init__(self, n_fft: int = 512, hop: int = 256) -> None:
        super().__init__()
        if n_fft != 2 * hop:
            raise ValidationError("framing assumes 50% overlap (n_fft == 2 * hop)")
        self.n_fft = n_fft
        self.hop = hop
        n = torch.arange(n_fft, dtype=torch.float64)
        window = 0.5 - 0.5 * torch.cos(2.0 * torch.pi * n / n_fft)
        # Derived constant, kept at full precision and out of the state dict.
        self.register_buffer("window", window, persistent=False)

    @property
    def _cfg(self) -> StftConfig:
        return StftConfig(frame_len=self.n_fft, hop=self.hop)

    def analyze(self, wave: torch.Tensor) -> torch.Tensor:
        """STFT of a batch of equal-length signals.

        Args:
            wave: (B, n) real tensor with n > n_fft // 2.

        Returns:
            Complex tensor of shape (B, T, n_fft // 2 + 1).
        """
        if wave.dim() != 2:
            raise ValidationError("expected a batched (B, n) signal")
        n = wave.shape[-1]
        pad_start = self.n_fft // 2
        if n <= pad_start:
            raise ValidationError(
                f"signal length {n} must exceed n_fft // 2 = {pad_start}"
            )
        T = frame_count(n, self._cfg)
        padded_len = (T - 1) * self.hop + self.n_fft
        pad_end = padded_len - pad_start - n
        x = F.pad(wave.unsqueeze(1), (pad_start, 0), mode="reflect")
        x = F.pad(x, (0, pad_end)).squeeze(1)
        frames = x.unfold(-1, self.n_fft, self.hop)
        return torch.fft.rfft(frames * self.window.to(frames.dtype), dim=-1)

    def synthesize(self, spec: torch.Tensor, out_len: int) -> torch.Tensor:
        """Windowed overlap-add inverse, normalized by the squared window.

        Args:
            spec: complex (B, T, n_fft // 2 + 1) tensor.
            out_len: output sample count; must not exceed T * hop.

        Returns:
            Real tensor of shape (B, out_len).
        """
        if spec.dim() != 3 or spec.shape[-1] != self.n_fft // 2 + 1:
            raise ValidationError(
                f"expected spectrogram of shape (B, T, {self.n_fft // 2 + 1})"
            )
        B, T, _ = spec.shape
        if out_len > T * self.hop:
            raise ValidationError(f"out_len {out_len} exceeds coverage {T * self.hop}")
        window = self.window.to(torch.real(spec).dtype)
        frames = torch.fft.irfft(spec, n=self.n_fft, dim=-1) * window

        padded_len = (T - 1) * self.hop + self.n_fft
        num = F.fold(
            frames.transpose(1, 2),
            output_size=(1, padded_len),
            kernel_size=(1, self.n_fft),
            stride=(1, self.hop),
        ).reshape(B, padded_len)
        with torch.no_grad():
            wsq = (window * window).reshape(1, -1, 1).expand(1, self.n_fft, T)
            den = F.fold(
                wsq,
                output_size=(1, padded_len),
                kernel_size=(1, self.n_fft),
                stride=(1, self.hop),
            ).reshape(1, padded_len)
        out = num / den.clamp_min(1e-12)
        pad_start = self.n_fft // 2
        return out[:, pad_start : pad_start + out_len]


def reconstruct_spectrum(
    mask: torch.Tensor,
    noisy_spec: torch.Tensor,
    phase_real: torch.Tensor,
    phase_imag: torch.Tensor,
    eps: float = 1e-12,
) -> torch.Tensor:
    """Torch counterpart of :func:`pse.spectral.reconstruct_spectrum`.

    The decoded phase pair is normalized to (nearly) unit length with an eps
    guard instead of atan2, which keeps the operation smooth everywhere.

    Returns:
        Complex tensor: mask * |noisy_spec| * normalized(phase pair).
    """
    mag = mask * noisy_spec.abs()
    norm = torch.sqrt(phase_real * phase_real + phase_imag * phase_imag + eps * eps)
    return torch.complex(mag * phase_real / norm, mag * phase_imag / norm)
