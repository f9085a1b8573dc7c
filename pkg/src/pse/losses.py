"""Training losses: multi-resolution spectral, log-spectral, focal VAD, GAN.

All waveform losses run ordinary centered STFTs (these need no causality);
magnitudes are floored at 1e-5 before logs so silence stays finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .errors import ValidationError

DEFAULT_RESOLUTIONS = ((1024, 512), (512, 256), (256, 128))
LOG_FLOOR = 1e-5


def _magnitudes(wave: torch.Tensor, n_fft: int, hop: int) -> torch.Tensor:
    window = torch.hann_window(n_fft, periodic=True, dtype=wave.dtype, device=wave.device)
    spec = torch.stft(
        wave, n_fft, hop_length=hop, window=window, center=True, return_complex=True
    )
    return spec.abs()  # (B, F, T)


class MultiResolutionStftLoss(nn.Module):
    """Average of spectral-convergence and log-magnitude terms per resolution.

    Per resolution: L_sc = ||X - X_hat||_F / ||X||_F and L_mag is the summed
    absolute floored-log difference divided by the total frame count, and the
    resolution loss is their mean.
    """

    def __init__(self, resolutions: tuple[tuple[int, int], ...] = DEFAULT_RESOLUTIONS):
        super().__init__()
        self.resolutions = tuple(resolutions)

    def forward(
        self, est: torch.Tensor, target: torch.Tensor
    ) -> tuple[torch.Tensor, dict[str, float]]:
        total = est.new_zeros(())
        parts: dict[str, float] = {}
        for n_fft, hop in self.resolutions:
            x = _magnitudes(target, n_fft, hop)
            x_hat = _magnitudes(est, n_fft, hop)
            sc = torch.linalg.norm(x - x_hat) / torch.linalg.norm(x)
            log_diff = torch.log(x.clamp_min(LOG_FLOOR)) - torch.log(
                x_hat.clamp_min(LOG_FLOOR)
            )
            n_frames = x.shape[0] * x.shape[-1]
            mag = log_diff.abs().sum() / n_frames
            total = total + 0.5 * (sc + mag)
            parts[f"sc_{n_fft}"] = float(sc.detach())
            parts[f"mag_{n_fft}"] = float(mag.detach())
        return total / len(self.resolutions), parts


class LogSpectralLoss(nn.Module):
    """Mean squared floored-log magnitude difference at one resolution.

    Serves as the default perceptual distance; swap in a learned or auditory
    model with the same (est, target) -> scalar signature if available.
    """

    def __init__(self, n_fft: int = 512, hop: int = 256) -> None:
        super().__init__()
        self.n_fft = n_fft
        self.hop = hop

    def forward(self, est: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
        x = _magnitudes(target, self.n_fft, self.hop).clamp_min(LOG_FLOOR)
        x_hat = _magnitudes(est, self.n_fft, self.hop).clamp_min(LOG_FLOOR)
        return ((torch.log(x) - torch.log(x_hat)) ** 2).mean()


class FocalVadLoss(nn.Module):
    """Focal binary cross-entropy on per-frame speech probabilities.

    With gamma = 0 this is plain BCE; larger gamma down-weights easy frames.
    Probabilities are clamped away from both ends for finite logs.
    """

    def __init__(self, gamma: float = 2.0, eps: float = 1e-7) -> None:
        super().__init__()
        self.gamma = gamma
        self.eps = eps

    def forward(self, probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        p = probs.clamp(self.eps, 1.0 - self.eps)
        p_t = torch.where(labels.bool(), p, 1.0 - p)
        return (-((1.0 - p_t) ** self.gamma) * torch.log(p_t)).mean()


@dataclass(frozen=True)
class LossWeights:
    adversarial: float = 0.5
    perceptual: float = 0.3
    spectral: float = 1.0
    focal: float = 0.3

    def __post_init__(self) -> None:
        for name in ("adversarial", "perceptual", "spectral", "focal"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValidationError(f"loss weight {name!r} must be >= 0, got {value}")


class GeneratorLoss(nn.Module):
    """Weighted sum of spectral, perceptual, focal-VAD and adversarial terms.

    The adversarial term drives the discriminator's score for the estimate
    toward 1 (the score of a perfect enhancement).
    """

    def __init__(
        self,
        weights: LossWeights = LossWeights(),
        resolutions: tuple[tuple[int, int], ...] = DEFAULT_RESOLUTIONS,
        perceptual: nn.Module | None = None,
    ) -> None:
        super().__init__()
        self.weights = weights
        self.spectral = MultiResolutionStftLoss(resolutions)
        self.perceptual = perceptual if perceptual is not None else LogSpectralLoss()
        self.focal = FocalVadLoss()

    def forward(
        self,
        est: torch.Tensor,
        target: torch.Tensor,
        vad_probs: torch.Tensor,
        vad_labels: torch.Tensor,
        disc_score: torch.Tensor | None = None,
    ) -> tuple[torch.Tensor, dict[str, float]]:
        w = self.weights
        spectral, _ = self.spectral(est, target)
        perceptual = self.perceptual(est, target)
        focal = self.focal(vad_probs, vad_labels)
        total = w.spectral * spectral + w.perceptual * perceptual + w.focal * focal
        breakdown = {
            "spectral": float(spectral.detach()),
            "perceptual": float(perceptual.detach()),
            "focal": float(focal.detach()),
        }
        if disc_score is not None:
            adversarial = ((disc_score - 1.0) ** 2).mean()
            total = total + w.adversarial * adversarial
            breakdown["adversarial"] = float(adversarial.detach())
        breakdown["total"] = float(total.detach())
        return total, breakdown


def discriminator_loss(
    score_clean: torch.Tensor, score_est: torch.Tensor, oracle: torch.Tensor
) -> torch.Tensor:
    """MSE toward 1 on (clean, clean) pairs and toward the oracle on estimates."""
    return ((score_clean - 1.0) ** 2).mean() + ((score_est - oracle) ** 2).mean()
