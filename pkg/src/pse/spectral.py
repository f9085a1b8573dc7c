"""STFT analysis/synthesis and band-level operations shared by the DSP stages.

Framing convention: the signal is reflect-padded by ``frame_len // 2`` samples
at the start only, then zero-padded at the end just enough for the last frame
to cover the final sample.  Frame ``l`` therefore spans input samples
``[l * hop - frame_len // 2, l * hop + frame_len // 2)`` and never looks ahead
of ``l * hop + frame_len // 2``; a 5 s signal at 16 kHz yields 313 frames.
Synthesis uses windowed overlap-add normalized by the summed squared window,
which makes ``istft(stft(x))`` exact to float rounding over the whole signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ValidationError

SAMPLE_RATE = 16000
FRAME_LEN = 512
HOP = 256

# Six analysis bands; edges are the geometric means of the audiogram
# frequencies, the last band closes at 8 kHz (Nyquist).
BAND_EDGES_HZ = (0.0, 354.0, 707.0, 1414.0, 2828.0, 5657.0, 8000.0)
N_BANDS = len(BAND_EDGES_HZ) - 1

# Band power floor: -100 dB before calibration, so silence never hits log(0).
SPL_FLOOR_DB = -100.0
DEFAULT_CALIBRATION_DB = 100.0


@dataclass(frozen=True)
class StftConfig:
    sample_rate: int = SAMPLE_RATE
    frame_len: int = FRAME_LEN
    hop: int = HOP

    def __post_init__(self) -> None:
        if self.frame_len <= 0 or self.hop <= 0:
            raise ValidationError("frame_len and hop must be positive")
        if self.frame_len != 2 * self.hop:
            raise ValidationError("framing assumes 50% overlap (frame_len == 2 * hop)")

    @property
    def n_bins(self) -> int:
        return self.frame_len // 2 + 1

    @property
    def bin_hz(self) -> float:
        return self.sample_rate / self.frame_len


@lru_cache(maxsize=8)
def _window(frame_len: int) -> np.ndarray:
    # Periodic Hann; with hop = frame_len / 2 the analysis windows sum to 1.
    n = np.arange(frame_len, dtype=np.float64)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / frame_len)


def frame_count(n_samples: int, cfg: StftConfig = StftConfig()) -> int:
    """Number of frames produced for a signal of ``n_samples`` samples."""
    if n_samples < 2:
        raise ValidationError("signal must hold at least 2 samples")
    return 1 + max(0, math.ceil((n_samples - cfg.hop) / cfg.hop))


def frame_signal(x: np.ndarray, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Padded, un-windowed analysis frames of shape (T, frame_len)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError("expected a 1-D signal")
    if not np.all(np.isfinite(x)):
        raise ValidationError("signal must be finite")
    T = frame_count(len(x), cfg)
    pad_start = cfg.frame_len // 2
    padded_len = (T - 1) * cfg.hop + cfg.frame_len
    pad_end = padded_len - pad_start - len(x)
    padded = np.pad(x, (pad_start, 0), mode="reflect")
    if pad_end > 0:
        padded = np.concatenate([padded, np.zeros(pad_end)])
    stride = padded.strides[0]
    frames = np.lib.stride_tricks.as_strided(
        padded,
        shape=(T, cfg.frame_len),
        strides=(cfg.hop * stride, stride),
    )
    return np.ascontiguousarray(frames)


def stft(x: np.ndarray, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Short-time Fourier transform.

    Args:
        x: finite 1-D signal.
        cfg: framing configuration.

    Returns:
        Complex array of shape (T, frame_len // 2 + 1).
    """
    frames = frame_signal(x, cfg)
    return np.fft.rfft(frames * _window(cfg.frame_len), axis=-1)


def istft(spec: np.ndarray, out_len: int, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Windowed overlap-add synthesis.

    Args:
        spec: complex spectrogram of shape (T, frame_len // 2 + 1).
        out_len: number of output samples; must not exceed T * hop.
        cfg: framing configuration.

    Returns:
        Real signal of length ``out_len``.
    """
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[1] != cfg.n_bins:
        raise ValidationError(f"expected spectrogram of shape (T, {cfg.n_bins})")
    T = spec.shape[0]
    if out_len > T * cfg.hop:
        raise ValidationError(f"out_len {out_len} exceeds coverage {T * cfg.hop}")
    win = _window(cfg.frame_len)
    frames = np.fft.irfft(spec, n=cfg.frame_len, axis=-1) * win

    padded_len = (T - 1) * cfg.hop + cfg.frame_len
    num = np.zeros(padded_len)
    den = np.zeros(padded_len)
    wsq = np.broadcast_to(win * win, frames.shape)
    # With 50% overlap, even and odd frames are each non-overlapping runs,
    # so two reshaped adds cover the full overlap-add.
    for par in (0, 1):
        sel = frames[par::2]
        if len(sel) == 0:
            continue
        start = par * cfg.hop
        stop = start + sel.size
        num[start:stop] += sel.reshape(-1)
        den[start:stop] += wsq[par::2].reshape(-1)
    out = np.zeros(padded_len)
    nz = den > 1e-12
    out[nz] = num[nz] / den[nz]
    pad_start = cfg.frame_len // 2
    return out[pad_start : pad_start + out_len]


@lru_cache(maxsize=8)
def band_bin_ranges(cfg: StftConfig = StftConfig()) -> tuple[tuple[int, int], ...]:
    """Half-open bin ranges (lo, hi) per band, partitioning [0, n_bins)."""
    bounds = [0]
    for edge in BAND_EDGES_HZ[1:-1]:
        bounds.append(math.ceil(edge / cfg.bin_hz))
    bounds.append(cfg.n_bins)
    if any(b0 >= b1 for b0, b1 in zip(bounds, bounds[1:])):
        raise ValidationError("band plan leaves an empty band at this resolution")
    return tuple((bounds[i], bounds[i + 1]) for i in range(N_BANDS))


def band_center_freqs_hz() -> np.ndarray:
    """Audiogram frequencies, which sit one per band by construction."""
    return np.array([250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0])


def band_spl(
    spec: np.ndarray,
    cfg: StftConfig = StftConfig(),
    calibration_db: float = DEFAULT_CALIBRATION_DB,
) -> np.ndarray:
    """Per-frame, per-band sound pressure level estimate.

    Band power is the Parseval-normalized mean square of the band-limited
    signal within the frame, so a full-scale (RMS 1.0) signal reads
    ``calibration_db`` dB SPL.  Powers are floored at -100 dB before the
    calibration constant is added.

    Args:
        spec: complex spectrogram (T, n_bins).
        cfg: framing configuration.
        calibration_db: dB SPL assigned to digital RMS 1.0.

    Returns:
        Array of shape (T, 6) in dB SPL.
    """
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[1] != cfg.n_bins:
        raise ValidationError(f"expected spectrogram of shape (T, {cfg.n_bins})")
    win = _window(cfg.frame_len)
    norm = cfg.frame_len * float(np.sum(win * win))
    weights = np.full(cfg.n_bins, 2.0)
    weights[0] = 1.0
    weights[-1] = 1.0
    power = np.abs(spec) ** 2 * weights
    out = np.empty((spec.shape[0], N_BANDS))
    for b, (lo, hi) in enumerate(band_bin_ranges(cfg)):
        p = power[:, lo:hi].sum(axis=1) / norm
        out[:, b] = 10.0 * np.log10(np.maximum(p, 10.0 ** (SPL_FLOOR_DB / 10.0)))
    return out + calibration_db


def reconstruct_spectrum(
    mask: np.ndarray,
    noisy_spec: np.ndarray,
    phase_real: np.ndarray,
    phase_imag: np.ndarray,
) -> np.ndarray:
    """Combine a magnitude mask with a decoded phase pair.

    The output magnitude is ``mask * |noisy_spec|`` and the phase is
    ``atan2(phase_imag, phase_real)``; where both phase components are zero
    the phase is taken as zero.

    Returns:
        Complex spectrogram with the shape of ``noisy_spec``.
    """
    mask = np.asarray(mask, dtype=np.float64)
    noisy_spec = np.asarray(noisy_spec)
    if mask.shape != noisy_spec.shape:
        raise ValidationError("mask and spectrogram shapes differ")
    if np.any(mask < 0):
        raise ValidationError("mask must be non-negative")
    mag = mask * np.abs(noisy_spec)
    phi = np.arctan2(phase_imag, phase_real)
    return mag * np.exp(1j * phi)


def rms_db(x: np.ndarray) -> float:
    """RMS level in dBFS, floored at -100 dB."""
    x = np.asarray(x, dtype=np.float64)
    p = float(np.mean(x * x)) if x.size else 0.0
    return max(10.0 * np.log10(p) if p > 0 else -np.inf, SPL_FLOOR_DB)
