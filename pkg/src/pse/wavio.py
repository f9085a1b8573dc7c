"""Minimal mono WAV helpers on top of scipy.io.wavfile.

Corpus files are written as 32-bit float so synthesized mixtures survive a
round trip bit-exactly even when they exceed full scale; 16-bit PCM input is
accepted and scaled to [-1, 1).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import ValidationError


def read_wav(path: str | Path) -> tuple[int, np.ndarray]:
    """Read a mono WAV file.

    Returns:
        (sample_rate, float64 waveform); PCM16 is scaled by 1/32768.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"wav file not found: {path}")
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValidationError(f"{path}: expected mono audio, got shape {data.shape}")
    if data.dtype == np.int16:
        return rate, data.astype(np.float64) / 32768.0
    if data.dtype in (np.float32, np.float64):
        return rate, data.astype(np.float64)
    raise ValidationError(f"{path}: unsupported sample format {data.dtype}")


def write_wav(
    path: str | Path, x: np.ndarray, sample_rate: int, dtype: str = "float32"
) -> None:
    """Write a mono WAV file as float32 (default) or pcm16."""
    x = np.asarray(x)
    if x.ndim != 1:
        raise ValidationError("expected a mono waveform")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    if dtype == "float32":
        wavfile.write(path, sample_rate, x.astype(np.float32))
    elif dtype == "pcm16":
        clipped = np.clip(x, -1.0, 32767.0 / 32768.0)
        wavfile.write(path, sample_rate, np.round(clipped * 32768.0).astype(np.int16))
    else:
        raise ValidationError(f"unsupported wav dtype {dtype!r}")
