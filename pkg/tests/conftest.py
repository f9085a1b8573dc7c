"""Shared signal builders for the test suite.

Real recordings are out of scope at desk scale, so tests synthesize
speech-like material (drifting harmonic stacks with syllabic gating and
pauses) and noise-like material (filtered white noise).  The speech builder
guarantees enough active frames for the crop rejection loop to succeed.
"""

from __future__ import annotations

import numpy as np
import pytest

from pse.audiogram import Audiogram

SR = 16000


def speech_like(rng: np.random.Generator, n: int, level_db: float = -22.0,
                pause_fraction: float = 0.2) -> np.ndarray:
    """Harmonic stack with pitch drift, syllabic modulation and pauses."""
    t = np.arange(n) / SR
    f0 = 110.0 + 25.0 * np.sin(2 * np.pi * 0.4 * t + rng.uniform(0, 2 * np.pi))
    phase = 2 * np.pi * np.cumsum(f0) / SR
    x = np.zeros(n)
    for h in range(1, 6):
        x += np.sin(h * phase + rng.uniform(0, 2 * np.pi)) / h
    # Syllabic gating around 3 Hz.
    seg = SR // 3
    gates = 0.35 + 0.65 * rng.random(n // seg + 2)
    env = np.interp(np.arange(n), np.arange(len(gates)) * seg, gates)
    x *= env
    # A few hard pauses.
    n_pauses = max(1, int(pause_fraction * n / (0.4 * SR)))
    for _ in range(n_pauses):
        p0 = int(rng.integers(0, max(1, n - SR // 3)))
        x[p0 : p0 + int(0.2 * SR)] = 0.0
    x *= 10.0 ** (level_db / 20.0) / max(np.sqrt(np.mean(x * x)), 1e-9)
    return x


def noise_like(rng: np.random.Generator, n: int, level_db: float = -30.0) -> np.ndarray:
    """One-pole low-passed white noise."""
    from scipy.signal import lfilter

    a = 0.85
    out = lfilter([1 - a], [1, -a], rng.standard_normal(n))
    out *= 10.0 ** (level_db / 20.0) / np.sqrt(np.mean(out * out))
    return out


def make_pools(seed: int = 0, n_speech: int = 6, n_noise: int = 4,
               item_s: float = 8.0) -> tuple[list, list]:
    rng = np.random.default_rng(seed)
    n = int(item_s * SR)
    speech = [(f"sp{i:02d}", speech_like(rng, n)) for i in range(n_speech)]
    noise = [(f"nz{i:02d}", noise_like(rng, n)) for i in range(n_noise)]
    return speech, noise


def make_audiograms() -> list[Audiogram]:
    return [
        Audiogram((10.0, 10.0, 15.0, 20.0, 30.0, 40.0)),
        Audiogram((20.0, 25.0, 35.0, 45.0, 60.0, 70.0)),
        Audiogram((40.0, 45.0, 55.0, 65.0, 75.0, 85.0)),
        Audiogram((0.0, 5.0, 10.0, 25.0, 50.0, 65.0)),
    ]


@pytest.fixture(scope="session")
def pools():
    speech, noise = make_pools()
    return speech, noise, make_audiograms()
