"""Wide dynamic range compression with FIG6-style insertion gains.

Gains are prescribed per analysis band from the listener's hearing threshold
at the band center and the estimated band input level.  Three anchor gains at
40, 65 and 95 dB SPL input define a piecewise-linear level-to-gain curve per
band; levels outside [40, 95] clamp to the nearest anchor and inputs quieter
than 20 dB SPL receive no gain at all.  Applying the per-band linear gains to
a masked spectrogram is algebraically the same as multiplying the noisy
spectrogram by the product of mask and gain, which is what lets the hearing
compensation ride on top of a separate denoising mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audiogram import Audiogram, interpolate_thresholds
from .errors import ValidationError
from .spectral import (
    DEFAULT_CALIBRATION_DB,
    StftConfig,
    band_bin_ranges,
    band_center_freqs_hz,
    band_spl,
    istft,
    stft,
)

# Input SPL anchors of the prescription rule.
ANCHOR_SPLS_DB = (40.0, 65.0, 95.0)

# FIG6 is inactive below this input level.
ACTIVATION_SPL_DB = 20.0

DEFAULT_MAX_GAIN_DB = 60.0


@dataclass(frozen=True)
class WdrcConfig:
    """Knobs of the compression stage.

    attack_ms / release_ms: one-pole smoothing time constants for falling and
    rising gain trajectories (gain falls when the level rises, so the fast
    attack constant reacts to onsets).  ``smooth=False`` disables smoothing,
    which makes the gain a pure per-frame function of level.
    """

    attack_ms: float = 5.0
    release_ms: float = 50.0
    smooth: bool = True
    max_gain_db: float = DEFAULT_MAX_GAIN_DB
    calibration_db: float = DEFAULT_CALIBRATION_DB

    def __post_init__(self) -> None:
        if self.attack_ms <= 0 or self.release_ms <= 0:
            raise ValidationError("smoothing time constants must be positive")
        if self.max_gain_db < 0:
            raise ValidationError("max_gain_db must be non-negative")


def _anchor_gains(hl_db: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Prescribed gains at 40 / 65 / 95 dB SPL input for threshold hl_db."""
    hl = np.asarray(hl_db, dtype=np.float64)
    mid = (hl >= 20.0) & (hl <= 60.0)
    high = hl > 60.0
    g40 = np.where(mid, hl - 20.0, np.where(high, 0.5 * hl + 10.0, 0.0))
    g65 = np.where(mid, 0.6 * (hl - 20.0), np.where(high, 0.8 * hl - 23.0, 0.0))
    g95 = np.where(hl >= 40.0, 0.1 * np.maximum(hl - 40.0, 0.0) ** 1.4, 0.0)
    return g40, g65, g95


def fig6_insertion_gain(
    hl_db,
    input_spl_db,
    max_gain_db: float = DEFAULT_MAX_GAIN_DB,
):
    """FIG6-style insertion gain in dB.

    Broadcasts over ``hl_db`` and ``input_spl_db``.  The gain is linear in
    input level between the 40/65/95 dB SPL anchors, clamps to the nearest
    anchor outside that range, is zero for inputs below 20 dB SPL, and is
    never negative.  Gains are capped at ``max_gain_db``.

    Args:
        hl_db: hearing threshold(s) in dB HL.
        input_spl_db: band input level(s) in dB SPL.
        max_gain_db: insertion gain cap in dB.

    Returns:
        Gain in dB with the broadcast shape of the inputs.
    """
    hl = np.asarray(hl_db, dtype=np.float64)
    spl = np.asarray(input_spl_db, dtype=np.float64)
    if not (np.all(np.isfinite(hl)) and np.all(np.isfinite(spl))):
        raise ValidationError("hl_db and input_spl_db must be finite")
    hl, spl = np.broadcast_arrays(hl, spl)
    g40, g65, g95 = _anchor_gains(hl)

    a40, a65, a95 = ANCHOR_SPLS_DB
    t_low = np.clip((spl - a40) / (a65 - a40), 0.0, 1.0)
    t_high = np.clip((spl - a65) / (a95 - a65), 0.0, 1.0)
    gain = np.where(
        spl <= a65,
        g40 + t_low * (g65 - g40),
        g65 + t_high * (g95 - g65),
    )
    gain = np.where(spl < ACTIVATION_SPL_DB, 0.0, gain)
    gain = np.clip(gain, 0.0, max_gain_db)
    return gain if gain.ndim else float(gain)


def _smooth_gains(gains_db: np.ndarray, cfg: WdrcConfig, hop_s: float) -> np.ndarray:
    """One-pole attack/release smoothing along the frame axis."""
    a_attack = float(np.exp(-hop_s / (cfg.attack_ms * 1e-3)))
    a_release = float(np.exp(-hop_s / (cfg.release_ms * 1e-3)))
    out = np.empty_like(gains_db)
    state = gains_db[0].copy()
    out[0] = state
    for l in range(1, gains_db.shape[0]):
        g = gains_db[l]
        coef = np.where(g < state, a_attack, a_release)
        state = coef * state + (1.0 - coef) * g
        out[l] = state
    return out


def band_gains(
    spec: np.ndarray,
    audiogram: Audiogram,
    cfg: WdrcConfig = WdrcConfig(),
    stft_cfg: StftConfig = StftConfig(),
) -> np.ndarray:
    """Per-frame, per-band insertion gains in dB for a spectrogram.

    Returns:
        Array of shape (T, 6).
    """
    levels = band_spl(spec, stft_cfg, cfg.calibration_db)
    hl = interpolate_thresholds(audiogram, band_center_freqs_hz())
    gains = fig6_insertion_gain(hl[None, :], levels, cfg.max_gain_db)
    if cfg.smooth and gains.shape[0] > 1:
        gains = _smooth_gains(gains, cfg, stft_cfg.hop / stft_cfg.sample_rate)
        gains = np.clip(gains, 0.0, cfg.max_gain_db)
    return gains


def expand_band_gains(
    gains_db: np.ndarray, stft_cfg: StftConfig = StftConfig()
) -> np.ndarray:
    """Spread (T, 6) band gains to linear per-bin factors of shape (T, n_bins)."""
    gains_db = np.asarray(gains_db, dtype=np.float64)
    if gains_db.ndim != 2 or gains_db.shape[1] != len(band_bin_ranges(stft_cfg)):
        raise ValidationError("expected gains of shape (T, n_bands)")
    out = np.empty((gains_db.shape[0], stft_cfg.n_bins))
    for b, (lo, hi) in enumerate(band_bin_ranges(stft_cfg)):
        out[:, lo:hi] = 10.0 ** (gains_db[:, b:b + 1] / 20.0)
    return out


def compensate_spectrum(
    spec: np.ndarray,
    audiogram: Audiogram,
    cfg: WdrcConfig = WdrcConfig(),
    stft_cfg: StftConfig = StftConfig(),
) -> tuple[np.ndarray, np.ndarray]:
    """Apply prescription gains to a spectrogram.

    Returns:
        (gain-applied complex spectrogram, per-band gain trajectory in dB).
    """
    gains_db = band_gains(spec, audiogram, cfg, stft_cfg)
    return spec * expand_band_gains(gains_db, stft_cfg), gains_db


def wdrc_compensate(
    x: np.ndarray,
    audiogram: Audiogram,
    cfg: WdrcConfig = WdrcConfig(),
    stft_cfg: StftConfig = StftConfig(),
) -> np.ndarray:
    """Compress-and-amplify a waveform for the given audiogram.

    Analysis, per-band gain application and resynthesis; the output has the
    same length as the input.  A zero audiogram (no measurable loss) yields
    zero gain everywhere, so the round trip reduces to ``istft(stft(x))``.
    """
    x = np.asarray(x, dtype=np.float64)
    spec, _ = compensate_spectrum(stft(x, stft_cfg), audiogram, cfg, stft_cfg)
    return istft(spec, len(x), stft_cfg)


def vad_guarded_target(
    compensated: np.ndarray,
    original: np.ndarray,
    vad: np.ndarray,
    hop: int = StftConfig().hop,
) -> np.ndarray:
    """Splice compensated speech frames into the original elsewhere.

    Samples of frames labeled non-speech are taken from ``original``
    bit-exactly.  Speech runs use ``compensated``, with a linear crossfade
    over the first and last hop of each run (placed inside the speech side,
    so non-speech frames stay untouched).  Runs touching the signal edges do
    not fade at the edge, so an all-true (all-false) label vector returns
    ``compensated`` (``original``) unchanged.

    Args:
        compensated: processed waveform.
        original: unprocessed waveform, same length.
        vad: boolean frame labels on the analysis frame grid.
        hop: frame hop in samples.

    Returns:
        Spliced waveform of the common length.
    """
    compensated = np.asarray(compensated, dtype=np.float64)
    original = np.asarray(original, dtype=np.float64)
    if compensated.shape != original.shape or compensated.ndim != 1:
        raise ValidationError("waveforms must be 1-D and equally long")
    vad = np.asarray(vad).astype(bool)
    n = len(original)
    if vad.ndim != 1 or len(vad) * hop < n:
        raise ValidationError("vad labels do not cover the signal")

    weight = np.zeros(n)
    ramp_up = (np.arange(hop) + 1.0) / hop
    labels = vad.astype(np.int8)
    boundaries = np.flatnonzero(np.diff(labels)) + 1
    run_starts = np.concatenate([[0], boundaries])
    run_ends = np.concatenate([boundaries, [len(vad)]])
    for f0, f1 in zip(run_starts, run_ends):
        if not vad[f0]:
            continue
        s0, s1 = f0 * hop, min(f1 * hop, n)
        if s0 >= n:
            break
        weight[s0:s1] = 1.0
        if f0 > 0:
            up = ramp_up[: max(0, min(s0 + hop, n) - s0)]
            weight[s0 : s0 + len(up)] = np.minimum(weight[s0 : s0 + len(up)], up)
        if f1 < len(vad) and s1 - hop >= s0:
            down = ramp_up[::-1][: s1 - max(s1 - hop, s0)]
            weight[s1 - len(down) : s1] = np.minimum(
                weight[s1 - len(down) : s1], down
            )
    out = original.copy()
    active = weight > 0
    out[active] = (
        weight[active] * compensated[active] + (1.0 - weight[active]) * original[active]
    )
    return out
