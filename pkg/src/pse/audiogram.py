"""Audiogram handling: validation, interpolation, severity classification, file I/O.

An audiogram is a set of six pure-tone hearing thresholds in dB HL measured at
the standard octave frequencies 250, 500, 1000, 2000, 4000 and 8000 Hz.  The
enhancement and compensation stages consume a dense per-bin version obtained
by piecewise-linear interpolation along frequency, clamped to the endpoint
thresholds below 250 Hz and above 8000 Hz.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError

AUDIOGRAM_FREQS_HZ = (250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0)
THRESHOLD_MIN_DB = -10.0
THRESHOLD_MAX_DB = 120.0

# Pure-tone average is taken over 500, 1000, 2000 and 4000 Hz.
_PTA_INDICES = (1, 2, 3, 4)


class Severity(enum.Enum):
    MILD = "mild"
    MODERATE = "moderate"
    SEVERE = "severe"


@dataclass(frozen=True)
class Audiogram:
    """Six hearing thresholds in dB HL at the standard octave frequencies.

    Raises:
        ValidationError: wrong count, non-finite values, or thresholds
            outside [-10, 120] dB HL.
    """

    thresholds_db_hl: tuple[float, ...]

    def __post_init__(self) -> None:
        values = tuple(float(v) for v in self.thresholds_db_hl)
        if len(values) != len(AUDIOGRAM_FREQS_HZ):
            raise ValidationError(
                f"audiogram needs {len(AUDIOGRAM_FREQS_HZ)} thresholds, got {len(values)}"
            )
        arr = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValidationError("audiogram thresholds must be finite")
        if np.any(arr < THRESHOLD_MIN_DB) or np.any(arr > THRESHOLD_MAX_DB):
            raise ValidationError(
                f"audiogram thresholds must lie in [{THRESHOLD_MIN_DB}, {THRESHOLD_MAX_DB}] dB HL"
            )
        object.__setattr__(self, "thresholds_db_hl", values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.thresholds_db_hl, dtype=np.float64)

    @property
    def severity(self) -> Severity:
        return classify_severity(pure_tone_average(self))


def interpolate_thresholds(audiogram: Audiogram, freqs_hz: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolation of the thresholds at arbitrary frequencies.

    Queries below 250 Hz (above 8000 Hz) clamp to the first (last) threshold.
    At the measured frequencies the stored threshold is returned bit-exactly.

    Args:
        audiogram: source thresholds.
        freqs_hz: query frequencies in Hz, any shape.

    Returns:
        Interpolated thresholds in dB HL with the same shape as ``freqs_hz``.
    """
    freqs = np.asarray(freqs_hz, dtype=np.float64)
    if not np.all(np.isfinite(freqs)):
        raise ValidationError("query frequencies must be finite")
    knots = np.asarray(AUDIOGRAM_FREQS_HZ)
    levels = audiogram.as_array()

    flat = freqs.reshape(-1)
    out = np.empty_like(flat)
    # Segment index per query; searchsorted(right) - 1 maps a query equal to a
    # knot onto the segment starting at that knot, so t == 0 there and the
    # stored value is recovered exactly.
    seg = np.searchsorted(knots, flat, side="right") - 1
    below = seg < 0
    above = seg >= len(knots) - 1
    seg = np.clip(seg, 0, len(knots) - 2)
    t = (flat - knots[seg]) / (knots[seg + 1] - knots[seg])
    out = levels[seg] + t * (levels[seg + 1] - levels[seg])
    out[below] = levels[0]
    out[above & (flat >= knots[-1])] = levels[-1]
    return out.reshape(freqs.shape)


def dense_thresholds(
    audiogram: Audiogram, n_fft: int = 512, sample_rate: float = 16000.0
) -> np.ndarray:
    """Thresholds interpolated at the one-sided FFT bin frequencies.

    Returns:
        Array of shape (n_fft // 2 + 1,) in dB HL.
    """
    bins = np.arange(n_fft // 2 + 1, dtype=np.float64) * (sample_rate / n_fft)
    return interpolate_thresholds(audiogram, bins)


def pure_tone_average(audiogram: Audiogram) -> float:
    """Mean threshold at 500, 1000, 2000 and 4000 Hz in dB HL."""
    arr = audiogram.as_array()
    return float(np.mean(arr[list(_PTA_INDICES)]))


def classify_severity(pta_db_hl: float) -> Severity:
    """Severity class from a pure-tone average.

    Below 40 dB HL is mild, 40 to 70 inclusive is moderate, above 70 severe.
    Both boundary values fall into the moderate class.
    """
    pta = float(pta_db_hl)
    if not np.isfinite(pta):
        raise ValidationError("pure-tone average must be finite")
    if pta < 40.0:
        return Severity.MILD
    if pta <= 70.0:
        return Severity.MODERATE
    return Severity.SEVERE


def save_audiogram(audiogram: Audiogram, path: str | Path) -> None:
    """Write a single audiogram as JSON (.json) or a one-row CSV (.csv)."""
    path = Path(path)
    if path.suffix == ".json":
        payload = {
            "freqs_hz": list(AUDIOGRAM_FREQS_HZ),
            "thresholds_db_hl": list(audiogram.thresholds_db_hl),
        }
        path.write_text(json.dumps(payload, indent=2) + "\n")
    elif path.suffix == ".csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"{f:g}" for f in AUDIOGRAM_FREQS_HZ])
            writer.writerow([repr(v) for v in audiogram.thresholds_db_hl])
    else:
        raise ValidationError(f"unsupported audiogram format: {path.suffix!r}")


def _from_json_payload(payload: dict) -> Audiogram:
    freqs = payload.get("freqs_hz")
    if freqs is not None and tuple(float(f) for f in freqs) != AUDIOGRAM_FREQS_HZ:
        raise ValidationError(f"audiogram frequencies must be {AUDIOGRAM_FREQS_HZ}")
    return Audiogram(tuple(float(v) for v in payload["thresholds_db_hl"]))


def load_audiogram(path: str | Path) -> Audiogram:
    """Read a single audiogram from JSON or CSV.

    CSV files carry a header row with the six frequencies followed by one
    threshold row; files with several threshold rows are rejected here (use
    :func:`load_audiogram_pool`).
    """
    pool = load_audiogram_pool(path)
    if len(pool) != 1:
        raise ValidationError(f"{path} holds {len(pool)} audiograms, expected exactly 1")
    return pool[0]


def load_audiogram_pool(path: str | Path) -> list[Audiogram]:
    """Read one or more audiograms from a JSON/CSV file or a directory of them.

    JSON files hold either a single audiogram object or a list of them; CSV
    files hold a frequency header row and one threshold row per audiogram.
    """
    path = Path(path)
    if path.is_dir():
        pool: list[Audiogram] = []
        for child in sorted(path.iterdir()):
            if child.suffix in (".json", ".csv"):
                pool.extend(load_audiogram_pool(child))
        if not pool:
            raise ValidationError(f"no audiogram files found under {path}")
        return pool
    if not path.exists():
        raise ValidationError(f"audiogram file not found: {path}")
    if path.suffix == ".json":
        payload = json.loads(path.read_text())
        items = payload if isinstance(payload, list) else [payload]
        return [_from_json_payload(item) for item in items]
    if path.suffix == ".csv":
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row]
        if len(rows) < 2:
            raise ValidationError(f"{path} has no threshold rows")
        header = tuple(float(v) for v in rows[0])
        if header != AUDIOGRAM_FREQS_HZ:
            raise ValidationError(f"audiogram frequencies must be {AUDIOGRAM_FREQS_HZ}")
        return [Audiogram(tuple(float(v) for v in row)) for row in rows[1:]]
    raise ValidationError(f"unsupported audiogram format: {path.suffix!r}")
