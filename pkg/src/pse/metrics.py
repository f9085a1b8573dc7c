"""Evaluation metrics, the training quality oracle, and external adapters.

Only scale-free internal metrics are implemented here; intrusive perceptual
scores (PESQ, STOI, HASQI) plug in through the adapter registry so the
package carries no heavyweight metric dependencies.  The default oracle maps
SI-SNR onto [0, 1] and stands in wherever a perceptual oracle would be bound.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .audiogram import Audiogram
from .errors import ConfigError, ValidationError

METRIC_CAP_DB = 60.0


def _check_pair(reference: np.ndarray, estimate: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if reference.shape != estimate.shape or reference.ndim != 1:
        raise ValidationError("reference and estimate must be equally long 1-D signals")
    if not (np.all(np.isfinite(reference)) and np.all(np.isfinite(estimate))):
        raise ValidationError("signals must be finite")
    if not np.any(reference):
        raise ValidationError("reference is silent")
    return reference, estimate


def si_snr(reference: np.ndarray, estimate: np.ndarray) -> float:
    """Scale-invariant signal-to-noise ratio in dB, capped at +/-60.

    Means are removed from both signals, the estimate is projected onto the
    reference, and the ratio of projection power to residual power is
    returned.  Scaling the estimate, or adding DC to it, leaves the value
    unchanged.
    """
    reference, estimate = _check_pair(reference, estimate)
    reference = reference - reference.mean()
    estimate = estimate - estimate.mean()
    ref_power = float(np.dot(reference, reference))
    if ref_power <= 0.0:
        raise ValidationError("reference is constant; SI-SNR undefined")
    s_target = (float(np.dot(estimate, reference)) / ref_power) * reference
    residual = estimate - s_target
    p_t = float(np.dot(s_target, s_target))
    p_e = float(np.dot(residual, residual))
    if p_e <= 0.0:
        return METRIC_CAP_DB
    if p_t <= 0.0:
        return -METRIC_CAP_DB
    return float(np.clip(10.0 * np.log10(p_t / p_e), -METRIC_CAP_DB, METRIC_CAP_DB))


def sdr(reference: np.ndarray, estimate: np.ndarray) -> float:
    """Signal-to-distortion ratio in dB, capped at +/-60.

    Unlike :func:`si_snr` this is translation- and scale-sensitive: the
    distortion is the plain difference of the two signals.
    """
    reference, estimate = _check_pair(reference, estimate)
    err = reference - estimate
    p_ref = float(np.dot(reference, reference))
    p_err = float(np.dot(err, err))
    if p_err <= 0.0:
        return METRIC_CAP_DB
    return float(np.clip(10.0 * np.log10(p_ref / p_err), -METRIC_CAP_DB, METRIC_CAP_DB))


def default_oracle(
    reference: np.ndarray,
    estimate: np.ndarray,
    audiogram: Audiogram | None = None,
) -> float:
    """SI-SNR mapped onto [0, 1]: clip((si_snr + 10) / 40, 0, 1).

    The audiogram is accepted for interface parity with perceptual oracles
    but does not influence the default score.
    """
    del audiogram
    return float(np.clip((si_snr(reference, estimate) + 10.0) / 40.0, 0.0, 1.0))


# ---------------------------------------------------------------------------
# External metric adapters

# name -> (callable(reference, estimate) -> float, (lo, hi), locked)
_ADAPTERS: dict[str, tuple[Callable, tuple[float, float], bool]] = {}

KNOWN_METRIC_RANGES = {
    "pesq_wb": (-0.5, 4.5),
    "pesq_nb": (-0.5, 4.5),
    "stoi": (0.0, 1.0),
    "hasqi": (0.0, 1.0),
}


def register_metric(
    name: str,
    fn: Callable,
    valid_range: tuple[float, float] | None = None,
    lock: bool = False,
) -> None:
    """Bind an external metric implementation.

    Args:
        name: metric key; well-known keys get their documented range.
        fn: callable (reference, estimate) -> float; close over any extra
            state it needs (sample rate, model paths, ...).
        valid_range: inclusive score range; required for unknown names.
        lock: forbid later rebinding of this name.

    Raises:
        ConfigError: rebinding a locked name, or no range available.
    """
    existing = _ADAPTERS.get(name)
    if existing is not None and existing[2]:
        raise ConfigError(f"metric adapter {name!r} is locked")
    if valid_range is None:
        valid_range = KNOWN_METRIC_RANGES.get(name)
    if valid_range is None:
        raise ConfigError(f"metric {name!r} needs an explicit valid_range")
    _ADAPTERS[name] = (fn, (float(valid_range[0]), float(valid_range[1])), lock)


def unregister_metric(name: str, force: bool = False) -> None:
    """Remove an adapter binding; missing names are ignored.

    Locked bindings need ``force=True``.
    """
    existing = _ADAPTERS.get(name)
    if existing is not None and existing[2] and not force:
        raise ConfigError(f"metric adapter {name!r} is locked")
    _ADAPTERS.pop(name, None)


def compute_external(name: str, reference: np.ndarray, estimate: np.ndarray) -> float:
    """Evaluate a registered external metric and validate its score range.

    Raises:
        ConfigError: metric not registered.
        ValidationError: adapter returned a non-finite score or one outside
            its declared range.
    """
    if name not in _ADAPTERS:
        raise ConfigError(f"no metric adapter registered for {name!r}")
    fn, (lo, hi), _ = _ADAPTERS[name]
    score = float(fn(reference, estimate))
    if not np.isfinite(score) or score < lo or score > hi:
        raise ValidationError(
            f"adapter {name!r} returned {score}, outside [{lo}, {hi}]"
        )
    return score


# ---------------------------------------------------------------------------
# Evaluation reports


@dataclass
class EvalRow:
    """Scores for one (reference, estimate) pair."""

    name: str
    scores: dict[str, float]


@dataclass
class EvalReport:
    """Per-sample metric rows plus aggregate means."""

    rows: list[EvalRow] = field(default_factory=list)

    def add_row(self, name: str, scores: dict[str, float]) -> None:
        self.rows.append(EvalRow(name, dict(scores)))

    @property
    def metric_names(self) -> list[str]:
        names: list[str] = []
        for row in self.rows:
            for key in row.scores:
                if key not in names:
                    names.append(key)
        return names

    @property
    def aggregates(self) -> dict[str, float]:
        """Mean of every metric column over the rows that carry it."""
        out = {}
        for name in self.metric_names:
            values = [row.scores[name] for row in self.rows if name in row.scores]
            out[name] = float(np.mean(values)) if values else float("nan")
        return out

    def write_csv(self, path: str | Path) -> None:
        names = self.metric_names
        agg = self.aggregates
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["name"] + names)
            for row in self.rows:
                writer.writerow(
                    [row.name]
                    + [repr(row.scores[n]) if n in row.scores else "" for n in names]
                )
            writer.writerow(["mean"] + [repr(agg[n]) for n in names])

    def write_json(self, path: str | Path) -> None:
        payload = {
            "rows": [{"name": row.name, **row.scores} for row in self.rows],
            "aggregates": self.aggregates,
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def evaluate_pairs(
    pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    names: Sequence[str] | None = None,
    audiograms: Sequence[Audiogram] | None = None,
    external: Sequence[str] = (),
) -> EvalReport:
    """Score (reference, estimate) pairs with the built-in and external metrics.

    Args:
        pairs: (reference, estimate) waveform pairs.
        names: row labels; defaults to the pair index.
        audiograms: optional per-pair audiograms handed to the oracle.
        external: registered adapter names to evaluate as extra columns.
    """
    report = EvalReport()
    for i, (ref, est) in enumerate(pairs):
        audiogram = audiograms[i] if audiograms is not None else None
        scores = {
            "si_snr": si_snr(ref, est),
            "sdr": sdr(ref, est),
            "oracle": default_oracle(ref, est, audiogram),
        }
        for name in external:
            scores[name] = compute_external(name, ref, est)
        report.add_row(names[i] if names is not None else str(i), scores)
    return report
