"""Training-pair synthesis: level jitter, noise mixing, compensated targets.

One synthesized sample is built as follows.  A fixed-duration crop is
rejection-sampled from the speech pool until its active-frame fraction
reaches the configured minimum.  A gain mode is drawn (release / attack /
bypass with probabilities 0.4 / 0.3 / 0.3): release raises the crop to a
level drawn from (rms+5, -10] dBFS, attack lowers it into [-35, rms-5), and
bypass leaves it untouched; the gain fades in linearly over a short ramp.
A noise crop is drawn, optionally (p=0.7) thickened with white Gaussian noise
at a level within 10 dB below the noise's own RMS, scaled to a drawn SNR in
[-5, 15] dB against the gained speech, and added to it.  The target is the
gained speech compensated for a drawn audiogram, spliced so that non-speech
frames stay bit-equal to the uncompensated speech.

Every sample uses an RNG derived from (root seed, sample index), so a corpus
is reproducible sample-by-sample regardless of worker count or scheduling.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import multiprocessing
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audiogram import Audiogram
from .compensation import WdrcConfig, vad_guarded_target, wdrc_compensate
from .errors import ValidationError
from .spectral import StftConfig, frame_signal, rms_db
from .wavio import read_wav, write_wav

logger = logging.getLogger(__name__)

MODES = ("release", "attack", "bypass")

# (name, waveform) pairs; the name lands in the manifest for provenance.
SignalPool = list[tuple[str, np.ndarray]]


@dataclass(frozen=True)
class SynthConfig:
    duration_s: float = 5.0
    sample_rate: int = 16000
    min_activity: float = 0.6
    max_crop_attempts: int = 100
    mode_probs: tuple[float, float, float] = (0.4, 0.3, 0.3)
    release_margin_db: float = 5.0
    release_ceiling_db: float = -10.0
    attack_floor_db: float = -35.0
    attack_margin_db: float = 5.0
    gaussian_prob: float = 0.7
    gaussian_span_db: float = 10.0
    snr_range_db: tuple[float, float] = (-5.0, 15.0)
    ramp_s: float = 0.05

    def __post_init__(self) -> None:
        if abs(sum(self.mode_probs) - 1.0) > 1e-9 or min(self.mode_probs) < 0:
            raise ValidationError("mode_probs must be a distribution over 3 modes")
        if not 0.0 <= self.min_activity <= 1.0:
            raise ValidationError("min_activity must lie in [0, 1]")
        if self.snr_range_db[0] >= self.snr_range_db[1]:
            raise ValidationError("snr_range_db must be an increasing interval")
        if self.duration_s <= 0 or self.sample_rate <= 0:
            raise ValidationError("duration and sample rate must be positive")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate))


@dataclass
class SampleMeta:
    index: int
    root_seed: int
    mode: str
    fallback: str | None
    target_level_db: float | None
    gaussian_added: bool
    gaussian_level_db: float | None
    snr_db: float
    speech_id: str
    speech_offset: int
    noise_id: str
    noise_offset: int
    audiogram_index: int
    clipped: bool
    crop_attempts: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class SynthSample:
    noisy: np.ndarray
    target: np.ndarray
    vad: np.ndarray
    audiogram: Audiogram
    meta: SampleMeta
    # Populated only with keep_components=True; used by invariant checks.
    speech_gained: np.ndarray | None = None
    noise_scaled: np.ndarray | None = None


def vad_labels(
    x: np.ndarray,
    stft_cfg: StftConfig = StftConfig(),
    threshold_db: float = 40.0,
    hangover: int = 2,
) -> np.ndarray:
    """Energy voice-activity labels on the analysis frame grid.

    A frame is active when its energy exceeds the peak frame energy minus
    ``threshold_db``; activity is held for ``hangover`` further frames.

    Returns:
        Boolean array with one label per analysis frame.
    """
    frames = frame_signal(x, stft_cfg)
    energy = np.sum(frames * frames, axis=1)
    peak = float(energy.max())
    if peak <= 0.0:
        return np.zeros(len(energy), dtype=bool)
    raw = energy > peak * 10.0 ** (-threshold_db / 10.0)
    active = raw.copy()
    for k in range(1, hangover + 1):
        active[k:] |= raw[:-k]
    return active


def activity_fraction(x: np.ndarray, stft_cfg: StftConfig = StftConfig()) -> float:
    """Fraction of active frames under :func:`vad_labels`."""
    labels = vad_labels(x, stft_cfg)
    return float(np.mean(labels))


def apply_level(
    x: np.ndarray, target_db: float, ramp_s: float = 0.05, sample_rate: int = 16000
) -> tuple[np.ndarray, bool]:
    """Scale a waveform to a target RMS level with a linear gain onset.

    The gain ramps from unity to its final value over ``ramp_s`` seconds, so
    a target equal to the current level reduces to the identity.  The result
    is clipped to [-1, 1]; clipping is reported and logged.

    Returns:
        (scaled waveform, clipped flag).
    """
    x = np.asarray(x, dtype=np.float64)
    gain = 10.0 ** ((target_db - rms_db(x)) / 20.0)
    n_ramp = int(round(ramp_s * sample_rate))
    env = np.full(len(x), gain)
    if n_ramp > 0:
        k = min(n_ramp, len(x))
        env[:k] = 1.0 + (gain - 1.0) * (np.arange(k) / n_ramp)
    y = x * env
    clipped = bool(np.any(np.abs(y) > 1.0))
    if clipped:
        logger.warning("apply_level clipped output at target %.1f dBFS", target_db)
        y = np.clip(y, -1.0, 1.0)
    return y, clipped


def snr_scale(speech: np.ndarray, noise: np.ndarray, snr_db: float) -> float:
    """Scale factor for ``noise`` so that speech vs scaled noise hits snr_db.

    Powers are taken over the full utterances.
    """
    p_s = float(np.mean(np.square(speech, dtype=np.float64)))
    p_n = float(np.mean(np.square(noise, dtype=np.float64)))
    if p_s <= 0.0:
        raise ValidationError("speech is silent; cannot set an SNR")
    if p_n <= 0.0:
        raise ValidationError("noise is silent; cannot set an SNR")
    return float(np.sqrt(p_s / (p_n * 10.0 ** (snr_db / 10.0))))


def mix_at_snr(
    speech: np.ndarray, noise: np.ndarray, snr_db: float
) -> tuple[np.ndarray, np.ndarray]:
    """Mix noise into speech at an exact full-utterance SNR.

    Returns:
        (mixture, scaled noise).
    """
    speech = np.asarray(speech, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if speech.shape != noise.shape:
        raise ValidationError("speech and noise must have equal length")
    scaled = noise * snr_scale(speech, noise, snr_db)
    return speech + scaled, scaled


def _draw_crop(
    rng: np.random.Generator, pool: SignalPool, n: int
) -> tuple[int, int, np.ndarray]:
    idx = int(rng.integers(len(pool)))
    name, wave = pool[idx]
    if len(wave) < n:
        raise ValidationError(f"pool item {name!r} shorter than the crop ({n} samples)")
    offset = int(rng.integers(0, len(wave) - n + 1))
    return idx, offset, np.asarray(wave[offset : offset + n], dtype=np.float64)


def sample_rng(root_seed: int, index: int) -> np.random.Generator:
    """Child generator for one sample, independent of worker scheduling."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=root_seed, spawn_key=(index,))
    )


def synthesize_sample(
    index: int,
    root_seed: int,
    speech_pool: SignalPool,
    noise_pool: SignalPool,
    audiogram_pool: list[Audiogram],
    cfg: SynthConfig = SynthConfig(),
    wdrc_cfg: WdrcConfig = WdrcConfig(),
    stft_cfg: StftConfig = StftConfig(),
    keep_components: bool = False,
) -> SynthSample:
    """Build one (noisy, target, vad, audiogram) training sample.

    Draw order (fixed for reproducibility): speech crop attempts (pool index,
    offset per attempt), noise crop, gain mode, target level, Gaussian coin,
    Gaussian level and noise vector, SNR, audiogram index.

    Raises:
        ValidationError: empty pools, crops longer than pool items, or no
            sufficiently active speech crop within ``max_crop_attempts``.
    """
    if not speech_pool or not noise_pool or not audiogram_pool:
        raise ValidationError("speech, noise and audiogram pools must be non-empty")
    rng = sample_rng(root_seed, index)
    n = cfg.n_samples

    speech = None
    attempts = 0
    for attempts in range(1, cfg.max_crop_attempts + 1):
        s_idx, s_off, crop = _draw_crop(rng, speech_pool, n)
        if activity_fraction(crop, stft_cfg) >= cfg.min_activity:
            speech = crop
            break
    if speech is None:
        raise ValidationError(
            f"no speech crop reached activity {cfg.min_activity} "
            f"in {cfg.max_crop_attempts} attempts"
        )

    n_idx, n_off, noise = _draw_crop(rng, noise_pool, n)

    mode = MODES[int(rng.choice(len(MODES), p=cfg.mode_probs))]
    fallback = None
    target_level = None
    clipped = False
    if mode == "release":
        lo = rms_db(speech) + cfg.release_margin_db
        hi = cfg.release_ceiling_db
        if lo >= hi:
            fallback = "release_interval_empty"
    elif mode == "attack":
        lo = cfg.attack_floor_db
        hi = rms_db(speech) - cfg.attack_margin_db
        if lo >= hi:
            fallback = "attack_interval_empty"
    if mode == "bypass" or fallback is not None:
        speech_gained = speech.copy()
    else:
        target_level = float(rng.uniform(lo, hi))
        speech_gained, clipped = apply_level(
            speech, target_level, cfg.ramp_s, cfg.sample_rate
        )

    gaussian_added = bool(rng.random() < cfg.gaussian_prob)
    gaussian_level = None
    if gaussian_added:
        noise_level = rms_db(noise)
        gaussian_level = float(
            rng.uniform(noise_level - cfg.gaussian_span_db, noise_level)
        )
        g = rng.standard_normal(n)
        g *= 10.0 ** (gaussian_level / 20.0) / np.sqrt(np.mean(g * g))
        noise = noise + g

    snr_db = float(rng.uniform(*cfg.snr_range_db))
    noisy, noise_scaled = mix_at_snr(speech_gained, noise, snr_db)

    a_idx = int(rng.integers(len(audiogram_pool)))
    audiogram = audiogram_pool[a_idx]

    vad = vad_labels(speech_gained, stft_cfg)
    compensated = wdrc_compensate(speech_gained, audiogram, wdrc_cfg, stft_cfg)
    target = vad_guarded_target(compensated, speech_gained, vad, stft_cfg.hop)

    meta = SampleMeta(
        index=index,
        root_seed=root_seed,
        mode=mode,
        fallback=fallback,
        target_level_db=target_level,
        gaussian_added=gaussian_added,
        gaussian_level_db=gaussian_level,
        snr_db=snr_db,
        speech_id=speech_pool[s_idx][0],
        speech_offset=s_off,
        noise_id=noise_pool[n_idx][0],
        noise_offset=n_off,
        audiogram_index=a_idx,
        clipped=clipped,
        crop_attempts=attempts,
    )
    return SynthSample(
        noisy=noisy,
        target=target,
        vad=vad,
        audiogram=audiogram,
        meta=meta,
        speech_gained=speech_gained if keep_components else None,
        noise_scaled=noise_scaled if keep_components else None,
    )


def load_wav_pool(path: str | Path, sample_rate: int = 16000) -> SignalPool:
    """Load every WAV under a directory (sorted by name) as a signal pool."""
    path = Path(path)
    if not path.is_dir():
        raise ValidationError(f"pool directory not found: {path}")
    pool: SignalPool = []
    for wav_path in sorted(path.glob("*.wav")):
        rate, wave = read_wav(wav_path)
        if rate != sample_rate:
            raise ValidationError(
                f"{wav_path}: sample rate {rate} != expected {sample_rate}"
            )
        pool.append((wav_path.stem, wave))
    if not pool:
        raise ValidationError(f"no wav files under {path}")
    return pool


# ---------------------------------------------------------------------------
# Corpus building


_WORKER_ARGS: dict = {}


def _corpus_init(out_dir, root_seed, speech, noise, audiograms, cfg, wdrc_cfg):
    _WORKER_ARGS.update(
        out_dir=Path(out_dir),
        root_seed=root_seed,
        speech=speech,
        noise=noise,
        audiograms=audiograms,
        cfg=cfg,
        wdrc_cfg=wdrc_cfg,
    )


def _corpus_one(index: int) -> dict:
    a = _WORKER_ARGS
    sample = synthesize_sample(
        index, a["root_seed"], a["speech"], a["noise"], a["audiograms"], a["cfg"],
        a["wdrc_cfg"],
    )
    out_dir: Path = a["out_dir"]
    rel_noisy = f"noisy/{index:06d}.wav"
    rel_target = f"target/{index:06d}.wav"
    rel_vad = f"vad/{index:06d}.vad"
    write_wav(out_dir / rel_noisy, sample.noisy, a["cfg"].sample_rate)
    write_wav(out_dir / rel_target, sample.target, a["cfg"].sample_rate)
    (out_dir / rel_vad).parent.mkdir(parents=True, exist_ok=True)
    (out_dir / rel_vad).write_bytes(bytes(sample.vad.astype(np.uint8)))
    return {
        "index": index,
        "noisy": rel_noisy,
        "target": rel_target,
        "vad": rel_vad,
        "audiogram": list(sample.audiogram.thresholds_db_hl),
        "meta": sample.meta.to_dict(),
    }


def build_corpus(
    out_dir: str | Path,
    n_items: int,
    speech_pool: SignalPool,
    noise_pool: SignalPool,
    audiogram_pool: list[Audiogram],
    cfg: SynthConfig = SynthConfig(),
    wdrc_cfg: WdrcConfig = WdrcConfig(),
    root_seed: int = 0,
    workers: int = 1,
) -> Path:
    """Synthesize a corpus to disk.

    Layout: ``noisy/*.wav``, ``target/*.wav`` (float32), ``vad/*.vad`` (one
    byte per frame) and ``manifest.jsonl`` with one record per sample in
    index order.  Output bytes are independent of ``workers``.

    Returns:
        Path of the manifest file.
    """
    if n_items <= 0:
        raise ValidationError("n_items must be positive")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for sub in ("noisy", "target", "vad"):
        (out_dir / sub).mkdir(exist_ok=True)
    init_args = (out_dir, root_seed, speech_pool, noise_pool, audiogram_pool, cfg, wdrc_cfg)
    if workers > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(workers, initializer=_corpus_init, initargs=init_args) as pool:
            rows = pool.map(_corpus_one, range(n_items), chunksize=16)
    else:
        _corpus_init(*init_args)
        rows = [_corpus_one(i) for i in range(n_items)]
    rows.sort(key=lambda r: r["index"])
    manifest = out_dir / "manifest.jsonl"
    with open(manifest, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return manifest


@dataclass
class CorpusRecord:
    index: int
    noisy_path: Path
    target_path: Path
    vad_path: Path
    audiogram: Audiogram
    meta: dict


def load_manifest(manifest_path: str | Path) -> list[CorpusRecord]:
    """Parse a manifest.jsonl into records with resolved paths."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise ValidationError(f"manifest not found: {manifest_path}")
    root = manifest_path.parent
    records = []
    for line in manifest_path.read_text().splitlines():
        if not line.strip():
            continue
        row = json.loads(line)
        records.append(
            CorpusRecord(
                index=row["index"],
                noisy_path=root / row["noisy"],
                target_path=root / row["target"],
                vad_path=root / row["vad"],
                audiogram=Audiogram(tuple(row["audiogram"])),
                meta=row.get("meta", {}),
            )
        )
    if not records:
        raise ValidationError(f"manifest is empty: {manifest_path}")
    return records


def load_record(
    record: CorpusRecord, sample_rate: int = 16000
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Load (noisy, target, vad) arrays for one corpus record."""
    rate_n, noisy = read_wav(record.noisy_path)
    rate_t, target = read_wav(record.target_path)
    if rate_n != sample_rate or rate_t != sample_rate:
        raise ValidationError(f"record {record.index}: unexpected sample rate")
    vad = np.frombuffer(record.vad_path.read_bytes(), dtype=np.uint8).astype(bool)
    return noisy, target, vad
