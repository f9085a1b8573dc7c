"""Adversarial training loop, checkpointing, evaluation, and ablation runs."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .errors import CheckpointError, TrainingDiverged, ValidationError
from .losses import GeneratorLoss, LossWeights, discriminator_loss
from .metrics import default_oracle
from .net import Discriminator, Enhancer, ModelConfig
from .synthesis import CorpusRecord, load_record

CHECKPOINT_FORMAT = "pse-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 25
    batch_size: int = 4
    lr: float = 5e-4
    lr_decay: float = 0.5
    lr_decay_every: int = 10
    grad_clip: float | None = 5.0
    seed: int = 0
    val_fraction: float = 0.1
    deterministic: bool = True

    def __post_init__(self) -> None:
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValidationError("epochs and batch_size must be positive")
        if self.lr <= 0 or not 0 < self.lr_decay <= 1 or self.lr_decay_every <= 0:
            raise ValidationError("bad learning-rate schedule")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValidationError("val_fraction must lie in [0, 1)")


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Stepped decay: lr * decay ** ((epoch - 1) // every), epochs 1-based."""
    return cfg.lr * cfg.lr_decay ** ((epoch - 1) // cfg.lr_decay_every)


class CorpusDataset:
    """Tensors for corpus records; all records share one sample length."""

    def __init__(self, records: Sequence[CorpusRecord]) -> None:
        if not records:
            raise ValidationError("dataset needs at least one record")
        self.records = list(records)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i: int):
        rec = self.records[i]
        noisy, target, vad = load_record(rec)
        return (
            torch.tensor(noisy, dtype=torch.float32),
            torch.tensor(target, dtype=torch.float32),
            torch.tensor(vad, dtype=torch.bool),
            torch.tensor(rec.audiogram.thresholds_db_hl, dtype=torch.float32),
        )

    def batch(self, ids: Sequence[int]):
        items = [self[i] for i in ids]
        return tuple(torch.stack([it[k] for it in items]) for k in range(4))


def make_models(cfg: ModelConfig, seed: int) -> tuple[Enhancer, Discriminator]:
    """Seeded construction so two runs start from identical weights."""
    torch.manual_seed(seed)
    return Enhancer(cfg), Discriminator(cfg)


def _clip(module: torch.nn.Module, max_norm: float | None) -> None:
    if max_norm:
        torch.nn.utils.clip_grad_norm_(module.parameters(), max_norm)


def train_step(
    gen: Enhancer,
    disc: Discriminator,
    opt_g: torch.optim.Optimizer,
    opt_d: torch.optim.Optimizer,
    batch,
    gen_loss: GeneratorLoss,
    grad_clip: float | None = 5.0,
    batch_ids: Sequence[int] = (),
) -> dict[str, float]:
    """One discriminator step followed by one generator step.

    Raises:
        TrainingDiverged: a loss went non-finite; the message names the batch.
    """
    noisy, target, vad, thresholds = batch
    out = gen(noisy, thresholds)
    est = out.enhanced
    if not bool(torch.isfinite(est).all()):
        raise TrainingDiverged(f"non-finite enhancer output on batch {list(batch_ids)}")
    with torch.no_grad():
        clean_spec = gen.stft.analyze(target)
        oracle = torch.tensor(
            [
                default_oracle(t.numpy().astype(np.float64), e.numpy().astype(np.float64))
                for t, e in zip(target, est.detach())
            ],
            dtype=est.dtype,
        )

    score_clean = disc(clean_spec, clean_spec, thresholds)
    score_est = disc(clean_spec, out.est_spec.detach(), thresholds)
    d_loss = discriminator_loss(score_clean, score_est, oracle)
    opt_d.zero_grad()
    d_loss.backward()
    _clip(disc, grad_clip)
    opt_d.step()

    score_g = disc(clean_spec, out.est_spec, thresholds)
    g_loss, breakdown = gen_loss(est, target, out.vad_probs, vad, score_g)
    opt_g.zero_grad()
    opt_d.zero_grad()  # drop discriminator grads from the adversarial term
    g_loss.backward()
    _clip(gen, grad_clip)
    opt_g.step()

    stats = {"d_loss": float(d_loss.detach()), "g_loss": float(g_loss.detach()), **breakdown}
    if not all(np.isfinite(v) for v in stats.values()):
        raise TrainingDiverged(
            f"non-finite loss on batch {list(batch_ids)}: "
            + ", ".join(f"{k}={v:.4g}" for k, v in stats.items())
        )
    return stats


def save_checkpoint(
    path: str | Path,
    gen: Enhancer,
    disc: Discriminator,
    opt_g: torch.optim.Optimizer,
    opt_d: torch.optim.Optimizer,
    epoch: int,
    step: int,
    best_score: float,
) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_config": dataclasses.asdict(gen.cfg),
        "generator": gen.state_dict(),
        "discriminator": disc.state_dict(),
        "opt_g": opt_g.state_dict(),
        "opt_d": opt_d.state_dict(),
        "epoch": epoch,
        "step": step,
        "best_score": best_score,
        "torch_rng": torch.get_rng_state(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> dict:
    """Load and validate a checkpoint payload.

    Raises:
        CheckpointError: unreadable file, wrong format tag, or wrong version.
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a recognized checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {payload.get('version')!r}"
        )
    missing = {"model_config", "generator", "epoch"} - payload.keys()
    if missing:
        raise CheckpointError(f"{path}: missing checkpoint keys {sorted(missing)}")
    return payload


def load_models(path: str | Path) -> tuple[Enhancer, Discriminator, dict]:
    """Rebuild generator and discriminator from a checkpoint."""
    payload = load_checkpoint(path)
    cfg = ModelConfig(**payload["model_config"])
    gen = Enhancer(cfg)
    disc = Discriminator(cfg)
    try:
        gen.load_state_dict(payload["generator"])
        disc.load_state_dict(payload["discriminator"])
    except (RuntimeError, KeyError) as exc:
        raise CheckpointError(f"{path}: state dict mismatch: {exc}") from exc
    return gen, disc, payload


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    """Deterministic shuffle for one epoch, independent of library state."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(epoch,)))
    return rng.permutation(n)


def validate(gen: Enhancer, dataset: CorpusDataset, batch_size: int = 4) -> float:
    """Mean oracle score of the generator over a dataset."""
    gen.eval()
    scores = []
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            ids = range(start, min(start + batch_size, len(dataset)))
            noisy, target, _, thresholds = dataset.batch(list(ids))
            est = gen(noisy, thresholds).enhanced
            for t, e in zip(target, est):
                scores.append(
                    default_oracle(
                        t.numpy().astype(np.float64), e.numpy().astype(np.float64)
                    )
                )
    gen.train()
    return float(np.mean(scores))


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)
    best_score: float = float("-inf")
    best_path: Path | None = None
    last_path: Path | None = None


def train(
    records: Sequence[CorpusRecord],
    out_dir: str | Path,
    model_cfg: ModelConfig = ModelConfig(),
    train_cfg: TrainConfig = TrainConfig(),
    weights: LossWeights = LossWeights(),
    resume_from: str | Path | None = None,
    log=print,
) -> TrainResult:
    """Train the generator/discriminator pair on a synthesized corpus.

    The last ``val_fraction`` of the records (at least one) become the
    validation split; the best checkpoint is chosen by validation oracle.
    Checkpoints land in ``out_dir`` as ``last.pt`` and ``best.pt``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if train_cfg.deterministic:
        torch.set_num_threads(1)

    n_val = max(1, round(train_cfg.val_fraction * len(records))) if len(records) > 1 else 0
    train_ds = CorpusDataset(records[: len(records) - n_val] if n_val else records)
    val_ds = CorpusDataset(records[len(records) - n_val :]) if n_val else train_ds

    gen, disc = make_models(model_cfg, train_cfg.seed)
    opt_g = torch.optim.Adam(gen.parameters(), lr=train_cfg.lr)
    opt_d = torch.optim.Adam(disc.parameters(), lr=train_cfg.lr)
    gen_loss = GeneratorLoss(weights)

    result = TrainResult()
    start_epoch = 1
    step = 0
    if resume_from is not None:
        payload = load_checkpoint(resume_from)
        if payload["model_config"] != dataclasses.asdict(model_cfg):
            raise CheckpointError("checkpoint was trained with a different model config")
        gen.load_state_dict(payload["generator"])
        disc.load_state_dict(payload["discriminator"])
        opt_g.load_state_dict(payload["opt_g"])
        opt_d.load_state_dict(payload["opt_d"])
        torch.set_rng_state(payload["torch_rng"])
        start_epoch = payload["epoch"] + 1
        step = payload["step"]
        result.best_score = payload["best_score"]

    gen.train()
    disc.train()
    for epoch in range(start_epoch, train_cfg.epochs + 1):
        lr = lr_at_epoch(train_cfg, epoch)
        for group in opt_g.param_groups:
            group["lr"] = lr
        for group in opt_d.param_groups:
            group["lr"] = lr

        order = epoch_order(train_cfg.seed, epoch, len(train_ds))
        epoch_stats: list[dict] = []
        for start in range(0, len(order), train_cfg.batch_size):
            ids = order[start : start + train_cfg.batch_size].tolist()
            batch = train_ds.batch(ids)
            try:
                stats = train_step(
                    gen, disc, opt_g, opt_d, batch, gen_loss,
                    train_cfg.grad_clip, batch_ids=ids,
                )
            except TrainingDiverged as exc:
                raise TrainingDiverged(f"epoch {epoch}, step {step}: {exc}") from exc
            step += 1
            epoch_stats.append(stats)

        val_score = validate(gen, val_ds, train_cfg.batch_size)
        row = {
            "epoch": epoch,
            "lr": lr,
            "val_oracle": val_score,
            "g_loss": float(np.mean([s["g_loss"] for s in epoch_stats])),
            "d_loss": float(np.mean([s["d_loss"] for s in epoch_stats])),
        }
        result.history.append(row)
        log(
            f"epoch {epoch:3d}  lr {lr:.2e}  g {row['g_loss']:.4f}  "
            f"d {row['d_loss']:.4f}  val {val_score:.4f}"
        )

        result.last_path = out_dir / "last.pt"
        save_checkpoint(
            result.last_path, gen, disc, opt_g, opt_d, epoch, step, result.best_score
        )
        if val_score > result.best_score:
            result.best_score = val_score
            result.best_path = out_dir / "best.pt"
            save_checkpoint(
                result.best_path, gen, disc, opt_g, opt_d, epoch, step, val_score
            )

    (out_dir / "history.json").write_text(json.dumps(result.history, indent=2) + "\n")
    return result


def enhance_waveform(
    gen: Enhancer, wave: np.ndarray, thresholds: Sequence[float]
) -> np.ndarray:
    """Run one waveform through the generator (eval mode, no grad)."""
    gen.eval()
    with torch.no_grad():
        x = torch.tensor(np.asarray(wave, dtype=np.float32)).unsqueeze(0)
        t = torch.tensor([list(thresholds)], dtype=torch.float32)
        out = gen(x, t)
    return out.enhanced.squeeze(0).numpy().astype(np.float64)


def ablate_weights(
    records: Sequence[CorpusRecord],
    out_dir: str | Path,
    grid: Sequence[LossWeights],
    model_cfg: ModelConfig = ModelConfig(),
    train_cfg: TrainConfig = TrainConfig(),
    log=print,
) -> list[dict]:
    """Train once per weight setting and tabulate validation outcomes.

    Writes ``ablation.json`` and ``ablation.csv`` under ``out_dir`` and
    returns the rows.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, weights in enumerate(grid):
        run_dir = out_dir / f"run_{i:02d}"
        result = train(records, run_dir, model_cfg, train_cfg, weights, log=log)
        rows.append(
            {
                "run": i,
                **dataclasses.asdict(weights),
                "best_val_oracle": result.best_score,
                "final_val_oracle": result.history[-1]["val_oracle"],
            }
        )
    (out_dir / "ablation.json").write_text(json.dumps(rows, indent=2) + "\n")
    header = list(rows[0].keys())
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(row[k]) if isinstance(row[k], float) else str(row[k]) for k in header))
    (out_dir / "ablation.csv").write_text("\n".join(lines) + "\n")
    return rows
