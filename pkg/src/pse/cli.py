"""Command-line interface: synth, train, enhance, fig6, and eval subcommands.

Options resolve in three layers: built-in defaults, then a JSON ``--config``
file, then explicit flags.  Commands that produce a directory write the
resolved options to ``<out>/config.json``.  Exit codes: 0 success, 2 invalid
input or configuration, 3 runtime failure; errors print one machine-readable
line ``error: validation|runtime: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .audiogram import Audiogram, load_audiogram, load_audiogram_pool
from .compensation import WdrcConfig, wdrc_compensate
from .errors import PseError, ValidationError
from .metrics import evaluate_pairs
from .net import parse_variant
from .synthesis import SynthConfig, build_corpus, load_manifest, load_wav_pool
from .training import TrainConfig, enhance_waveform, load_models, train
from .wavio import read_wav, write_wav

_SYNTH_DEFAULTS = {
    "out": None,
    "speech": None,
    "noise": None,
    "audiograms": None,
    "n_items": 100,
    "duration": 5.0,
    "seed": 0,
    "workers": 1,
}

_TRAIN_DEFAULTS = {
    "corpus": None,
    "out": None,
    "variant": "C48DF4",
    "epochs": 25,
    "batch_size": 4,
    "lr": 5e-4,
    "val_fraction": 0.1,
    "seed": 0,
    "grad_clip": 5.0,
    "resume": None,
}

_ENHANCE_DEFAULTS = {"input": None, "out": None, "checkpoint": None, "audiogram": None}

_FIG6_DEFAULTS = {
    "input": None,
    "out": None,
    "audiogram": None,
    "max_gain_db": 60.0,
    "smooth": True,
}

_EVAL_DEFAULTS = {"reference": None, "estimate": None, "out": None}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse failures are user input errors
        print(f"error: validation: {message}", file=sys.stderr)
        raise SystemExit(2)


def _resolve(args: argparse.Namespace, defaults: dict, required: tuple[str, ...]) -> dict:
    cfg = dict(defaults)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ValidationError(f"config file not found: {path}")
        try:
            file_cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file is not valid JSON: {exc}") from exc
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    missing = [k for k in required if cfg.get(k) is None]
    if missing:
        raise ValidationError(
            "missing required options: " + ", ".join(f"--{k.replace('_', '-')}" for k in missing)
        )
    return cfg


def _echo_config(out_dir: Path, command: str, cfg: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"command": command}
    payload.update({k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()})
    (out_dir / "config.json").write_text(json.dumps(payload, indent=2) + "\n")


def _parse_audiogram(text: str) -> Audiogram:
    if Path(text).exists():
        return load_audiogram(text)
    if "," in text:
        try:
            levels = tuple(float(t) for t in text.split(","))
        except ValueError as exc:
            raise ValidationError(f"bad audiogram threshold list: {text!r}") from exc
        return Audiogram(levels)
    raise ValidationError(
        f"audiogram {text!r} is neither a file nor a comma-separated threshold list"
    )


def _cmd_synth(args: argparse.Namespace) -> int:
    cfg = _resolve(args, _SYNTH_DEFAULTS, ("out", "speech", "noise", "audiograms"))
    out_dir = Path(cfg["out"])
    speech = load_wav_pool(cfg["speech"])
    noise = load_wav_pool(cfg["noise"])
    audiograms = load_audiogram_pool(cfg["audiograms"])
    synth_cfg = SynthConfig(duration_s=float(cfg["duration"]))
    manifest = build_corpus(
        out_dir,
        int(cfg["n_items"]),
        speech,
        noise,
        audiograms,
        synth_cfg,
        root_seed=int(cfg["seed"]),
        workers=int(cfg["workers"]),
    )
    _echo_config(out_dir, "synth", cfg)
    print(f"wrote {cfg['n_items']} samples; manifest at {manifest}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve(args, _TRAIN_DEFAULTS, ("corpus", "out"))
    corpus = Path(cfg["corpus"])
    manifest = corpus / "manifest.jsonl" if corpus.is_dir() else corpus
    records = load_manifest(manifest)
    model_cfg = parse_variant(cfg["variant"])
    train_cfg = TrainConfig(
        epochs=int(cfg["epochs"]),
        batch_size=int(cfg["batch_size"]),
        lr=float(cfg["lr"]),
        val_fraction=float(cfg["val_fraction"]),
        seed=int(cfg["seed"]),
        grad_clip=float(cfg["grad_clip"]) or None,
    )
    out_dir = Path(cfg["out"])
    _echo_config(out_dir, "train", cfg)
    result = train(records, out_dir, model_cfg, train_cfg, resume_from=cfg["resume"])
    print(
        f"trained {train_cfg.epochs} epochs; best val oracle {result.best_score:.4f}; "
        f"checkpoints in {out_dir}"
    )
    return 0


def _cmd_enhance(args: argparse.Namespace) -> int:
    cfg = _resolve(args, _ENHANCE_DEFAULTS, ("input", "out", "checkpoint", "audiogram"))
    gen, _, _ = load_models(cfg["checkpoint"])
    rate, wave = read_wav(cfg["input"])
    audiogram = _parse_audiogram(cfg["audiogram"])
    enhanced = enhance_waveform(gen, wave, audiogram.thresholds_db_hl)
    write_wav(cfg["out"], enhanced, rate)
    print(f"enhanced {cfg['input']} -> {cfg['out']}")
    return 0


def _cmd_fig6(args: argparse.Namespace) -> int:
    cfg = _resolve(args, _FIG6_DEFAULTS, ("input", "out", "audiogram"))
    rate, wave = read_wav(cfg["input"])
    audiogram = _parse_audiogram(cfg["audiogram"])
    wdrc = WdrcConfig(smooth=bool(cfg["smooth"]), max_gain_db=float(cfg["max_gain_db"]))
    compensated = wdrc_compensate(wave, audiogram, wdrc)
    write_wav(cfg["out"], compensated, rate)
    print(f"compensated {cfg['input']} -> {cfg['out']}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    cfg = _resolve(args, _EVAL_DEFAULTS, ("reference", "estimate", "out"))
    ref_dir, est_dir = Path(cfg["reference"]), Path(cfg["estimate"])
    if not ref_dir.is_dir() or not est_dir.is_dir():
        raise ValidationError("--reference and --estimate must be directories of wavs")
    pairs, names = [], []
    for ref_path in sorted(ref_dir.glob("*.wav")):
        est_path = est_dir / ref_path.name
        if not est_path.exists():
            raise ValidationError(f"no estimate for {ref_path.name} in {est_dir}")
        _, ref = read_wav(ref_path)
        _, est = read_wav(est_path)
        pairs.append((ref, est))
        names.append(ref_path.stem)
    if not pairs:
        raise ValidationError(f"no wav files under {ref_dir}")
    report = evaluate_pairs(pairs, names=names)
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    report.write_csv(out_dir / "report.csv")
    report.write_json(out_dir / "report.json")
    _echo_config(out_dir, "eval", cfg)
    agg = report.aggregates
    print(
        f"scored {len(pairs)} pairs; mean si_snr {agg['si_snr']:.2f} dB, "
        f"mean oracle {agg['oracle']:.4f}; report in {out_dir}"
    )
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="pse", description="Noise reduction with hearing compensation")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: _Parser) -> None:
        p.add_argument("--config", help="JSON file with option defaults")
        p.add_argument("--out", help="output path or directory")

    p = sub.add_parser("synth", help="synthesize a training corpus")
    common(p)
    p.add_argument("--speech", help="directory of speech wavs")
    p.add_argument("--noise", help="directory of noise wavs")
    p.add_argument("--audiograms", help="audiogram pool file or directory")
    p.add_argument("--n-items", dest="n_items", type=int, help="number of samples")
    p.add_argument("--duration", type=float, help="sample duration in seconds")
    p.add_argument("--seed", type=int, help="corpus seed")
    p.add_argument("--workers", type=int, help="parallel synthesis workers")
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("train", help="train the enhancement network")
    common(p)
    p.add_argument("--corpus", help="corpus directory or manifest path")
    p.add_argument("--variant", help="model variant, e.g. C48DF4 or C36DF8")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--val-fraction", dest="val_fraction", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--grad-clip", dest="grad_clip", type=float, help="0 disables clipping")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("enhance", help="enhance a wav with a trained model")
    common(p)
    p.add_argument("--input", help="input wav")
    p.add_argument("--checkpoint", help="trained checkpoint (.pt)")
    p.add_argument("--audiogram", help="audiogram file or comma list of 6 dB HL values")
    p.set_defaults(fn=_cmd_enhance)

    p = sub.add_parser("fig6", help="apply rule-based compensation to a wav")
    common(p)
    p.add_argument("--input", help="input wav")
    p.add_argument("--audiogram", help="audiogram file or comma list of 6 dB HL values")
    p.add_argument("--max-gain-db", dest="max_gain_db", type=float)
    p.add_argument(
        "--no-smooth", dest="smooth", action="store_const", const=False,
        help="disable attack/release gain smoothing",
    )
    p.set_defaults(fn=_cmd_fig6)

    p = sub.add_parser("eval", help="score enhanced wavs against references")
    common(p)
    p.add_argument("--reference", help="directory of reference wavs")
    p.add_argument("--estimate", help="directory of estimate wavs (matching names)")
    p.set_defaults(fn=_cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ValidationError as exc:
        print(f"error: validation: {exc}", file=sys.stderr)
        return 2
    except PseError as exc:
        print(f"error: runtime: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: runtime: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
