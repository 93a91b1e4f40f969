"""Command-line entry point: ``mixgraph train|eval|predict``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .data import ClassVocabulary, DataError, SDD_CLASSES, build_windows, load_dataset_dir
from .evaluator import evaluate, predict_window, window_seed
from .gaussian import sample, to_absolute
from .network import ConfigError, ModelConfig, init_params
from .trainer import (
    CheckpointError,
    NumericalError,
    TrainConfig,
    TrainHistory,
    load_checkpoint,
    save_checkpoint,
    train,
)

log = logging.getLogger("mixgraph")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

PREDICTION_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["checkpoint_id", "K", "seed", "windows"],
    "properties": {
        "checkpoint_id": {"type": "string"},
        "K": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "windows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": [
                    "scene",
                    "start_frame",
                    "agent_ids",
                    "classes",
                    "observed",
                    "ground_truth",
                    "samples",
                    "mu",
                    "sigma",
                    "rho",
                ],
                "properties": {
                    "scene": {"type": "string"},
                    "start_frame": {"type": "integer"},
                    "agent_ids": {"type": "array", "items": {"type": "integer"}},
                    "classes": {"type": "array", "items": {"type": "string"}},
                    # [agent][step][xy]
                    "observed": {"$ref": "#/$defs/tracks"},
                    "ground_truth": {"$ref": "#/$defs/tracks"},
                    # [sample][agent][step][xy]
                    "samples": {"type": "array", "minItems": 1, "items": {"$ref": "#/$defs/tracks"}},
                    "mu": {"$ref": "#/$defs/tracks"},
                    "sigma": {"$ref": "#/$defs/tracks"},
                    "rho": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
                },
            },
        },
    },
    "$defs": {
        "tracks": {
            "type": "array",
            "items": {
                "type": "array",
                "items": {"type": "array", "minItems": 2, "maxItems": 2, "items": {"type": "number"}},
            },
        }
    },
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mixgraph", description="Trajectory prediction for scenes with several agent classes")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_flags(p):
        p.add_argument("--data", required=True, help="directory of tab-separated scene files")
        p.add_argument("--classes", default=",".join(SDD_CLASSES), help="comma-separated class vocabulary")
        p.add_argument("--stride", type=int, default=1)
        p.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", help="train a model and write a checkpoint")
    data_flags(t)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--epochs", type=int, default=250)
    t.add_argument("--batch", type=int, default=128)
    t.add_argument("--lr", type=float, default=0.01)
    t.add_argument("--lr-late", type=float, default=0.002)
    t.add_argument("--lr-switch-epoch", type=int, default=150)
    t.add_argument("--lr-decay-mode", choices=("replace", "per-epoch"), default="replace")
    t.add_argument("--grad-clip", type=float, default=1.0, help="global gradient norm cap; 0 disables")
    t.add_argument("--obs-len", type=int, default=8)
    t.add_argument("--pred-len", type=int, default=12)
    t.add_argument("--n-stgcnn", type=int, default=4)
    t.add_argument("--n-txpcnn", type=int, default=2)
    t.add_argument("--hidden-channels", type=int, default=5)
    t.add_argument("--temporal-kernel", type=int, default=3)
    t.add_argument("--no-sg", action="store_true")
    t.add_argument("--no-pg", action="store_true")
    t.add_argument("--no-vg", action="store_true")

    e = sub.add_parser("eval", help="compute mADE/mFDE/aADE/aFDE")
    data_flags(e)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--k", type=int, default=20)
    e.add_argument("--s", type=int, default=20)
    e.add_argument("--out", help="metrics report path (default: <checkpoint>.metrics.json)")

    pr = sub.add_parser("predict", help="export plot-ready predictions")
    data_flags(pr)
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--k", type=int, default=20)
    pr.add_argument("--out", required=True)
    return parser


def _vocab(args) -> ClassVocabulary:
    try:
        return ClassVocabulary(tuple(s.strip() for s in args.classes.split(",") if s.strip()))
    except DataError as exc:
        raise UsageError(str(exc)) from None


def _windows(args, vocab: ClassVocabulary, obs_len: int, pred_len: int):
    scenes = load_dataset_dir(args.data, vocab)
    windows = []
    for scene in scenes:
        windows.extend(build_windows(scene, obs_len, pred_len, args.stride))
    return windows


def _file_id(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _write_manifest(out_path, args, extra: dict) -> None:
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "command": args.command,
        "argv": sys.argv[1:],
        "flags": flags,
        "seed": args.seed,
        "dataset": str(Path(args.data).resolve()),
        "dataset_files": sorted(p.name for p in Path(args.data).iterdir() if p.suffix in (".txt", ".tsv")),
        "timestamp": datetime.now(timezone.utc).isoformat(),
        **extra,
    }
    Path(str(out_path) + ".manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")


def _load_for_data(args, vocab: ClassVocabulary):
    params, config, meta = load_checkpoint(args.checkpoint, with_metadata=True)
    labels = tuple(meta.get("vocabulary", ()))
    if labels and labels != vocab.labels:
        raise DataError(f"checkpoint vocabulary {list(labels)} does not match data vocabulary {list(vocab.labels)}")
    if config.num_classes != len(vocab):
        raise DataError(f"checkpoint expects {config.num_classes} classes, data vocabulary has {len(vocab)}")
    return params, config


def cmd_train(args) -> int:
    vocab = _vocab(args)
    try:
        model_config = ModelConfig(
            n_stgcnn=args.n_stgcnn,
            n_txpcnn=args.n_txpcnn,
            hidden_channels=args.hidden_channels,
            temporal_kernel=args.temporal_kernel,
            obs_len=args.obs_len,
            pred_len=args.pred_len,
            num_classes=len(vocab),
            use_sg=not args.no_sg,
            use_pg=not args.no_pg,
            use_vg=not args.no_vg,
        )
        train_config = TrainConfig(
            epochs=args.epochs,
            batch_windows=args.batch,
            lr_initial=args.lr,
            lr_late=args.lr_late,
            lr_switch_epoch=args.lr_switch_epoch,
            lr_decay_mode=args.lr_decay_mode,
            seed=args.seed,
            grad_clip_norm=args.grad_clip if args.grad_clip > 0 else None,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    windows = _windows(args, vocab, args.obs_len, args.pred_len)
    if not windows:
        raise DataError(f"no complete windows in {args.data}")
    log.info("training on %d windows", len(windows))
    if args.epochs == 0:
        params, history = init_params(model_config, args.seed), TrainHistory()
    else:
        params, history = train(windows, train_config, model_config)
    save_checkpoint(params, model_config, args.out, extra={"vocabulary": list(vocab.labels)})
    Path(str(args.out) + ".history.json").write_text(json.dumps(history.to_dict()) + "\n", encoding="utf-8")
    _write_manifest(args.out, args, {"checkpoint": str(args.out), "checkpoint_id": _file_id(args.out)})
    if history.loss:
        print(f"final mean NLL per point: {history.loss[-1]:.6f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    vocab = _vocab(args)
    if args.k < 1 or args.s < 1:
        raise UsageError("--k and --s must be >= 1")
    params, config = _load_for_data(args, vocab)
    windows = _windows(args, vocab, config.obs_len, config.pred_len)
    if not windows:
        raise DataError(f"no complete windows in {args.data}")
    report = evaluate(params, config, windows, K=args.k, S=args.s, seed=args.seed, checkpoint_id=_file_id(args.checkpoint))
    values = [report.made, report.mfde, report.aade, report.afde]
    if not all(np.isfinite(values)):
        raise NumericalError("non-finite metric")
    out = Path(args.out) if args.out else Path(str(args.checkpoint) + ".metrics.json")
    text = json.dumps(report.to_dict(), indent=1)
    out.write_text(text + "\n", encoding="utf-8")
    print(text)
    _write_manifest(out, args, {"checkpoint": str(args.checkpoint), "checkpoint_id": report.checkpoint_id})
    return EXIT_OK


def prediction_document(windows, params, config, vocab: ClassVocabulary, K: int, seed: int, checkpoint_id: str) -> dict:
    docs = []
    for idx, w in enumerate(windows):
        field = predict_window(w, params, config)
        mu, sigma, rho = field.numpy()
        samples = to_absolute(sample(field, K, rng=window_seed(seed, idx)), w.obs_positions[-1])
        docs.append(
            {
                "scene": w.scene,
                "start_frame": int(w.start_frame),
                "agent_ids": [int(a) for a in w.agent_ids],
                "classes": [vocab.labels[c] for c in w.class_indices],
                "observed": w.obs_positions.transpose(1, 0, 2).tolist(),
                "ground_truth": w.pred_positions.transpose(1, 0, 2).tolist(),
                "samples": samples.transpose(0, 2, 1, 3).tolist(),
                "mu": mu.transpose(1, 0, 2).tolist(),
                "sigma": sigma.transpose(1, 0, 2).tolist(),
                "rho": rho.T.tolist(),
            }
        )
    return {"checkpoint_id": checkpoint_id, "K": K, "seed": seed, "windows": docs}


def cmd_predict(args) -> int:
    vocab = _vocab(args)
    if args.k < 1:
        raise UsageError("--k must be >= 1")
    params, config = _load_for_data(args, vocab)
    windows = _windows(args, vocab, config.obs_len, config.pred_len)
    doc = prediction_document(windows, params, config, vocab, args.k, args.seed, _file_id(args.checkpoint))
    Path(args.out).write_text(json.dumps(doc) + "\n", encoding="utf-8")
    _write_manifest(args.out, args, {"checkpoint": str(args.checkpoint), "n_windows": len(windows)})
    print(f"wrote {len(windows)} windows to {args.out}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "predict": cmd_predict}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"mixgraph: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, ConfigError, OSError) as exc:
        print(f"mixgraph: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"mixgraph: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
