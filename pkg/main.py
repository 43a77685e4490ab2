"""CLI entry point: generate synthetic data, train, evaluate, sweep and gradient-check."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from config import (
    BATCH_SIZE,
    DATA_SEED,
    DEFAULT_SEED,
    EPOCHS,
    LEARNING_RATE,
    SPLIT_FRACTIONS,
    SWEEP_WORKERS,
    WINDOW_LENGTH,
    WINDOW_STRIDE,
    validate_config,
)
from dataset import SYNTH_PRESETS, load_dataset, load_synth_config, normalize_dataset, split_dataset, synth_generate, write_dataset
from errors import HcgError, ValidationError
from evaluation import compute_metrics, confusion, format_report, sweep_csv, sweep_report, sweep_table, write_confusion_csv, write_metrics_csv
from gradcheck import DEFAULT_SEEDS, run_gradcheck
from models import ARCHITECTURES, SPLITS, TrainConfig
from network import build_model, count_params, default_config, load_checkpoint, param_count, parity_config, predict, save_checkpoint
from sweep import load_grid, parse_grid, run_sweep, with_repeats
from training import history_path, train, write_history_csv
from utils import LOG_LEVELS, logger, set_log_level


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _non_negative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _non_negative_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hcg", description="Damage-state classification of multi-sensor vibration windows."
    )
    parser.add_argument("--log-level", choices=LOG_LEVELS, type=str.upper, help="Override HCG_LOG_LEVEL.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    gen = sub.add_parser("generate", help="Write a synthetic damage-state dataset.")
    source = gen.add_mutually_exclusive_group()
    source.add_argument("--config", type=Path, help="Synthetic config file of key = value lines.")
    source.add_argument("--preset", choices=sorted(SYNTH_PRESETS), help="Built-in synthetic preset (default: default).")
    gen.add_argument("--out", type=Path, required=True, help="Output directory for the manifest and recordings.")
    gen.add_argument("--seed", type=_non_negative_int, help="Generator seed (default: config seed or HCG_SEED).")

    tr = sub.add_parser("train", help="Train one architecture and write a checkpoint plus history CSV.")
    tr.add_argument("--arch", choices=ARCHITECTURES, required=True)
    tr.add_argument("--data", type=Path, required=True, help="Dataset directory with manifest.csv.")
    tr.add_argument("--out", type=Path, required=True, help="Checkpoint path.")
    tr.add_argument("--epochs", type=_positive_int, default=EPOCHS)
    tr.add_argument("--seed", type=_non_negative_int, default=DEFAULT_SEED, help="Model and shuffling seed.")
    tr.add_argument("--lr", type=_non_negative_float, default=LEARNING_RATE, help="Adam learning rate.")
    tr.add_argument("--batch", type=_positive_int, default=BATCH_SIZE, help="Mini-batch size.")
    tr.add_argument("--window", type=_positive_int, default=WINDOW_LENGTH, help="Window length L.")
    tr.add_argument("--stride", type=_positive_int, default=WINDOW_STRIDE, help="Window stride.")
    tr.add_argument("--split-seed", type=_non_negative_int, default=DATA_SEED, help="Train/val/test split seed.")
    tr.add_argument("--parity", action="store_true", help="Size a baseline to match the default HCG parameter count.")

    ev = sub.add_parser("eval", help="Score a checkpoint on one split.")
    ev.add_argument("--ckpt", type=Path, required=True)
    ev.add_argument("--data", type=Path, required=True)
    ev.add_argument("--split", choices=SPLITS, default="test")
    ev.add_argument("--stride", type=_positive_int, help="Window stride (default: the one stored at training time).")
    ev.add_argument("--split-seed", type=_non_negative_int, help="Split seed (default: the one stored at training time).")
    ev.add_argument("--confusion", type=Path, help="Confusion CSV path (default: <ckpt>.confusion.csv).")
    ev.add_argument("--metrics-out", type=Path, help="Optional metrics CSV path.")

    sw = sub.add_parser("sweep", help="Layer/neuron sweep over architectures with seeded repeats.")
    sw.add_argument("--grid", type=Path, help="Grid file (default: 2-5 layers of 64 units, all architectures).")
    sw.add_argument("--data", type=Path, required=True)
    sw.add_argument("--repeats", type=_positive_int, help="Repeats per cell (overrides the grid file).")
    sw.add_argument("--workers", type=_positive_int, default=SWEEP_WORKERS, help="Worker threads.")
    sw.add_argument("--out", type=Path, help="Optional CSV path for the mean/std rows.")
    sw.add_argument("--seed", type=_non_negative_int, help="Base seed (overrides the grid file).")

    gc = sub.add_parser("gradcheck", help="Compare analytic and finite-difference gradients of every layer.")
    gc.add_argument("--seed", type=_non_negative_int, default=DEFAULT_SEED, help="First seed.")
    gc.add_argument("--seeds", type=_positive_int, default=DEFAULT_SEEDS, help="Number of seeds per check.")
    return parser


def cmd_generate(args: argparse.Namespace) -> int:
    if args.config is not None:
        cfg = load_synth_config(args.config)
    else:
        cfg = replace(SYNTH_PRESETS[args.preset or "default"], seed=DEFAULT_SEED)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    ds = synth_generate(cfg)
    manifest = write_dataset(ds, args.out)
    print(f"wrote {len(ds)} recordings ({ds.num_classes} classes, {ds.num_sensors} sensors) to {manifest.parent}")
    return 0


def _prepared_dataset(data: Path, window: int, stride: int, split_seed: int, num_classes: int | None = None):
    ds = load_dataset(data, window, stride, num_classes=num_classes)
    return split_dataset(ds, SPLIT_FRACTIONS, seed=split_seed)


def cmd_train(args: argparse.Namespace) -> int:
    ds = _prepared_dataset(args.data, args.window, args.stride, args.split_seed)
    ds, stats = normalize_dataset(ds)
    shape = (ds.num_sensors, ds.window_length, ds.num_classes)
    cfg = default_config(args.arch, *shape, seed=args.seed)
    if args.parity and args.arch != "hcg":
        cfg = parity_config(cfg, count_params(default_config("hcg", *shape)))
    cfg = replace(cfg, window_stride=args.stride, split_seed=args.split_seed)
    model = build_model(cfg)
    model.norm = stats
    print(f"params {args.arch} {param_count(model)}")

    history = train(
        model, ds, TrainConfig(learning_rate=args.lr, batch_size=args.batch, epochs=args.epochs, seed=args.seed)
    )
    save_checkpoint(model, args.out)
    hist = write_history_csv(history, history_path(args.out))
    print(
        f"trained {args.arch} for {history.epochs} epochs: train_acc={history.train_acc[-1]:.4f} "
        f"val_acc={history.val_acc[-1]:.4f}"
    )
    print(f"checkpoint {args.out}")
    print(f"history {hist}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.ckpt)
    cfg = model.cfg
    stride = args.stride or cfg.window_stride or WINDOW_STRIDE
    split_seed = next(s for s in (args.split_seed, cfg.split_seed, DATA_SEED) if s is not None)
    if cfg.window_stride is None and args.stride is None:
        logger.warning(f"checkpoint does not record its window stride; using {stride}")
    elif cfg.window_stride is not None and stride != cfg.window_stride:
        logger.warning(f"stride {stride} differs from training stride {cfg.window_stride}; splits may share windows")
    ds = _prepared_dataset(args.data, cfg.window_length, stride, split_seed, num_classes=cfg.num_classes)
    if model.norm is None:
        logger.warning("checkpoint has no normalization statistics; fitting them on the training split")
    ds, _ = normalize_dataset(ds, model.norm)
    x, y = ds.split(args.split)
    if len(y) == 0:
        raise ValidationError(f"split '{args.split}' is empty")
    cm = confusion(predict(model, x), y, cfg.num_classes)
    report = compute_metrics(cm)
    print(f"{cfg.arch} on {args.split} split ({cm.total} windows)")
    print(format_report(report, ds.class_names))
    conf_path = args.confusion or args.ckpt.with_name(args.ckpt.name + ".confusion.csv")
    write_confusion_csv(cm, conf_path)
    print(f"confusion {conf_path}")
    if args.metrics_out is not None:
        write_metrics_csv(report, args.metrics_out)
        print(f"metrics {args.metrics_out}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    grid = load_grid(args.grid) if args.grid is not None else parse_grid("", source="default grid")
    grid = with_repeats(grid, args.repeats)
    if args.seed is not None:
        grid = replace(grid, seed=args.seed)
    ds = _prepared_dataset(args.data, WINDOW_LENGTH, WINDOW_STRIDE, DATA_SEED)
    ds, _ = normalize_dataset(ds)
    rows = sweep_report(run_sweep(ds, grid, workers=args.workers))
    print(f"{grid.metric} (mean±std over {grid.repeats} repeats)")
    print(sweep_table(rows))
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(sweep_csv(rows), encoding="utf-8")
        print(f"sweep {args.out}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    seeds = list(range(args.seed, args.seed + args.seeds))
    results = run_gradcheck(seeds)
    for r in results:
        print(f"{r.name:<14} max_rel_err={r.max_error:.3e}  {'PASS' if r.passed else 'FAIL'}")
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
}


def run(argv: Sequence[str] | None = None) -> int:
    """Parse ``argv`` and run one command; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.log_level:
        set_log_level(args.log_level)

    try:
        validate_config()
    except ValueError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return 1

    try:
        return COMMANDS[args.command](args)
    except (HcgError, ValueError, OSError) as e:
        logger.debug("command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
