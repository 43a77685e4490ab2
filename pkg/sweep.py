"""Layer/neuron sweeps: every (architecture, widths) cell trained and tested over seeded repeats."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from config import BATCH_SIZE, DEFAULT_SEED, EPOCHS, LEARNING_RATE, REPEATS
from errors import ConfigError
from evaluation import METRIC_NAMES, compute_metrics, confusion
from models import ARCHITECTURES, LabeledDataset, SweepCell, SweepGrid, TrainConfig
from network import build_model, predict, sized_config
from training import train
from utils import parse_int_list, parse_key_value_text

logger = logging.getLogger(__name__)

GRID_KEYS = ("archs", "depths", "width", "neurons", "repeats", "epochs", "metric", "learning_rate", "batch_size", "seed")
DEFAULT_DEPTHS = (2, 3, 4, 5)
DEFAULT_WIDTH = 64


def _number(key: str, raw: str, kind: type) -> int | float:
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"grid key '{key}': expected {kind.__name__}, got {raw!r}") from None


def parse_grid(text: str, source: str = "sweep grid") -> SweepGrid:
    """Grid file of ``key = value`` lines.

    ``depths`` with one shared ``width`` gives the depth study; ``neurons``
    (per-layer width lists separated by ';') gives the width study. Both
    may be present; their settings are concatenated.
    """
    entries = parse_key_value_text(text, source)
    unknown = sorted(set(entries) - set(GRID_KEYS))
    if unknown:
        raise ConfigError(f"{source}: unknown keys {', '.join(unknown)} (allowed: {', '.join(GRID_KEYS)})")

    archs = ARCHITECTURES
    if "archs" in entries:
        archs = tuple(a.strip().lower() for a in entries["archs"].replace(",", " ").split())
        bad = [a for a in archs if a not in ARCHITECTURES]
        if bad or not archs:
            raise ConfigError(f"{source}: unknown architectures {bad or '(none given)'}")

    try:
        width = int(entries.get("width", DEFAULT_WIDTH))
        depths = parse_int_list(entries["depths"]) if "depths" in entries else ()
        neurons = tuple(parse_int_list(part) for part in entries.get("neurons", "").split(";") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if not depths and not neurons:
        depths = DEFAULT_DEPTHS

    settings: list[tuple[int, ...]] = []
    labels: list[str] = []
    for d in depths:
        settings.append((width,) * d)
        labels.append(f"{d} layers")
    for widths in neurons:
        settings.append(widths)
        labels.append(" ".join(str(w) for w in widths))
    for widths in settings:
        if not widths or min(widths) < 1:
            raise ConfigError(f"{source}: layer widths must be positive, got {widths}")
        if "hcg" in archs and len(widths) < 2:
            raise ConfigError(f"{source}: hcg needs at least two layers, got setting {widths}")

    grid = SweepGrid(
        archs=archs,
        settings=tuple(settings),
        labels=tuple(labels),
        repeats=int(_number("repeats", entries.get("repeats", str(REPEATS)), int)),
        epochs=int(_number("epochs", entries.get("epochs", str(EPOCHS)), int)),
        metric=entries.get("metric", "accuracy").lower(),
        learning_rate=float(_number("learning_rate", entries.get("learning_rate", str(LEARNING_RATE)), float)),
        batch_size=int(_number("batch_size", entries.get("batch_size", str(BATCH_SIZE)), int)),
        seed=int(_number("seed", entries.get("seed", str(DEFAULT_SEED)), int)),
    )
    validate_grid(grid)
    return grid


def validate_grid(grid: SweepGrid) -> None:
    problems: list[str] = []
    if grid.repeats < 1:
        problems.append(f"repeats must be >= 1, got {grid.repeats}")
    if grid.epochs < 1:
        problems.append(f"epochs must be >= 1, got {grid.epochs}")
    if grid.metric not in METRIC_NAMES:
        problems.append(f"metric must be one of {', '.join(METRIC_NAMES)}, got '{grid.metric}'")
    if grid.learning_rate < 0:
        problems.append(f"learning_rate must be >= 0, got {grid.learning_rate}")
    if grid.batch_size < 1:
        problems.append(f"batch_size must be >= 1, got {grid.batch_size}")
    if len(grid.settings) != len(grid.labels) or not grid.settings:
        problems.append("grid needs at least one setting, each with a label")
    if problems:
        raise ConfigError("invalid sweep grid: " + "; ".join(problems))


def load_grid(path: str | Path) -> SweepGrid:
    path = Path(path)
    return parse_grid(path.read_text(), source=str(path))


def run_repeat(dataset: LabeledDataset, arch: str, widths: tuple[int, ...], seed: int, grid: SweepGrid) -> float:
    """Train one freshly seeded model and score it on the test split."""
    cfg = sized_config(arch, dataset.num_sensors, dataset.window_length, dataset.num_classes, widths, seed=seed)
    model = build_model(cfg)
    train(
        model,
        dataset,
        TrainConfig(learning_rate=grid.learning_rate, batch_size=grid.batch_size, epochs=grid.epochs, seed=seed),
    )
    x_test, y_test = dataset.split("test")
    report = compute_metrics(confusion(predict(model, x_test), y_test, dataset.num_classes))
    return report.metric(grid.metric)


def run_sweep(dataset: LabeledDataset, grid: SweepGrid, workers: int = 1) -> list[SweepCell]:
    """Run every (arch, setting, repeat); repeat r uses seed ``grid.seed + r`` for model and shuffling.

    ``dataset`` must already be split and normalized. Cells come back in
    grid order whatever the worker count.
    """
    validate_grid(grid)
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    x_test, _ = dataset.split("test")
    if len(x_test) == 0:
        raise ConfigError("sweep needs a non-empty test split")

    cells = [
        SweepCell(model=arch, setting=label, metric=grid.metric)
        for arch in grid.archs
        for label in grid.labels
    ]
    jobs = [
        (i, arch, widths, grid.seed + r)
        for i, (arch, widths) in enumerate((a, w) for a in grid.archs for w in grid.settings)
        for r in range(grid.repeats)
    ]
    logger.info(f"Sweep: {len(cells)} cells x {grid.repeats} repeats on {workers} worker(s)")

    def _run(job: tuple[int, str, tuple[int, ...], int]) -> tuple[int, float]:
        i, arch, widths, seed = job
        value = run_repeat(dataset, arch, widths, seed, grid)
        logger.info(f"{arch} [{cells[i].setting}] seed {seed}: {grid.metric}={value:.4f}")
        return i, value

    if workers == 1:
        outcomes = [_run(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run, jobs))
    for i, value in outcomes:
        cells[i].values.append(value)
    return cells


def with_repeats(grid: SweepGrid, repeats: int | None) -> SweepGrid:
    """Command-line repeat count wins over the grid file."""
    if repeats is None:
        return grid
    grid = replace(grid, repeats=repeats)
    validate_grid(grid)
    return grid
