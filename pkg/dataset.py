"""Sensor recordings, windows, normalization, synthetic damage states and splits."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import fields, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from config import SPLIT_FRACTIONS, WINDOW_LENGTH, WINDOW_STRIDE
from errors import ConfigError, DataFormatError, DimensionError, ValidationError
from models import LabeledDataset, NormStats, SensorRecording, SynthConfig
from utils import fmt_float, parse_float_list, parse_key_value_text

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.csv"
STD_FLOOR = 1e-8

SYNTH_PRESETS: dict[str, SynthConfig] = {
    "default": SynthConfig(),
    "hard": SynthConfig(noise_std=0.7, frequency_shift=0.04, amplitude_shift=0.08, samples_per_class=300),
    "benchmark": SynthConfig(
        num_classes=7,
        num_sensors=16,
        samples_per_class=100,
        base_frequencies=(6.0, 17.0, 29.0, 44.0),
        base_amplitudes=(1.0, 0.7, 0.5, 0.35),
        frequency_shift=0.04,
        sample_rate_hz=250.0,
    ),
}


# ---------- CSV ingestion ----------


def load_recording(path: str | Path, label: int = 0, sample_rate_hz: float = 0.0) -> SensorRecording:
    """Read a headerless numeric CSV: one row per timestep, one column per sensor."""
    path = Path(path)
    if not path.is_file():
        raise DataFormatError("file not found", path=str(path))
    rows: list[list[float]] = []
    width: int | None = None
    with path.open(encoding="utf-8", newline="") as fh:
        for r, record in enumerate(csv.reader(fh), 1):
            if not record or all(not cell.strip() for cell in record):
                continue
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise DataFormatError(f"expected {width} columns, found {len(record)}", path=str(path), row=r)
            values: list[float] = []
            for c, cell in enumerate(record, 1):
                try:
                    v = float(cell.strip())
                except ValueError:
                    raise DataFormatError(f"non-numeric value {cell!r}", path=str(path), row=r, col=c) from None
                if not math.isfinite(v):
                    raise DataFormatError(f"non-finite value {cell!r}", path=str(path), row=r, col=c)
                values.append(v)
            rows.append(values)
    if not rows:
        raise DataFormatError("no data rows", path=str(path))
    return SensorRecording(values=np.array(rows, dtype=np.float64), sample_rate_hz=sample_rate_hz, label=label, source=str(path))


def write_recording(values: np.ndarray, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        for row in values:
            fh.write(",".join(fmt_float(v) for v in row) + "\n")


def read_manifest(data_dir: str | Path) -> list[tuple[Path, int]]:
    """Rows of ``manifest.csv`` (header ``path,label``) with paths resolved against ``data_dir``."""
    data_dir = Path(data_dir)
    manifest = data_dir / MANIFEST_NAME
    if not manifest.is_file():
        raise DataFormatError("manifest not found", path=str(manifest))
    entries: list[tuple[Path, int]] = []
    with manifest.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["path", "label"]:
            raise DataFormatError("header must be 'path,label'", path=str(manifest), row=1)
        for r, row in enumerate(reader, 2):
            try:
                label = int(row["label"])
            except (TypeError, ValueError):
                raise DataFormatError(f"label {row.get('label')!r} is not an integer", path=str(manifest), row=r, col=2) from None
            if label < 0:
                raise DataFormatError(f"label {label} is negative", path=str(manifest), row=r, col=2)
            entries.append((data_dir / row["path"].strip(), label))
    return entries


def write_manifest(data_dir: str | Path, entries: Sequence[tuple[str, int]]) -> Path:
    path = Path(data_dir) / MANIFEST_NAME
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("path,label\n")
        for name, label in entries:
            fh.write(f"{name},{label}\n")
    return path


# ---------- input matrix and windows ----------


def build_input_matrix(series: Sequence[Sequence[float]]) -> np.ndarray:
    """Stack N equal-length sensor series as the columns of a T×N matrix."""
    if not series:
        raise DimensionError("need at least one sensor series")
    arrays = [np.asarray(s, dtype=np.float64).reshape(-1) for s in series]
    length = arrays[0].size
    for i, a in enumerate(arrays):
        if a.size != length:
            raise DimensionError(f"sensor {i} has length {a.size}, expected {length} (sensor 0)")
    return np.column_stack(arrays)


def make_windows(rec: SensorRecording, length: int, stride: int) -> list[np.ndarray]:
    """Windows starting at 0, S, 2S, ...; floor((T-L)/S)+1 of them."""
    if length < 1 or stride < 1:
        raise ValidationError(f"window length and stride must be >= 1, got {length} and {stride}")
    t = rec.num_timesteps
    if length > t:
        logger.warning(f"{rec.source}: window length {length} exceeds recording length {t}; no windows")
        return []
    count = (t - length) // stride + 1
    return [rec.values[i * stride : i * stride + length].copy() for i in range(count)]


# ---------- normalization ----------


def fit_normalization(train_windows: np.ndarray | Sequence[np.ndarray]) -> NormStats:
    """Per-sensor mean and std over all timesteps of the training windows."""
    stacked = np.asarray(train_windows, dtype=np.float64)
    if stacked.ndim == 2:
        stacked = stacked[np.newaxis]
    if stacked.shape[0] < 1:
        raise ValidationError("need at least one training window to fit normalization")
    flat = stacked.reshape(-1, stacked.shape[-1])
    mean = flat.mean(axis=0)
    std = np.maximum(flat.std(axis=0), STD_FLOOR)
    return NormStats(mean=mean, std=std)


def apply_normalization(stats: NormStats, window: np.ndarray) -> np.ndarray:
    window = np.asarray(window, dtype=np.float64)
    if window.shape[-1] != stats.mean.shape[0]:
        raise DimensionError(f"window has {window.shape[-1]} sensors, statistics cover {stats.mean.shape[0]}")
    return (window - stats.mean) / stats.std


# ---------- synthetic damage states ----------


def default_spatial_weights(num_modes: int, num_sensors: int) -> np.ndarray:
    """Mode shapes of a simply supported beam sampled at evenly spaced sensors."""
    m = np.arange(1, num_modes + 1)[:, np.newaxis]
    i = np.arange(1, num_sensors + 1)[np.newaxis, :]
    return np.sin(m * np.pi * i / (num_sensors + 1))


def validate_synth_config(cfg: SynthConfig) -> None:
    problems: list[str] = []
    if cfg.num_classes < 1:
        problems.append(f"num_classes must be >= 1, got {cfg.num_classes}")
    if cfg.num_sensors < 1 or cfg.window_length < 1:
        problems.append("num_sensors and window_length must be >= 1")
    if cfg.samples_per_class < 1:
        problems.append(f"samples_per_class must be >= 1, got {cfg.samples_per_class}")
    if not cfg.base_frequencies or len(cfg.base_frequencies) != len(cfg.base_amplitudes):
        problems.append("base_frequencies and base_amplitudes must be non-empty and of equal length")
    if cfg.noise_std < 0:
        problems.append(f"noise_std must be >= 0, got {cfg.noise_std}")
    if cfg.sample_rate_hz <= 0:
        problems.append(f"sample_rate_hz must be positive, got {cfg.sample_rate_hz}")
    nyquist = cfg.sample_rate_hz / 2.0
    for c in range(max(cfg.num_classes, 0)):
        for f in cfg.class_frequencies(c):
            if not 0.0 < f < nyquist:
                problems.append(f"class {c} frequency {f:.4g} Hz is outside (0, {nyquist:.4g}) Hz (Nyquist)")
    if cfg.spatial_weights is not None:
        w = np.asarray(cfg.spatial_weights, dtype=np.float64)
        if w.shape != (len(cfg.base_frequencies), cfg.num_sensors):
            problems.append(
                f"spatial_weights must be {len(cfg.base_frequencies)}x{cfg.num_sensors} (modes x sensors), got {w.shape}"
            )
    if problems:
        raise ConfigError("invalid synthetic config: " + "; ".join(problems))


def synth_generate(cfg: SynthConfig) -> LabeledDataset:
    """Sum of sinusoidal modes per damage class, with shared mode shapes across sensors."""
    validate_synth_config(cfg)
    rng = np.random.default_rng(cfg.seed)
    n_modes = len(cfg.base_frequencies)
    weights = (
        np.asarray(cfg.spatial_weights, dtype=np.float64)
        if cfg.spatial_weights is not None
        else default_spatial_weights(n_modes, cfg.num_sensors)
    )
    t = np.arange(cfg.window_length, dtype=np.float64)
    total = cfg.num_classes * cfg.samples_per_class
    windows = np.empty((total, cfg.window_length, cfg.num_sensors))
    labels = np.empty(total, dtype=np.int64)
    k = 0
    for c in range(cfg.num_classes):
        freqs = np.asarray(cfg.class_frequencies(c))
        amps = np.asarray(cfg.class_amplitudes(c))
        for _ in range(cfg.samples_per_class):
            phases = rng.uniform(0.0, 2.0 * np.pi, size=n_modes)
            # (T, modes) modal responses, mixed onto sensors by the mode shapes
            modal = amps * np.sin(2.0 * np.pi * np.outer(t, freqs) / cfg.sample_rate_hz + phases)
            signal = modal @ weights
            if cfg.noise_std > 0:
                signal = signal + rng.normal(0.0, cfg.noise_std, size=signal.shape)
            windows[k] = signal
            labels[k] = c
            k += 1
    logger.info(f"Generated {total} synthetic windows ({cfg.num_classes} classes x {cfg.samples_per_class})")
    return LabeledDataset(
        windows=windows,
        labels=labels,
        num_classes=cfg.num_classes,
        class_names=tuple(f"DC{c}" for c in range(cfg.num_classes)),
    )


def _synth_value(name: str, raw: str, template: Any) -> Any:
    if name == "spatial_weights":
        return tuple(parse_float_list(row) for row in raw.split(";") if row.strip())
    if isinstance(template, tuple):
        return parse_float_list(raw)
    if isinstance(template, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(template, int):
        return int(raw)
    return float(raw)


def parse_synth_config(text: str, source: str = "synthetic config") -> SynthConfig:
    """Flat ``key = value`` text; ``preset`` picks the starting point, unknown keys are errors."""
    entries = parse_key_value_text(text, source)
    base = SYNTH_PRESETS["default"]
    preset = entries.pop("preset", None)
    if preset is not None:
        if preset not in SYNTH_PRESETS:
            raise ConfigError(f"{source}: unknown preset '{preset}' (available: {', '.join(SYNTH_PRESETS)})")
        base = SYNTH_PRESETS[preset]
    known = {f.name: getattr(base, f.name) for f in fields(SynthConfig)}
    updates: dict[str, Any] = {}
    for key, raw in entries.items():
        if key not in known:
            raise ConfigError(f"{source}: unknown key '{key}'")
        try:
            updates[key] = _synth_value(key, raw, known[key] if known[key] is not None else ())
        except ValueError as exc:
            raise ConfigError(f"{source}: bad value for '{key}': {raw!r} ({exc})") from None
    cfg = replace(base, **updates)
    validate_synth_config(cfg)
    return cfg


def load_synth_config(path: str | Path) -> SynthConfig:
    path = Path(path)
    return parse_synth_config(path.read_text(encoding="utf-8"), source=str(path))


def write_dataset(ds: LabeledDataset, out_dir: str | Path) -> Path:
    """One recording CSV per window plus ``manifest.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries: list[tuple[str, int]] = []
    for i, (window, label) in enumerate(zip(ds.windows, ds.labels)):
        name = f"rec_{i:05d}.csv"
        write_recording(window, out_dir / name)
        entries.append((name, int(label)))
    return write_manifest(out_dir, entries)


# ---------- splits ----------


def split_dataset(
    ds: LabeledDataset,
    fractions: tuple[float, float, float] = SPLIT_FRACTIONS,
    seed: int = 0,
) -> LabeledDataset:
    """Stratified split: per class, shuffle by seed, floor val/test counts, rest to train."""
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"split fractions must be three non-negative values summing to 1, got {fractions}")
    _, f_val, f_test = fractions
    if len(ds) and (ds.labels.min() < 0 or ds.labels.max() >= ds.num_classes):
        raise ValidationError(f"labels must lie in [0, {ds.num_classes})")
    rng = np.random.default_rng(seed)
    splits = np.empty(len(ds), dtype="<U5")
    for c in range(ds.num_classes):
        idx = np.flatnonzero(ds.labels == c)
        if idx.size < 3:
            raise ValidationError(f"class {c} has {idx.size} samples; at least 3 are needed to stratify")
        idx = idx[rng.permutation(idx.size)]
        n_val = int(math.floor(f_val * idx.size + 1e-9))
        n_test = int(math.floor(f_test * idx.size + 1e-9))
        splits[idx[:n_val]] = "val"
        splits[idx[n_val : n_val + n_test]] = "test"
        if n_val + n_test >= idx.size:
            raise ValidationError(f"class {c} would have no training windows with fractions {fractions}")
        splits[idx[n_val + n_test :]] = "train"
    return replace(ds, splits=splits)


def normalize_dataset(ds: LabeledDataset, stats: NormStats | None = None) -> tuple[LabeledDataset, NormStats]:
    """Z-score every window with training-split statistics (fitted here unless given)."""
    if stats is None:
        train_x, _ = ds.split("train")
        stats = fit_normalization(train_x)
    return replace(ds, windows=apply_normalization(stats, ds.windows)), stats


def load_dataset(
    data_dir: str | Path,
    window_length: int = WINDOW_LENGTH,
    stride: int = WINDOW_STRIDE,
    num_classes: int | None = None,
) -> LabeledDataset:
    """Read a manifest directory and cut every recording into labeled windows."""
    entries = read_manifest(data_dir)
    if not entries:
        raise DataFormatError("manifest lists no recordings", path=str(Path(data_dir) / MANIFEST_NAME))
    windows: list[np.ndarray] = []
    labels: list[int] = []
    width: int | None = None
    for path, label in entries:
        rec = load_recording(path, label=label)
        if width is None:
            width = rec.num_sensors
        elif rec.num_sensors != width:
            raise DataFormatError(f"has {rec.num_sensors} sensors, expected {width}", path=str(path))
        for w in make_windows(rec, window_length, stride):
            windows.append(w)
            labels.append(label)
    if not windows:
        raise DataFormatError(f"no recording is long enough for window length {window_length}", path=str(data_dir))
    n_classes = num_classes if num_classes is not None else max(labels) + 1
    if max(labels) >= n_classes:
        raise ValidationError(f"label {max(labels)} is out of range for {n_classes} classes")
    logger.info(f"Loaded {len(windows)} windows from {len(entries)} recordings in {data_dir}")
    return LabeledDataset(
        windows=np.stack(windows),
        labels=np.asarray(labels, dtype=np.int64),
        num_classes=n_classes,
        class_names=tuple(f"DC{c}" for c in range(n_classes)),
    )
