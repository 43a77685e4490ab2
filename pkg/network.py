"""HCG and baseline architectures: build, forward, predict, parameter counting, checkpoints."""

from __future__ import annotations

import logging
from dataclasses import MISSING, fields, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from errors import CheckpointError, ConfigError, DimensionError, ValidationError
from layers import (
    Conv1dLayer,
    DenseLayer,
    Flatten,
    ForwardTrace,
    GruLayer,
    LastStep,
    Layer,
    LstmLayer,
    argmax_class,
    argmax_classes,
    forward_stack,
)
from models import ARCHITECTURES, ModelConfig, NormStats
from numerics import Matrix, ParamTensor
from utils import fmt_float

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "HCGCKPT v1"
PARITY_TOLERANCE = 0.10
CNN_SENSOR_BAND = 5


class Model:
    """An ordered layer stack plus the flat list of its named parameters."""

    def __init__(self, cfg: ModelConfig, layers: list[Layer], norm: NormStats | None = None) -> None:
        self.cfg = cfg
        self.layers = layers
        self.norm = norm
        self.params: list[ParamTensor] = [p for layer in layers for p in layer.params]
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate parameter names in {cfg.arch} model: {names}")

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def forward(self, x: Matrix) -> tuple[Matrix, ForwardTrace]:
        return forward(self, x)

    def __repr__(self) -> str:
        return f"Model(arch={self.cfg.arch}, layers={[l.name for l in self.layers]}, params={param_count(self)})"


# ---------- configurations ----------


def default_config(arch: str, num_sensors: int, window_length: int, num_classes: int, seed: int = 0) -> ModelConfig:
    """Layer sizes of the reference experiment setup for each architecture."""
    base = ModelConfig(
        arch=arch, num_sensors=num_sensors, window_length=window_length, num_classes=num_classes, seed=seed
    )
    if arch == "hcg":
        return replace(base, conv_filters=(64, 64), conv_kernel=5, rnn_hidden=(128, 128), dense_sizes=(256, 128))
    if arch == "dnn":
        return replace(base, dense_sizes=(512, 256, 128))
    if arch == "cnn":
        return replace(base, conv_filters=(32, 64, 32), conv_kernel=5, sensor_band=CNN_SENSOR_BAND)
    if arch in ("gru", "lstm"):
        return replace(base, rnn_hidden=(64, 64, 64))
    raise ConfigError(f"unknown architecture '{arch}' (expected one of {', '.join(ARCHITECTURES)})")


def sized_config(
    arch: str,
    num_sensors: int,
    window_length: int,
    num_classes: int,
    widths: Sequence[int],
    seed: int = 0,
) -> ModelConfig:
    """A model whose trainable layers have the given widths, in order.

    HCG puts the first half (at least one) of the widths into convolution
    layers and the rest into GRU layers, with no hidden dense layers.
    """
    widths = tuple(int(w) for w in widths)
    if not widths or min(widths) < 1:
        raise ConfigError(f"layer widths must be positive and non-empty, got {widths}")
    base = replace(default_config(arch, num_sensors, window_length, num_classes, seed), dense_sizes=())
    if arch == "dnn":
        return replace(base, dense_sizes=widths)
    if arch == "cnn":
        return replace(base, conv_filters=widths)
    if arch in ("gru", "lstm"):
        return replace(base, rnn_hidden=widths)
    if len(widths) < 2:
        raise ConfigError("hcg needs at least two layers (one convolution, one GRU)")
    n_conv = max(1, len(widths) // 2)
    return replace(base, conv_filters=widths[:n_conv], rnn_hidden=widths[n_conv:])


def validate_model_config(cfg: ModelConfig) -> None:
    problems: list[str] = []
    if cfg.arch not in ARCHITECTURES:
        problems.append(f"unknown architecture '{cfg.arch}'")
    if cfg.num_sensors < 1 or cfg.window_length < 1:
        problems.append(f"input shape must be positive, got T={cfg.window_length}, N={cfg.num_sensors}")
    if cfg.num_classes < 2:
        problems.append(f"num_classes must be >= 2, got {cfg.num_classes}")
    for label, sizes in (("conv_filters", cfg.conv_filters), ("rnn_hidden", cfg.rnn_hidden), ("dense_sizes", cfg.dense_sizes)):
        if any(s < 1 for s in sizes):
            problems.append(f"{label} must be positive, got {sizes}")
    if cfg.conv_kernel < 1:
        problems.append(f"conv_kernel must be >= 1, got {cfg.conv_kernel}")
    if cfg.sensor_band is not None and cfg.sensor_band < 1:
        problems.append(f"sensor_band must be >= 1, got {cfg.sensor_band}")
    if cfg.window_stride is not None and cfg.window_stride < 1:
        problems.append(f"window_stride must be >= 1, got {cfg.window_stride}")
    if cfg.split_seed is not None and cfg.split_seed < 0:
        problems.append(f"split_seed must be >= 0, got {cfg.split_seed}")
    if cfg.arch == "hcg" and (not cfg.conv_filters or not cfg.rnn_hidden):
        problems.append("hcg needs at least one convolution layer and one GRU layer")
    if cfg.arch == "cnn" and not cfg.conv_filters:
        problems.append("cnn needs at least one convolution layer")
    if cfg.arch in ("gru", "lstm") and not cfg.rnn_hidden:
        problems.append(f"{cfg.arch} needs at least one recurrent layer")
    if problems:
        raise ConfigError("invalid model config: " + "; ".join(problems))


# ---------- building ----------


def build_model(cfg: ModelConfig, initialize: bool = True) -> Model:
    """Layer stack for ``cfg``; weights Glorot-uniform from ``cfg.seed``.

    Biases start at zero except the recurrent keep gates when ``cfg.memory_bias`` is set.

    ``initialize=False`` leaves every weight at zero (used for counting and loading).
    """
    validate_model_config(cfg)
    rng = np.random.default_rng(cfg.seed) if initialize else None
    layers: list[Layer] = []
    width = cfg.num_sensors

    if cfg.arch in ("hcg", "cnn"):
        for i, filters in enumerate(cfg.conv_filters):
            band = cfg.sensor_band if cfg.arch == "cnn" and i == 0 else None
            layers.append(Conv1dLayer(f"conv{i}", width, filters, cfg.conv_kernel, rng, bias=cfg.conv_bias, band=band))
            width = filters

    if cfg.arch in ("hcg", "gru", "lstm"):
        cell = LstmLayer if cfg.arch == "lstm" else GruLayer
        memory = cfg.window_length if cfg.memory_bias else None
        for i, hidden in enumerate(cfg.rnn_hidden):
            layers.append(cell(f"{'lstm' if cfg.arch == 'lstm' else 'gru'}{i}", width, hidden, rng, memory_steps=memory))
            width = hidden
        layers.append(LastStep())
    else:
        layers.append(Flatten())
        width = width * cfg.window_length

    for i, size in enumerate(cfg.dense_sizes):
        layers.append(DenseLayer(f"dense{i}", width, size, rng, activation="relu"))
        width = size
    layers.append(DenseLayer("out", width, cfg.num_classes, rng))
    return Model(cfg, layers)


def _check_input(model: Model, x: Matrix) -> tuple[Matrix, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 2
    xb = x[np.newaxis] if single else x
    expected = (model.cfg.window_length, model.cfg.num_sensors)
    if xb.ndim != 3 or xb.shape[1:] != expected:
        raise DimensionError(f"input shape {x.shape} does not match model input (T, N) = {expected}")
    return xb, single


def forward(model: Model, x: Matrix) -> tuple[Matrix, ForwardTrace]:
    """Class probabilities for one (T, N) window or a (B, T, N) batch, with the trace for backward."""
    xb, single = _check_input(model, x)
    probs, trace = forward_stack(model.layers, xb)
    return (probs[0] if single else probs), trace


def predict(model: Model, x: Matrix) -> int | np.ndarray:
    """Most probable class of one window, or of each window in a batch."""
    probs, _ = forward(model, x)
    if probs.ndim == 1:
        return argmax_class(probs)
    return argmax_classes(probs)


def predict_proba(model: Model, windows: Matrix, chunk: int = 256) -> Matrix:
    """Batched probabilities without keeping traces."""
    windows = np.asarray(windows, dtype=np.float64)
    if windows.shape[0] == 0:
        return np.zeros((0, model.cfg.num_classes))
    parts = [forward(model, windows[i : i + chunk])[0] for i in range(0, windows.shape[0], chunk)]
    return np.concatenate(parts, axis=0)


def param_count(model: Model) -> int:
    return sum(p.size for p in model.params)


def count_params(cfg: ModelConfig) -> int:
    return param_count(build_model(cfg, initialize=False))


# ---------- parameter parity ----------


def _width_fields(arch: str) -> tuple[str, ...]:
    if arch == "dnn":
        return ("dense_sizes",)
    if arch == "cnn":
        return ("conv_filters", "dense_sizes")
    if arch in ("gru", "lstm"):
        return ("rnn_hidden", "dense_sizes")
    return ("conv_filters", "rnn_hidden", "dense_sizes")


def _scaled(cfg: ModelConfig, factor: float) -> ModelConfig:
    updates = {
        name: tuple(max(1, int(round(w * factor))) for w in getattr(cfg, name)) for name in _width_fields(cfg.arch)
    }
    return replace(cfg, **updates)


def parity_config(base: ModelConfig, reference_count: int, tolerance: float = PARITY_TOLERANCE) -> ModelConfig:
    """Scale every width of ``base`` by one factor so its size lands near ``reference_count``."""
    lo, hi = 1e-3, 1e3
    for _ in range(40):
        mid = (lo * hi) ** 0.5
        if count_params(_scaled(base, mid)) < reference_count:
            lo = mid
        else:
            hi = mid
    candidates = [_scaled(base, lo), _scaled(base, hi)]
    best = min(candidates, key=lambda c: abs(count_params(c) - reference_count))
    got = count_params(best)
    if abs(got - reference_count) > tolerance * reference_count:
        raise ConfigError(
            f"cannot bring {base.arch} within {tolerance:.0%} of {reference_count} parameters (closest: {got})"
        )
    logger.info(f"{base.arch} at parity: {got} parameters (reference {reference_count})")
    return best


# ---------- checkpoints ----------


def _config_lines(cfg: ModelConfig) -> list[str]:
    lines = []
    for f in fields(ModelConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            text = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif value is None:
            text = "none"
        else:
            text = str(value)
        lines.append(f"{f.name} = {text}")
    return lines


def _config_value(key: str, text: str) -> Any:
    if key == "arch":
        return text
    if key in ("conv_filters", "rnn_hidden", "dense_sizes"):
        return tuple(int(v) for v in text.split(",") if v)
    if key in ("conv_bias", "memory_bias"):
        return text == "true"
    if key in ("sensor_band", "window_stride", "split_seed"):
        return None if text == "none" else int(text)
    return int(text)


def _parse_config(lines: list[str]) -> ModelConfig:
    values: dict[str, Any] = {}
    known = {f.name for f in fields(ModelConfig)}
    for line in lines:
        key, sep, text = line.partition("=")
        key, text = key.strip(), text.strip()
        if not sep or key not in known:
            raise CheckpointError(f"bad config line {line!r}")
        try:
            values[key] = _config_value(key, text)
        except ValueError:
            raise CheckpointError(f"bad value in config line {line!r}") from None
    required = {f.name for f in fields(ModelConfig) if f.default is MISSING and f.default_factory is MISSING}
    missing = required - values.keys()
    if missing:
        raise CheckpointError(f"config block is missing {', '.join(sorted(missing))}")
    return ModelConfig(**values)


def save_checkpoint(model: Model, path: str | Path) -> None:
    """Plain-text checkpoint; floats use shortest round-trip decimals so reloads are bit-exact."""
    out = [CHECKPOINT_MAGIC, "[config]", *_config_lines(model.cfg), "[tensors]"]
    for p in model.params:
        out.append(f"{p.name} {'x'.join(str(d) for d in p.shape)}")
        out.append(" ".join(fmt_float(v) for v in p.value.reshape(-1)))
    if model.norm is not None:
        out.append("[norm]")
        out.append(" ".join(fmt_float(v) for v in model.norm.mean))
        out.append(" ".join(fmt_float(v) for v in model.norm.std))
    out.append("[end]")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    logger.info(f"Saved {model.cfg.arch} checkpoint ({param_count(model)} parameters) to {path}")


def load_checkpoint(path: str | Path) -> Model:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != CHECKPOINT_MAGIC:
        found = lines[0].strip() if lines else "<empty file>"
        raise CheckpointError(f"{path}: expected format '{CHECKPOINT_MAGIC}', found {found!r}")
    if lines[-1].strip() != "[end]":
        raise CheckpointError(f"{path}: file is truncated (no [end] marker)")
    try:
        cfg_start = lines.index("[config]")
        tensors_start = lines.index("[tensors]")
    except ValueError:
        raise CheckpointError(f"{path}: missing [config] or [tensors] section") from None
    cfg = _parse_config(lines[cfg_start + 1 : tensors_start])
    try:
        model = build_model(cfg, initialize=False)
    except ConfigError as exc:
        raise CheckpointError(f"{path}: {exc}") from None

    body = lines[tensors_start + 1 : -1]
    norm_lines: list[str] = []
    if "[norm]" in body:
        cut = body.index("[norm]")
        body, norm_lines = body[:cut], body[cut + 1 :]
    if len(body) != 2 * len(model.params):
        raise CheckpointError(f"{path}: expected {len(model.params)} tensors, found {len(body) // 2}")
    for p, header, data in zip(model.params, body[0::2], body[1::2]):
        name, _, shape_text = header.partition(" ")
        if name != p.name:
            raise CheckpointError(f"{path}: expected tensor '{p.name}', found '{name}'")
        try:
            shape = tuple(int(d) for d in shape_text.split("x"))
        except ValueError:
            raise CheckpointError(f"{path}: bad shape {shape_text!r} for tensor '{name}'") from None
        if shape != p.shape:
            raise CheckpointError(f"{path}: tensor '{name}' has shape {shape}, config implies {p.shape}")
        try:
            values = np.array([float(v) for v in data.split()], dtype=np.float64)
        except ValueError:
            raise CheckpointError(f"{path}: tensor '{name}' holds a non-numeric value") from None
        if values.size != p.value.size:
            raise CheckpointError(f"{path}: tensor '{name}' has {values.size} values, expected {p.value.size}")
        p.value[...] = values.reshape(p.shape)
    if norm_lines:
        if len(norm_lines) != 2:
            raise CheckpointError(f"{path}: malformed [norm] section")
        try:
            mean = np.array([float(v) for v in norm_lines[0].split()])
            std = np.array([float(v) for v in norm_lines[1].split()])
        except ValueError:
            raise CheckpointError(f"{path}: non-numeric value in [norm] section") from None
        if mean.shape != (cfg.num_sensors,) or std.shape != (cfg.num_sensors,):
            raise CheckpointError(f"{path}: normalization covers {mean.size} sensors, config has {cfg.num_sensors}")
        model.norm = NormStats(mean=mean, std=std)
    logger.info(f"Loaded {cfg.arch} checkpoint from {path}")
    return model


def parse_arch(name: str) -> str:
    arch = name.strip().lower()
    if arch not in ARCHITECTURES:
        raise ValidationError(f"unknown architecture '{name}' (expected one of {', '.join(ARCHITECTURES)})")
    return arch
