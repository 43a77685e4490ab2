"""Adam optimization of the summed squared-error loss, with per-epoch history."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from errors import ConfigError, DimensionError, TrainingError, ValidationError
from layers import argmax_classes, backward, mse_loss, mse_softmax_backward, one_hot
from models import History, LabeledDataset, TrainConfig
from network import Model, forward, predict_proba
from numerics import Matrix, ParamTensor
from utils import fmt_float

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


@dataclass
class AdamState:
    """First/second moment estimates keyed by parameter name, plus the step count."""

    m: dict[str, Matrix] = field(default_factory=dict)
    v: dict[str, Matrix] = field(default_factory=dict)
    t: int = 0


def validate_train_config(cfg: TrainConfig) -> None:
    problems: list[str] = []
    # lr == 0 is allowed: it freezes the parameters while still recording history
    if not np.isfinite(cfg.learning_rate) or cfg.learning_rate < 0:
        problems.append(f"learning_rate must be >= 0, got {cfg.learning_rate}")
    if cfg.batch_size < 1:
        problems.append(f"batch_size must be >= 1, got {cfg.batch_size}")
    if cfg.epochs < 1:
        problems.append(f"epochs must be >= 1, got {cfg.epochs}")
    if not (0.0 <= cfg.beta1 < 1.0 and 0.0 <= cfg.beta2 < 1.0):
        problems.append(f"Adam betas must lie in [0, 1), got ({cfg.beta1}, {cfg.beta2})")
    if cfg.eps <= 0:
        problems.append(f"eps must be positive, got {cfg.eps}")
    if problems:
        raise ConfigError("invalid training config: " + "; ".join(problems))


def adam_step(params: Sequence[ParamTensor], state: AdamState, cfg: TrainConfig) -> None:
    """One bias-corrected Adam update of every parameter from its accumulated ``grad``."""
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise TrainingError(f"non-finite gradient in parameter '{p.name}'")
    state.t += 1
    bc1 = 1.0 - cfg.beta1**state.t
    bc2 = 1.0 - cfg.beta2**state.t
    for p in params:
        g = p.grad
        if p.name not in state.m:
            state.m[p.name] = np.zeros_like(p.value)
            state.v[p.name] = np.zeros_like(p.value)
        m = state.m[p.name]
        v = state.v[p.name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p.value -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)


def _check_compatible(model: Model, dataset: LabeledDataset) -> None:
    cfg = model.cfg
    got = (dataset.window_length, dataset.num_sensors, dataset.num_classes)
    expected = (cfg.window_length, cfg.num_sensors, cfg.num_classes)
    if got != expected:
        raise DimensionError(f"dataset (T, N, classes) = {got} does not match model {expected}")


def evaluate(model: Model, x: Matrix, y: np.ndarray) -> tuple[float, float]:
    """Summed squared-error loss over ``(x, y)`` and the fraction predicted correctly."""
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ValidationError("cannot evaluate on an empty split")
    probs = predict_proba(model, x)
    loss = mse_loss(probs, one_hot(y, model.cfg.num_classes))
    accuracy = float(np.mean(argmax_classes(probs) == y))
    return loss, accuracy


def train(
    model: Model,
    dataset: LabeledDataset,
    cfg: TrainConfig,
    on_epoch: Callable[[int, History], None] | None = None,
) -> History:
    """Train ``model`` in place on the dataset's train split; the last-epoch weights are kept.

    The History losses are per-sample means of the summed loss so curves
    compare across batch sizes; the optimizer follows the gradient of the
    raw batch sum.
    """
    validate_train_config(cfg)
    _check_compatible(model, dataset)
    x_train, y_train = dataset.split("train")
    x_val, y_val = dataset.split("val")
    n = int(y_train.size)
    if n == 0:
        raise TrainingError("training split is empty")
    if y_val.size == 0:
        logger.warning("validation split is empty; val_loss and val_acc are recorded as nan")
    targets = one_hot(y_train, dataset.num_classes)

    state = AdamState()
    history = History()
    for epoch in range(1, cfg.epochs + 1):
        if cfg.shuffle:
            order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        else:
            order = np.arange(n)
        loss_sum = 0.0
        correct = 0
        for batch, start in enumerate(range(0, n, cfg.batch_size), 1):
            idx = order[start : start + cfg.batch_size]
            model.zero_grad()
            probs, trace = forward(model, x_train[idx])
            loss = mse_loss(probs, targets[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch}, batch {batch}")
            backward(trace, mse_softmax_backward(probs, targets[idx]))
            try:
                adam_step(model.params, state, cfg)
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch}, batch {batch}: {exc}") from None
            loss_sum += loss
            correct += int(np.sum(argmax_classes(probs) == y_train[idx]))

        history.train_loss.append(loss_sum / n)
        history.train_acc.append(correct / n)
        if y_val.size:
            val_loss, val_acc = evaluate(model, x_val, y_val)
            history.val_loss.append(val_loss / y_val.size)
            history.val_acc.append(val_acc)
        else:
            history.val_loss.append(float("nan"))
            history.val_acc.append(float("nan"))
        logger.info(
            f"epoch {epoch}/{cfg.epochs}: train_loss={history.train_loss[-1]:.5f} "
            f"train_acc={history.train_acc[-1]:.4f} val_loss={history.val_loss[-1]:.5f} "
            f"val_acc={history.val_acc[-1]:.4f}"
        )
        if on_epoch is not None:
            on_epoch(epoch, history)
    return history


def write_history_csv(history: History, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for i in range(history.epochs):
            writer.writerow(
                [
                    i + 1,
                    fmt_float(history.train_loss[i]),
                    fmt_float(history.train_acc[i]),
                    fmt_float(history.val_loss[i]),
                    fmt_float(history.val_acc[i]),
                ]
            )
    return path


def history_path(checkpoint: str | Path) -> Path:
    checkpoint = Path(checkpoint)
    return checkpoint.with_name(checkpoint.name + ".history.csv")
