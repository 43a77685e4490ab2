"""Finite-difference gradient suite for every layer type and a tiny end-to-end HCG."""

from __future__ import annotations

import logging
from typing import Callable, Sequence

import numpy as np

from layers import (
    Conv1dLayer,
    DenseLayer,
    GruLayer,
    Layer,
    LstmLayer,
    backward,
    mse_loss,
    mse_softmax_backward,
    one_hot,
    softmax,
)
from models import GradCheckResult, ModelConfig
from network import build_model, forward
from numerics import ParamTensor, finite_difference_gradient, max_relative_error, zero_grads

logger = logging.getLogger(__name__)

TOLERANCE = 1e-4
FD_STEP = 1e-5
DEFAULT_SEEDS = 20


def _jitter(params: Sequence[ParamTensor], rng: np.random.Generator, scale: float = 0.1) -> None:
    # biases start at zero; give every entry a nonzero value
    for p in params:
        noise = rng.normal(0.0, scale, p.shape)
        if p.mask is not None:
            noise = noise * p.mask
        p.value += noise


def _layer_error(layer: Layer, x: np.ndarray, rng: np.random.Generator) -> float:
    """Worst relative error of parameter and input gradients of sum(w * layer(x))."""
    _jitter(layer.params, rng)
    out, _ = layer.forward(x)
    weights = rng.normal(size=out.shape)
    x_param = ParamTensor("input", x.copy())

    def loss() -> float:
        return float(np.sum(weights * layer.forward(x_param.value)[0]))

    zero_grads(layer.params)
    _, cache = layer.forward(x_param.value)
    dx = layer.backward(weights, cache)
    analytic = [p.grad.copy() for p in layer.params] + [dx]
    numeric = finite_difference_gradient(loss, [*layer.params, x_param], h=FD_STEP)
    return max_relative_error(analytic, numeric)


def check_conv1d(seed: int) -> float:
    rng = np.random.default_rng(seed)
    layer = Conv1dLayer("conv", 3, 4, 3, rng)
    return _layer_error(layer, rng.normal(size=(2, 6, 3)), rng)


def check_conv1d_banded(seed: int) -> float:
    rng = np.random.default_rng(seed)
    layer = Conv1dLayer("conv", 5, 4, 3, rng, band=3)
    return _layer_error(layer, rng.normal(size=(2, 6, 5)), rng)


def check_gru(seed: int) -> float:
    rng = np.random.default_rng(seed)
    layer = GruLayer("gru", 3, 4, rng)
    return _layer_error(layer, rng.normal(size=(2, 8, 3)), rng)


def check_lstm(seed: int) -> float:
    rng = np.random.default_rng(seed)
    layer = LstmLayer("lstm", 3, 4, rng)
    return _layer_error(layer, rng.normal(size=(2, 8, 3)), rng)


def check_dense(seed: int) -> float:
    rng = np.random.default_rng(seed)
    layer = DenseLayer("dense", 5, 4, rng, activation="relu")
    return _layer_error(layer, rng.normal(size=(3, 5)), rng)


def check_softmax_mse(seed: int) -> float:
    rng = np.random.default_rng(seed)
    logits = ParamTensor("logits", rng.normal(size=(3, 4)))
    target = one_hot(rng.integers(0, 4, size=3), 4)
    analytic = mse_softmax_backward(softmax(logits.value), target)
    numeric = finite_difference_gradient(lambda: mse_loss(softmax(logits.value), target), [logits], h=FD_STEP)
    return max_relative_error([analytic], numeric)


def check_hcg(seed: int) -> float:
    cfg = ModelConfig(
        arch="hcg",
        num_sensors=3,
        window_length=8,
        num_classes=3,
        conv_filters=(4,),
        conv_kernel=3,
        rnn_hidden=(4,),
        dense_sizes=(5,),
        seed=seed,
    )
    model = build_model(cfg)
    rng = np.random.default_rng(seed + 1)
    _jitter(model.params, rng)
    x = rng.normal(size=(2, 8, 3))
    target = one_hot(rng.integers(0, 3, size=2), 3)

    model.zero_grad()
    probs, trace = forward(model, x)
    backward(trace, mse_softmax_backward(probs, target))
    analytic = [p.grad.copy() for p in model.params]
    numeric = finite_difference_gradient(lambda: mse_loss(forward(model, x)[0], target), model.params, h=FD_STEP)
    return max_relative_error(analytic, numeric)


CHECKS: dict[str, Callable[[int], float]] = {
    "conv1d": check_conv1d,
    "conv1d_banded": check_conv1d_banded,
    "gru": check_gru,
    "lstm": check_lstm,
    "dense": check_dense,
    "softmax_mse": check_softmax_mse,
    "hcg": check_hcg,
}


def run_gradcheck(seeds: Sequence[int], tolerance: float = TOLERANCE) -> list[GradCheckResult]:
    """Run every check over ``seeds``; a check passes when its worst error stays below ``tolerance``."""
    results: list[GradCheckResult] = []
    for name, check in CHECKS.items():
        worst = max(check(s) for s in seeds)
        result = GradCheckResult(name=name, seeds=len(seeds), max_error=worst, passed=worst < tolerance)
        level = logging.INFO if result.passed else logging.ERROR
        logger.log(level, f"gradcheck {name}: max relative error {worst:.3e} over {len(seeds)} seeds")
        results.append(result)
    return results
