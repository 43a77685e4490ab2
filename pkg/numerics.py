"""Dense float64 matrix helpers, activations and the finite-difference gradient oracle.

A ``Matrix`` is a plain ``numpy.ndarray`` of dtype float64. Layers keep their
weights in ``ParamTensor`` objects so optimizers and gradient checks can walk
a flat list of named parameters.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from errors import DimensionError, GradientCheckError, ValidationError

logger = logging.getLogger(__name__)

Matrix = np.ndarray

ACTIVATIONS = ("relu", "sigmoid", "tanh")


def as_matrix(values, rows: int | None = None, cols: int | None = None) -> Matrix:
    """Convert nested sequences to a finite 2-D float64 array."""
    m = np.array(values, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {m.shape}")
    if rows is not None and m.shape[0] != rows or cols is not None and m.shape[1] != cols:
        raise DimensionError(f"expected shape ({rows}, {cols}), got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("matrix contains NaN or Inf")
    return m


@dataclass
class ParamTensor:
    """A named trainable block with its gradient accumulator.

    ``mask`` (optional, same shape) marks the entries that are trainable;
    masked-out entries keep a zero gradient and are not counted.
    """

    name: str
    value: Matrix
    grad: Matrix = field(default=None, repr=False)  # type: ignore[assignment]
    mask: Matrix | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        self.value = np.ascontiguousarray(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise DimensionError(f"{self.name}: grad shape {self.grad.shape} != value shape {self.value.shape}")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=np.float64)
            if self.mask.shape != self.value.shape:
                raise DimensionError(f"{self.name}: mask shape {self.mask.shape} != value shape {self.value.shape}")
            self.value = self.value * self.mask

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        if self.mask is not None:
            return int(np.count_nonzero(self.mask))
        return int(self.value.size)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def accumulate(self, g: Matrix) -> None:
        if g.shape != self.value.shape:
            raise DimensionError(f"{self.name}: gradient shape {g.shape} != parameter shape {self.value.shape}")
        if self.mask is not None:
            g = g * self.mask
        self.grad += g


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product with an explicit shape check."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def sigmoid(x: Matrix) -> Matrix:
    # exp of a non-positive argument only, so nothing overflows
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def activate(x: Matrix, kind: str) -> Matrix:
    """Elementwise relu, sigmoid or tanh."""
    x = np.asarray(x, dtype=np.float64)
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return np.tanh(x)
    raise ValidationError(f"unknown activation '{kind}' (expected one of {', '.join(ACTIVATIONS)})")


def activation_grad(out: Matrix, kind: str) -> Matrix:
    """Derivative of the activation expressed through its output."""
    if kind == "relu":
        return (out > 0.0).astype(np.float64)
    if kind == "sigmoid":
        return out * (1.0 - out)
    if kind == "tanh":
        return 1.0 - out * out
    raise ValidationError(f"unknown activation '{kind}'")


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> Matrix:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def memory_gate_bias(rng: np.random.Generator, size: int, max_steps: int) -> Matrix:
    """Keep-gate biases log(U(1, max_steps - 1)): unit memories spread from one step to the whole window."""
    high = max(float(max_steps) - 1.0, 1.0)
    return np.log(rng.uniform(1.0, high, size=size))


def zero_grads(params: Sequence[ParamTensor]) -> None:
    for p in params:
        p.zero_grad()


def finite_difference_gradient(
    loss_fn: Callable[[], float],
    params: Sequence[ParamTensor],
    h: float = 1e-5,
) -> list[Matrix]:
    """Central-difference gradient of ``loss_fn`` w.r.t. every entry of ``params``.

    ``loss_fn`` reads the parameters in place; each perturbed entry is restored
    to its exact original value afterwards. Masked-out entries are skipped
    and report zero.
    """
    if h <= 0:
        raise ValidationError(f"step h must be positive, got {h}")
    grads: list[Matrix] = []
    for p in params:
        g = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        mask = None if p.mask is None else p.mask.reshape(-1)
        for i in range(flat.size):
            if mask is not None and mask[i] == 0.0:
                continue
            original = flat[i]
            flat[i] = original + h
            plus = float(loss_fn())
            flat[i] = original - h
            minus = float(loss_fn())
            flat[i] = original
            if not (np.isfinite(plus) and np.isfinite(minus)):
                raise GradientCheckError(f"non-finite loss probing {p.name}[{i}]")
            g.reshape(-1)[i] = (plus - minus) / (2.0 * h)
        grads.append(g)
    return grads


def relative_error(analytic: Matrix, numeric: Matrix, floor: float = 1e-8) -> Matrix:
    """Elementwise |a-b| / max(|a|, |b|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.abs(a - b) / denom


def max_relative_error(analytic: Sequence[Matrix], numeric: Sequence[Matrix]) -> float:
    worst = 0.0
    for a, b in zip(analytic, numeric):
        if a.size:
            worst = max(worst, float(np.max(relative_error(a, b))))
    return worst
