"""Forward and backward passes for the network building blocks.

Sequence layers take batch-first arrays of shape (B, T, C); the module-level
functions also accept a single (T, C) window. Every layer exposes
``params`` (a list of ``ParamTensor``), ``forward(x) -> (out, cache)`` and
``backward(grad_out, cache) -> grad_in``; backward accumulates into the
parameter gradients.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from errors import DimensionError, ValidationError
from numerics import Matrix, ParamTensor, activate, activation_grad, glorot_uniform, memory_gate_bias, sigmoid

logger = logging.getLogger(__name__)


class Layer(Protocol):
    name: str
    params: list[ParamTensor]

    def forward(self, x: Matrix) -> tuple[Matrix, Any]: ...

    def backward(self, grad: Matrix, cache: Any) -> Matrix: ...


def _as_batch(x: Matrix, ndim: int) -> tuple[Matrix, bool]:
    """Add a leading batch axis to a single example."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == ndim - 1:
        return x[np.newaxis], True
    if x.ndim != ndim:
        raise DimensionError(f"expected {ndim - 1}-D or {ndim}-D input, got shape {x.shape}")
    return x, False


# ---------- convolution ----------


class Conv1dLayer:
    """Sensor-wide 1-D convolution with causal zero padding.

    ``kernels`` has shape (d, N_in, k): ``kernels[q][:, j]`` is the column
    f_j applied to x_{t-j}. An optional ``band`` restricts each kernel to a
    contiguous block of input channels (used by the CNN baseline).
    """

    def __init__(
        self,
        name: str,
        in_width: int,
        num_kernels: int,
        kernel_length: int,
        rng: np.random.Generator | None = None,
        bias: bool = True,
        band: int | None = None,
        activation: str = "relu",
    ) -> None:
        if in_width < 1 or num_kernels < 1 or kernel_length < 1:
            raise ValidationError(
                f"{name}: conv sizes must be positive (in_width={in_width}, d={num_kernels}, k={kernel_length})"
            )
        self.name = name
        self.in_width = in_width
        self.num_kernels = num_kernels
        self.kernel_length = kernel_length
        self.activation = activation
        shape = (num_kernels, in_width, kernel_length)
        mask = None
        if band is not None and band < in_width:
            mask = np.zeros(shape)
            starts = in_width - band + 1
            for q in range(num_kernels):
                s = q % starts
                mask[q, s : s + band, :] = 1.0
        fan_in = (band or in_width) * kernel_length
        value = np.zeros(shape) if rng is None else glorot_uniform(rng, shape, fan_in, num_kernels * kernel_length)
        self.kernels = ParamTensor(f"{name}.kernels", value, mask=mask)
        self.params = [self.kernels]
        self.bias: ParamTensor | None = None
        if bias:
            self.bias = ParamTensor(f"{name}.bias", np.zeros(num_kernels))
            self.params.append(self.bias)

    def _windows(self, x: Matrix) -> Matrix:
        k = self.kernel_length
        padded = np.pad(x, ((0, 0), (k - 1, 0), (0, 0)))
        # (B, T, C, k); slot s holds x_{t-(k-1-s)}
        return sliding_window_view(padded, k, axis=1)

    def _flat_kernels(self) -> Matrix:
        # reverse the lag axis to line up with the window slots
        return self.kernels.value[:, :, ::-1].reshape(self.num_kernels, -1)

    def forward(self, x: Matrix) -> tuple[Matrix, Any]:
        x, _ = _as_batch(x, 3)
        if x.shape[2] != self.in_width:
            raise DimensionError(f"{self.name}: input has {x.shape[2]} channels, layer expects {self.in_width}")
        b, t, c = x.shape
        cols = self._windows(x).reshape(b * t, c * self.kernel_length)
        pre = cols @ self._flat_kernels().T
        if self.bias is not None:
            pre = pre + self.bias.value
        pre = pre.reshape(b, t, self.num_kernels)
        out = activate(pre, self.activation)
        return out, (cols, out, x.shape)

    def backward(self, grad: Matrix, cache: Any) -> Matrix:
        cols, out, (b, t, c) = cache
        k = self.kernel_length
        dpre = (grad * activation_grad(out, self.activation)).reshape(b * t, self.num_kernels)
        dflat = (dpre.T @ cols).reshape(self.num_kernels, c, k)
        self.kernels.accumulate(np.ascontiguousarray(dflat[:, :, ::-1]))
        if self.bias is not None:
            self.bias.accumulate(dpre.sum(axis=0))
        dcols = (dpre @ self._flat_kernels()).reshape(b, t, c, k)
        dpadded = np.zeros((b, t + k - 1, c))
        for s in range(k):
            dpadded[:, s : s + t, :] += dcols[:, :, :, s]
        return dpadded[:, k - 1 :, :]


def conv1d_forward(x: Matrix, layer: Conv1dLayer) -> Matrix:
    """Output sequence of ``layer`` for a (T, N_in) window or a (B, T, N_in) batch."""
    xb, single = _as_batch(x, 3)
    out, _ = layer.forward(xb)
    return out[0] if single else out


# ---------- GRU ----------


@dataclass
class GruTrace:
    r: Matrix
    u: Matrix
    c: Matrix


class GruLayer:
    """One GRU layer with gate blocks Θ_r, Θ_u, Θ_c of shape H×(input+H).

    The update gate u keeps the previous state:
    h_t = u ⊙ h_{t-1} + (1 - u) ⊙ c. With ``memory_steps`` the update-gate
    bias starts at log(U(1, memory_steps - 1)) instead of zero.
    """

    def __init__(
        self,
        name: str,
        input_size: int,
        hidden_size: int,
        rng: np.random.Generator | None = None,
        memory_steps: int | None = None,
    ) -> None:
        if input_size < 1 or hidden_size < 1:
            raise ValidationError(f"{name}: sizes must be positive (input={input_size}, hidden={hidden_size})")
        self.name = name
        self.input_size = input_size
        self.hidden_size = hidden_size
        shape = (hidden_size, input_size + hidden_size)

        def block() -> Matrix:
            if rng is None:
                return np.zeros(shape)
            return glorot_uniform(rng, shape, input_size + hidden_size, hidden_size)

        self.theta_r = ParamTensor(f"{name}.theta_r", block())
        self.theta_u = ParamTensor(f"{name}.theta_u", block())
        self.theta_c = ParamTensor(f"{name}.theta_c", block())
        self.b_r = ParamTensor(f"{name}.b_r", np.zeros(hidden_size))
        b_u = np.zeros(hidden_size)
        if rng is not None and memory_steps is not None:
            b_u = memory_gate_bias(rng, hidden_size, memory_steps)
        self.b_u = ParamTensor(f"{name}.b_u", b_u)
        self.b_c = ParamTensor(f"{name}.b_c", np.zeros(hidden_size))
        self.params = [self.theta_r, self.theta_u, self.theta_c, self.b_r, self.b_u, self.b_c]

    def forward(self, x: Matrix) -> tuple[Matrix, Any]:
        x, _ = _as_batch(x, 3)
        hs, trace, h0 = _gru_scan(x, self, None)
        return hs, (x, h0, hs, trace)

    def backward(self, grad: Matrix, cache: Any) -> Matrix:
        x, h0, hs, trace = cache
        n_in = self.input_size
        b, t, _ = x.shape
        dth_r = np.zeros_like(self.theta_r.value)
        dth_u = np.zeros_like(self.theta_u.value)
        dth_c = np.zeros_like(self.theta_c.value)
        db_r = np.zeros(self.hidden_size)
        db_u = np.zeros(self.hidden_size)
        db_c = np.zeros(self.hidden_size)
        dx = np.zeros_like(x)
        dh_carry = np.zeros((b, self.hidden_size))
        for step in range(t - 1, -1, -1):
            h_prev = hs[:, step - 1] if step > 0 else h0
            r = trace.r[:, step]
            u = trace.u[:, step]
            c = trace.c[:, step]
            y = x[:, step]
            dh = grad[:, step] + dh_carry

            du = dh * (h_prev - c)
            dc = dh * (1.0 - u)
            dh_prev = dh * u

            dc_pre = dc * (1.0 - c * c)
            dth_c += dc_pre.T @ np.concatenate([y, r * h_prev], axis=1)
            db_c += dc_pre.sum(axis=0)
            dzc = dc_pre @ self.theta_c.value
            drh = dzc[:, n_in:]
            dh_prev += drh * r
            dr = drh * h_prev

            z = np.concatenate([y, h_prev], axis=1)
            du_pre = du * u * (1.0 - u)
            dr_pre = dr * r * (1.0 - r)
            dth_u += du_pre.T @ z
            dth_r += dr_pre.T @ z
            db_u += du_pre.sum(axis=0)
            db_r += dr_pre.sum(axis=0)
            dz = du_pre @ self.theta_u.value + dr_pre @ self.theta_r.value

            dx[:, step] = dzc[:, :n_in] + dz[:, :n_in]
            dh_carry = dh_prev + dz[:, n_in:]
        self.theta_r.accumulate(dth_r)
        self.theta_u.accumulate(dth_u)
        self.theta_c.accumulate(dth_c)
        self.b_r.accumulate(db_r)
        self.b_u.accumulate(db_u)
        self.b_c.accumulate(db_c)
        return dx


def gru_cell(y_next: Matrix, h_prev: Matrix, p: GruLayer) -> tuple[Matrix, GruTrace]:
    """One GRU step; works on single vectors or on (B, ·) batches."""
    y_next = np.asarray(y_next, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if y_next.shape[-1] != p.input_size or h_prev.shape[-1] != p.hidden_size:
        raise DimensionError(
            f"{p.name}: got input {y_next.shape} and hidden {h_prev.shape}, "
            f"expected last dims {p.input_size} and {p.hidden_size}"
        )
    z = np.concatenate([y_next, h_prev], axis=-1)
    r = sigmoid(z @ p.theta_r.value.T + p.b_r.value)
    u = sigmoid(z @ p.theta_u.value.T + p.b_u.value)
    c = np.tanh(np.concatenate([y_next, r * h_prev], axis=-1) @ p.theta_c.value.T + p.b_c.value)
    h_next = u * h_prev + (1.0 - u) * c
    return h_next, GruTrace(r=r, u=u, c=c)


def _gru_scan(x: Matrix, p: GruLayer, h0: Matrix | None) -> tuple[Matrix, GruTrace, Matrix]:
    b, t, c_in = x.shape
    if c_in != p.input_size:
        raise DimensionError(f"{p.name}: input has {c_in} features, layer expects {p.input_size}")
    h = np.zeros((b, p.hidden_size)) if h0 is None else np.broadcast_to(h0, (b, p.hidden_size)).astype(np.float64)
    h_init = h
    hs = np.empty((b, t, p.hidden_size))
    rs = np.empty_like(hs)
    us = np.empty_like(hs)
    cs = np.empty_like(hs)
    for step in range(t):
        h, g = gru_cell(x[:, step], h, p)
        hs[:, step] = h
        rs[:, step] = g.r
        us[:, step] = g.u
        cs[:, step] = g.c
    return hs, GruTrace(r=rs, u=us, c=cs), h_init


def gru_layer_forward(seq: Matrix, p: GruLayer, h0: Matrix | None = None) -> tuple[Matrix, GruTrace]:
    """Fold ``gru_cell`` over a (T, in) sequence or a (B, T, in) batch; returns every h_t."""
    if h0 is not None and np.shape(h0)[-1] != p.hidden_size:
        raise DimensionError(f"{p.name}: h0 has shape {np.shape(h0)}, expected last dim {p.hidden_size}")
    xb, single = _as_batch(seq, 3)
    hs, trace, _ = _gru_scan(xb, p, h0)
    if single:
        return hs[0], GruTrace(r=trace.r[0], u=trace.u[0], c=trace.c[0])
    return hs, trace


# ---------- LSTM ----------


@dataclass
class LstmState:
    h: Matrix
    c: Matrix


@dataclass
class LstmTrace:
    i: Matrix
    f: Matrix
    g: Matrix
    o: Matrix
    c: Matrix


class LstmLayer:
    """Standard LSTM with input, forget, cell and output gates (baseline only).

    ``memory_steps`` sets the forget-gate bias to log(U(1, memory_steps - 1))
    and the input-gate bias to its negative.
    """

    GATES = ("i", "f", "g", "o")

    def __init__(
        self,
        name: str,
        input_size: int,
        hidden_size: int,
        rng: np.random.Generator | None = None,
        memory_steps: int | None = None,
    ) -> None:
        if input_size < 1 or hidden_size < 1:
            raise ValidationError(f"{name}: sizes must be positive (input={input_size}, hidden={hidden_size})")
        self.name = name
        self.input_size = input_size
        self.hidden_size = hidden_size
        shape = (hidden_size, input_size + hidden_size)
        self.theta: dict[str, ParamTensor] = {}
        self.bias: dict[str, ParamTensor] = {}
        for gate in self.GATES:
            value = np.zeros(shape) if rng is None else glorot_uniform(rng, shape, input_size + hidden_size, hidden_size)
            self.theta[gate] = ParamTensor(f"{name}.theta_{gate}", value)
        initial = {gate: np.zeros(hidden_size) for gate in self.GATES}
        if rng is not None and memory_steps is not None:
            initial["f"] = memory_gate_bias(rng, hidden_size, memory_steps)
            initial["i"] = -initial["f"]
        for gate in self.GATES:
            self.bias[gate] = ParamTensor(f"{name}.b_{gate}", initial[gate])
        self.params = [self.theta[g] for g in self.GATES] + [self.bias[g] for g in self.GATES]

    def forward(self, x: Matrix) -> tuple[Matrix, Any]:
        x, _ = _as_batch(x, 3)
        b, t, c_in = x.shape
        if c_in != self.input_size:
            raise DimensionError(f"{self.name}: input has {c_in} features, layer expects {self.input_size}")
        state = LstmState(h=np.zeros((b, self.hidden_size)), c=np.zeros((b, self.hidden_size)))
        hs = np.empty((b, t, self.hidden_size))
        traces: list[LstmTrace] = []
        for step in range(t):
            state, tr = lstm_cell(x[:, step], state, self)
            hs[:, step] = state.h
            traces.append(tr)
        return hs, (x, hs, traces)

    def backward(self, grad: Matrix, cache: Any) -> Matrix:
        x, hs, traces = cache
        n_in = self.input_size
        b, t, _ = x.shape
        dtheta = {g: np.zeros_like(self.theta[g].value) for g in self.GATES}
        dbias = {g: np.zeros(self.hidden_size) for g in self.GATES}
        dx = np.zeros_like(x)
        dh_carry = np.zeros((b, self.hidden_size))
        dc_carry = np.zeros((b, self.hidden_size))
        zeros = np.zeros((b, self.hidden_size))
        for step in range(t - 1, -1, -1):
            tr = traces[step]
            h_prev = hs[:, step - 1] if step > 0 else zeros
            c_prev = traces[step - 1].c if step > 0 else zeros
            dh = grad[:, step] + dh_carry
            tc = np.tanh(tr.c)
            dc = dc_carry + dh * tr.o * (1.0 - tc * tc)
            pre = {
                "o": dh * tc * tr.o * (1.0 - tr.o),
                "i": dc * tr.g * tr.i * (1.0 - tr.i),
                "f": dc * c_prev * tr.f * (1.0 - tr.f),
                "g": dc * tr.i * (1.0 - tr.g * tr.g),
            }
            z = np.concatenate([x[:, step], h_prev], axis=1)
            dz = np.zeros_like(z)
            for gate in self.GATES:
                dtheta[gate] += pre[gate].T @ z
                dbias[gate] += pre[gate].sum(axis=0)
                dz += pre[gate] @ self.theta[gate].value
            dx[:, step] = dz[:, :n_in]
            dh_carry = dz[:, n_in:]
            dc_carry = dc * tr.f
        for gate in self.GATES:
            self.theta[gate].accumulate(dtheta[gate])
            self.bias[gate].accumulate(dbias[gate])
        return dx


def lstm_cell(y_next: Matrix, state: LstmState, p: LstmLayer) -> tuple[LstmState, LstmTrace]:
    """One LSTM step: c' = f⊙c + i⊙g, h' = o⊙tanh(c')."""
    y_next = np.asarray(y_next, dtype=np.float64)
    if y_next.shape[-1] != p.input_size or state.h.shape[-1] != p.hidden_size or state.c.shape != state.h.shape:
        raise DimensionError(
            f"{p.name}: got input {y_next.shape}, hidden {state.h.shape}, cell {state.c.shape}; "
            f"expected last dims {p.input_size} and {p.hidden_size}"
        )
    z = np.concatenate([y_next, state.h], axis=-1)
    i = sigmoid(z @ p.theta["i"].value.T + p.bias["i"].value)
    f = sigmoid(z @ p.theta["f"].value.T + p.bias["f"].value)
    g = np.tanh(z @ p.theta["g"].value.T + p.bias["g"].value)
    o = sigmoid(z @ p.theta["o"].value.T + p.bias["o"].value)
    c = f * state.c + i * g
    h = o * np.tanh(c)
    return LstmState(h=h, c=c), LstmTrace(i=i, f=f, g=g, o=o, c=c)


# ---------- dense head ----------


class DenseLayer:
    """Affine map y = hᵀW + b, W of shape in×out, with an optional activation."""

    def __init__(
        self,
        name: str,
        in_size: int,
        out_size: int,
        rng: np.random.Generator | None = None,
        activation: str | None = None,
    ) -> None:
        if in_size < 1 or out_size < 1:
            raise ValidationError(f"{name}: sizes must be positive (in={in_size}, out={out_size})")
        self.name = name
        self.in_size = in_size
        self.out_size = out_size
        self.activation = activation
        value = np.zeros((in_size, out_size)) if rng is None else glorot_uniform(rng, (in_size, out_size), in_size, out_size)
        self.W = ParamTensor(f"{name}.W", value)
        self.b = ParamTensor(f"{name}.b", np.zeros(out_size))
        self.params = [self.W, self.b]

    def forward(self, x: Matrix) -> tuple[Matrix, Any]:
        x, _ = _as_batch(x, 2)
        pre = dense_forward(x, self)
        out = pre if self.activation is None else activate(pre, self.activation)
        return out, (x, out)

    def backward(self, grad: Matrix, cache: Any) -> Matrix:
        x, out = cache
        if self.activation is not None:
            grad = grad * activation_grad(out, self.activation)
        self.W.accumulate(x.T @ grad)
        self.b.accumulate(grad.sum(axis=0))
        return grad @ self.W.value.T


def dense_forward(h: Matrix, layer: DenseLayer) -> Matrix:
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != layer.in_size:
        raise DimensionError(f"{layer.name}: input {h.shape} does not match W {layer.W.shape}")
    return h @ layer.W.value + layer.b.value


# ---------- shape adapters ----------


class LastStep:
    """Keep the hidden state at the last timestamp: (B, T, H) -> (B, H)."""

    def __init__(self, name: str = "last") -> None:
        self.name = name
        self.params: list[ParamTensor] = []

    def forward(self, x: Matrix) -> tuple[Matrix, Any]:
        return x[:, -1, :], x.shape

    def backward(self, grad: Matrix, cache: Any) -> Matrix:
        dx = np.zeros(cache)
        dx[:, -1, :] = grad
        return dx


class Flatten:
    """(B, T, C) -> (B, T·C), row-major over time then channel."""

    def __init__(self, name: str = "flatten") -> None:
        self.name = name
        self.params: list[ParamTensor] = []

    def forward(self, x: Matrix) -> tuple[Matrix, Any]:
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, grad: Matrix, cache: Any) -> Matrix:
        return grad.reshape(cache)


# ---------- output and loss ----------


def softmax(yf: Matrix) -> Matrix:
    """Softmax over the last axis with max subtraction."""
    yf = np.asarray(yf, dtype=np.float64)
    shifted = yf - np.max(yf, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def argmax_class(d: Matrix) -> int:
    """Index of the largest probability; ties go to the lowest index."""
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 1 or d.size == 0:
        raise ValidationError(f"argmax_class needs a non-empty vector, got shape {d.shape}")
    return int(np.argmax(d))


def argmax_classes(probs: Matrix) -> np.ndarray:
    return np.argmax(np.asarray(probs), axis=-1)


def _check_one_hot(target: Matrix) -> None:
    ok = np.all((target == 0.0) | (target == 1.0), axis=-1) & (target.sum(axis=-1) == 1.0)
    if not np.all(ok):
        bad = int(np.argmin(np.atleast_1d(ok)))
        raise ValidationError(f"target row {bad} is not one-hot")


def mse_loss(pred: Matrix, target: Matrix) -> float:
    """Sum over samples and classes of (d - d̂)²."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction shape {pred.shape} != target shape {target.shape}")
    _check_one_hot(target)
    diff = pred - target
    return float(np.sum(diff * diff))


def mse_softmax_backward(probs: Matrix, target: Matrix) -> Matrix:
    """Gradient of ``mse_loss(softmax(z), target)`` with respect to the logits z."""
    if probs.shape != target.shape:
        raise DimensionError(f"prediction shape {probs.shape} != target shape {target.shape}")
    g = 2.0 * (probs - target)
    return probs * (g - np.sum(g * probs, axis=-1, keepdims=True))


def one_hot(labels: Sequence[int] | np.ndarray, num_classes: int) -> Matrix:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValidationError(f"labels must lie in [0, {num_classes}), got range [{labels.min()}, {labels.max()}]")
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


# ---------- whole-stack forward / backward ----------


@dataclass
class ForwardTrace:
    """Per-layer caches of one batched forward pass, in execution order."""

    entries: list[tuple[Layer, Any]] = field(default_factory=list)
    logits: Matrix | None = None
    probs: Matrix | None = None


def forward_stack(layers: Sequence[Layer], x: Matrix) -> tuple[Matrix, ForwardTrace]:
    """Run ``layers`` on a batch, then softmax; returns (probabilities, trace)."""
    trace = ForwardTrace()
    out = x
    for layer in layers:
        out, cache = layer.forward(out)
        trace.entries.append((layer, cache))
    trace.logits = out
    trace.probs = softmax(out)
    return trace.probs, trace


def backward(trace: ForwardTrace, loss_grad: Matrix) -> Matrix:
    """Back-propagate dL/dlogits through every traced layer; returns dL/dx."""
    if trace.logits is None:
        raise DimensionError("trace has no recorded forward pass")
    loss_grad = np.asarray(loss_grad, dtype=np.float64)
    if loss_grad.shape != trace.logits.shape:
        raise DimensionError(f"loss gradient shape {loss_grad.shape} != logits shape {trace.logits.shape}")
    grad = loss_grad
    for layer, cache in reversed(trace.entries):
        grad = layer.backward(grad, cache)
    return grad
