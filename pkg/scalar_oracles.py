"""Plain-``math`` reference implementations used as independent test oracles.

Nothing here touches numpy: every value is computed with explicit Python
loops over lists so tests can compare the vectorized layers against it.
"""

from __future__ import annotations

import math

Vec = list[float]
Mat = list[list[float]]


def _sigmoid(v: float) -> float:
    return 1.0 / (1.0 + math.exp(-v))


def conv_relu(x: Mat, kernels: list[Mat], bias: Vec | None = None) -> Mat:
    """out[t][q] = relu(sum_j sum_i kernels[q][i][j] * x[t-j][i] + b_q), with x[t<0] = 0.

    ``x`` is T rows of N values; ``kernels[q]`` is N rows of k lags.
    """
    t_len = len(x)
    out: Mat = []
    for t in range(t_len):
        row: Vec = []
        for q, kern in enumerate(kernels):
            acc = bias[q] if bias else 0.0
            for i, lags in enumerate(kern):
                for j, w in enumerate(lags):
                    if t - j >= 0:
                        acc += w * x[t - j][i]
            row.append(max(acc, 0.0))
        out.append(row)
    return out


def _affine(theta: Mat, z: Vec, b: Vec) -> Vec:
    return [sum(w * v for w, v in zip(row, z)) + bb for row, bb in zip(theta, b)]


def gru_step(y: Vec, h: Vec, theta_r: Mat, theta_u: Mat, theta_c: Mat, b_r: Vec, b_u: Vec, b_c: Vec) -> Vec:
    """h' = u*h + (1-u)*c with c built from the reset-scaled previous state."""
    z = y + h
    r = [_sigmoid(v) for v in _affine(theta_r, z, b_r)]
    u = [_sigmoid(v) for v in _affine(theta_u, z, b_u)]
    c = [math.tanh(v) for v in _affine(theta_c, y + [ri * hi for ri, hi in zip(r, h)], b_c)]
    return [ui * hi + (1.0 - ui) * ci for ui, hi, ci in zip(u, h, c)]


def lstm_step(y: Vec, h: Vec, c: Vec, theta: dict[str, Mat], b: dict[str, Vec]) -> tuple[Vec, Vec]:
    z = y + h
    i = [_sigmoid(v) for v in _affine(theta["i"], z, b["i"])]
    f = [_sigmoid(v) for v in _affine(theta["f"], z, b["f"])]
    g = [math.tanh(v) for v in _affine(theta["g"], z, b["g"])]
    o = [_sigmoid(v) for v in _affine(theta["o"], z, b["o"])]
    c_next = [fi * ci + ii * gi for fi, ci, ii, gi in zip(f, c, i, g)]
    h_next = [oi * math.tanh(ci) for oi, ci in zip(o, c_next)]
    return h_next, c_next


def hcg_probs(
    x: Mat,
    kernels: list[Mat],
    conv_bias: Vec,
    gru: dict[str, Mat | Vec],
    w_out: Mat,
    b_out: Vec,
) -> Vec:
    """Straight-line HCG: conv+ReLU, a GRU over every step from h=0, last state, affine, softmax.

    ``gru`` holds theta_r, theta_u, theta_c, b_r, b_u, b_c; ``w_out`` is H rows of N_c values.
    """
    seq = conv_relu(x, kernels, conv_bias)
    h = [0.0] * len(gru["b_u"])
    for y in seq:
        h = gru_step(y, h, gru["theta_r"], gru["theta_u"], gru["theta_c"], gru["b_r"], gru["b_u"], gru["b_c"])
    logits = [sum(h[i] * w_out[i][k] for i in range(len(h))) + b_out[k] for k in range(len(b_out))]
    top = max(logits)
    exps = [math.exp(v - top) for v in logits]
    total = sum(exps)
    return [e / total for e in exps]


def adam_scalar(
    theta: float,
    grad_fn,
    steps: int,
    lr: float = 0.001,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> list[float]:
    """Parameter value after each of ``steps`` Adam updates on one scalar."""
    m = v = 0.0
    trail: list[float] = []
    for t in range(1, steps + 1):
        g = grad_fn(theta)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        theta = theta - lr * m_hat / (math.sqrt(v_hat) + eps)
        trail.append(theta)
    return trail


def count_metrics(pred: list[int], true: list[int], num_classes: int) -> dict[str, list[float] | float]:
    """Accuracy and per-class precision/recall/F1 by walking every prediction."""
    correct = sum(1 for p, t in zip(pred, true) if p == t)
    precision: Vec = []
    recall: Vec = []
    f1: Vec = []
    for c in range(num_classes):
        tp = fp = fn = 0
        for p, t in zip(pred, true):
            if p == c and t == c:
                tp += 1
            elif p == c:
                fp += 1
            elif t == c:
                fn += 1
        pr = tp / (tp + fp) if tp + fp else 0.0
        rc = tp / (tp + fn) if tp + fn else 0.0
        precision.append(pr)
        recall.append(rc)
        f1.append(2 * pr * rc / (pr + rc) if pr + rc else 0.0)
    return {"accuracy": correct / len(true), "precision": precision, "recall": recall, "f1": f1}
