import math

import numpy as np
import numpy.testing as npt
import pytest

import scalar_oracles
from errors import DimensionError, ValidationError
from layers import (
    Conv1dLayer,
    DenseLayer,
    Flatten,
    GruLayer,
    LastStep,
    LstmLayer,
    LstmState,
    argmax_class,
    backward,
    conv1d_forward,
    dense_forward,
    forward_stack,
    gru_cell,
    gru_layer_forward,
    lstm_cell,
    mse_loss,
    mse_softmax_backward,
    one_hot,
    softmax,
)


def _conv(in_width, d, k, kernels=None, bias=None):
    layer = Conv1dLayer("conv", in_width, d, k)
    if kernels is not None:
        layer.kernels.value[...] = kernels
    if bias is not None:
        layer.bias.value[...] = bias
    return layer


# ---------- conv1d ----------


def test_conv_zero_input_gives_zero_output():
    layer = _conv(3, 2, 4, kernels=np.ones((2, 3, 4)))
    npt.assert_array_equal(conv1d_forward(np.zeros((5, 3)), layer), np.zeros((5, 2)))


def test_conv_identity_kernel_copies_first_sensor():
    kern = np.zeros((1, 3, 1))
    kern[0, 0, 0] = 1.0
    x = np.array([[1.0, 5.0, 5.0], [-2.0, 5.0, 5.0], [3.0, 5.0, 5.0]])
    npt.assert_array_equal(conv1d_forward(x, _conv(3, 1, 1, kernels=kern)), [[1.0], [0.0], [3.0]])


def test_conv_hand_example_respects_lag_indexing():
    # f_0 = (1, 0) on x_t, f_1 = (0, 1) on x_{t-1}
    layer = _conv(2, 1, 2, kernels=np.array([[[1.0, 0.0], [0.0, 1.0]]]))
    x = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    npt.assert_allclose(conv1d_forward(x, layer)[:, 0], [1.0, 5.0, 9.0], atol=1e-9)


def test_conv_matches_scalar_oracle():
    rng = np.random.default_rng(7)
    kern = rng.normal(size=(3, 4, 3))
    bias = rng.normal(size=3)
    x = rng.normal(size=(6, 4))
    expected = scalar_oracles.conv_relu(x.tolist(), kern.tolist(), bias.tolist())
    npt.assert_allclose(conv1d_forward(x, _conv(4, 3, 3, kern, bias)), expected, atol=1e-9)


@pytest.mark.parametrize("t", [1, 2, 7, 33, 64])
@pytest.mark.parametrize("k", [1, 3, 8])
def test_conv_keeps_length_and_is_non_negative(t, k):
    rng = np.random.default_rng(t * 10 + k)
    layer = Conv1dLayer("conv", 2, 3, k, rng)
    out = conv1d_forward(rng.normal(size=(t, 2)), layer)
    assert out.shape == (t, 3)
    assert np.all(out >= 0)


def test_conv_rejects_wrong_channel_count():
    with pytest.raises(DimensionError):
        conv1d_forward(np.zeros((4, 3)), _conv(2, 1, 2))


def test_conv_band_mask_limits_sensors_and_counts():
    layer = Conv1dLayer("conv", 8, 6, 5, np.random.default_rng(0), band=5)
    mask = layer.kernels.mask
    assert mask is not None
    assert np.all(mask.sum(axis=(1, 2)) == 25)
    assert layer.kernels.size == 6 * 25
    assert np.all(layer.kernels.value[mask == 0] == 0)


# ---------- GRU ----------


def test_gru_zero_params_zero_state():
    layer = GruLayer("gru", 2, 3)
    h, tr = gru_cell(np.array([0.4, -1.0]), np.zeros(3), layer)
    npt.assert_array_equal(tr.r, 0.5)
    npt.assert_array_equal(tr.u, 0.5)
    npt.assert_array_equal(tr.c, 0.0)
    npt.assert_array_equal(h, 0.0)


def test_gru_zero_params_halves_state():
    layer = GruLayer("gru", 1, 2)
    h, _ = gru_cell(np.array([3.0]), np.array([1.0, -4.0]), layer)
    npt.assert_array_equal(h, [0.5, -2.0])


def test_gru_one_dim_hand_example():
    layer = GruLayer("gru", 1, 1)
    for theta in (layer.theta_r, layer.theta_u, layer.theta_c):
        theta.value[...] = [[1.0, 1.0]]
    h, tr = gru_cell(np.array([1.0]), np.array([0.0]), layer)
    s1 = 1.0 / (1.0 + math.exp(-1.0))
    assert tr.r[0] == pytest.approx(s1, abs=1e-12)
    assert tr.c[0] == pytest.approx(math.tanh(1.0), abs=1e-12)
    assert h[0] == pytest.approx((1 - s1) * math.tanh(1.0), abs=1e-9)
    assert h[0] == pytest.approx(0.2048242148, abs=1e-9)


def _random_gru(rng, n_in, hidden):
    layer = GruLayer("gru", n_in, hidden, rng)
    for b in (layer.b_r, layer.b_u, layer.b_c):
        b.value[...] = rng.normal(size=hidden)
    return layer


def test_gru_cell_matches_scalar_oracle():
    rng = np.random.default_rng(11)
    layer = _random_gru(rng, 3, 2)
    y, h = rng.normal(size=3), rng.normal(size=2)
    expected = scalar_oracles.gru_step(
        y.tolist(),
        h.tolist(),
        layer.theta_r.value.tolist(),
        layer.theta_u.value.tolist(),
        layer.theta_c.value.tolist(),
        layer.b_r.value.tolist(),
        layer.b_u.value.tolist(),
        layer.b_c.value.tolist(),
    )
    npt.assert_allclose(gru_cell(y, h, layer)[0], expected, atol=1e-9)


def test_gru_layer_single_step_is_cell():
    rng = np.random.default_rng(2)
    layer = _random_gru(rng, 2, 3)
    y = rng.normal(size=(1, 2))
    hs, _ = gru_layer_forward(y, layer)
    npt.assert_allclose(hs[0], gru_cell(y[0], np.zeros(3), layer)[0], atol=1e-12)


def test_gru_layer_zero_params_halves_each_step():
    layer = GruLayer("gru", 1, 1)
    hs, _ = gru_layer_forward(np.zeros((4, 1)), layer, h0=np.array([8.0]))
    npt.assert_array_equal(hs[:, 0], [4.0, 2.0, 1.0, 0.5])


def test_gru_layer_two_steps_compose_cells():
    rng = np.random.default_rng(5)
    layer = _random_gru(rng, 1, 1)
    seq = rng.normal(size=(2, 1))
    h1, _ = gru_cell(seq[0], np.zeros(1), layer)
    h2, _ = gru_cell(seq[1], h1, layer)
    hs, _ = gru_layer_forward(seq, layer)
    npt.assert_allclose(hs[-1], h2, atol=1e-12)


def test_gru_state_stays_bounded():
    rng = np.random.default_rng(9)
    layer = _random_gru(rng, 4, 5)
    for _ in range(20):
        h_prev = rng.normal(scale=3.0, size=5)
        h, _ = gru_cell(rng.normal(size=4), h_prev, layer)
        assert np.max(np.abs(h)) <= max(np.max(np.abs(h_prev)), 1.0) + 1e-12


def test_gru_param_count_for_unit_layer():
    layer = GruLayer("gru", 1, 1)
    assert sum(p.size for p in layer.params) == 9


def test_gru_rejects_wrong_hidden_size():
    with pytest.raises(DimensionError):
        gru_cell(np.zeros(2), np.zeros(4), GruLayer("gru", 2, 3))


def test_gru_memory_bias_spans_the_window():
    layer = GruLayer("gru", 2, 200, np.random.default_rng(0), memory_steps=128)
    assert np.all(layer.b_u.value >= 0.0)
    assert np.all(layer.b_u.value <= math.log(127.0))
    assert layer.b_u.value.max() > math.log(30.0)
    assert not layer.b_r.value.any() and not layer.b_c.value.any()


def test_gru_memory_bias_slows_forgetting():
    rng = np.random.default_rng(1)
    layer = GruLayer("gru", 1, 4, rng, memory_steps=64)
    for theta in (layer.theta_r, layer.theta_u, layer.theta_c):
        theta.value[...] = 0.0
    hs, _ = gru_layer_forward(np.zeros((10, 1)), layer, h0=np.ones(4))
    keep = 1.0 / (1.0 + np.exp(-layer.b_u.value))
    npt.assert_allclose(hs[-1], keep**10, rtol=1e-12)
    assert np.all(hs[-1] >= 0.5**10)


# ---------- LSTM ----------


def test_lstm_zero_params_zero_state():
    layer = LstmLayer("lstm", 2, 3)
    state, _ = lstm_cell(np.array([1.0, -1.0]), LstmState(np.zeros(3), np.zeros(3)), layer)
    npt.assert_array_equal(state.h, 0.0)
    npt.assert_array_equal(state.c, 0.0)


def test_lstm_saturated_forget_gate_keeps_cell_state():
    layer = LstmLayer("lstm", 1, 2)
    layer.bias["f"].value[...] = 50.0
    c0 = np.array([0.7, -1.3])
    state, _ = lstm_cell(np.array([0.0]), LstmState(np.zeros(2), c0), layer)
    npt.assert_allclose(state.c, c0, atol=1e-15)


def test_lstm_memory_bias_pairs_forget_and_input_gates():
    layer = LstmLayer("lstm", 2, 50, np.random.default_rng(3), memory_steps=32)
    f, i = layer.bias["f"].value, layer.bias["i"].value
    assert np.all((f >= 0.0) & (f <= math.log(31.0)))
    npt.assert_array_equal(i, -f)
    assert not layer.bias["g"].value.any() and not layer.bias["o"].value.any()


def test_lstm_cell_matches_scalar_oracle():
    rng = np.random.default_rng(4)
    layer = LstmLayer("lstm", 1, 1, rng)
    for gate in LstmLayer.GATES:
        layer.bias[gate].value[...] = rng.normal(size=1)
    y, h, c = rng.normal(size=1), rng.normal(size=1), rng.normal(size=1)
    expected_h, expected_c = scalar_oracles.lstm_step(
        y.tolist(),
        h.tolist(),
        c.tolist(),
        {g: layer.theta[g].value.tolist() for g in LstmLayer.GATES},
        {g: layer.bias[g].value.tolist() for g in LstmLayer.GATES},
    )
    state, _ = lstm_cell(y, LstmState(h, c), layer)
    npt.assert_allclose(state.h, expected_h, atol=1e-12)
    npt.assert_allclose(state.c, expected_c, atol=1e-12)


# ---------- dense, softmax, loss ----------


def test_dense_examples():
    layer = DenseLayer("dense", 2, 2)
    layer.W.value[...] = np.eye(2)
    npt.assert_array_equal(dense_forward(np.array([0.3, -2.0]), layer), [0.3, -2.0])
    layer.W.value[...] = [[1.0, 3.0], [2.0, 4.0]]
    layer.b.value[...] = [0.5, -0.5]
    npt.assert_array_equal(dense_forward(np.zeros(2), layer), [0.5, -0.5])
    npt.assert_allclose(dense_forward(np.array([1.0, 2.0]), layer), [5.5, 10.5])


def test_softmax_examples():
    npt.assert_allclose(softmax(np.zeros(4)), np.full(4, 0.25))
    npt.assert_allclose(softmax(np.array([0.0, math.log(2.0)])), [1 / 3, 2 / 3], atol=1e-15)


def test_softmax_shift_invariance_and_simplex():
    rng = np.random.default_rng(1)
    y = rng.normal(size=(5, 6))
    p = softmax(y)
    npt.assert_allclose(softmax(y + 123.4), p, atol=1e-12)
    assert np.all((p > 0) & (p < 1))
    npt.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    npt.assert_array_equal(np.argmax(p, axis=1), np.argmax(y, axis=1))


def test_argmax_class():
    assert argmax_class(np.array([0.1, 0.7, 0.2])) == 1
    assert argmax_class(np.array([0.5, 0.5])) == 0
    for i in range(4):
        assert argmax_class(np.eye(4)[i]) == i
    with pytest.raises(ValidationError):
        argmax_class(np.array([]))


def test_mse_loss_examples():
    t = one_hot([0], 4)
    assert mse_loss(t, t) == 0.0
    assert mse_loss(np.full((1, 4), 0.25), t) == pytest.approx(0.75, abs=1e-15)
    single = mse_loss(np.array([[0.2, 0.8]]), one_hot([0], 2))
    double = mse_loss(np.array([[0.2, 0.8], [0.2, 0.8]]), one_hot([0, 0], 2))
    assert double == 2 * single


def test_mse_loss_rejects_bad_targets():
    with pytest.raises(ValidationError):
        mse_loss(np.array([[0.5, 0.5]]), np.array([[0.5, 0.5]]))
    with pytest.raises(DimensionError):
        mse_loss(np.zeros((1, 3)), one_hot([0], 2))


def test_one_hot_range():
    npt.assert_array_equal(one_hot([1, 0], 3), [[0, 1, 0], [1, 0, 0]])
    with pytest.raises(ValidationError):
        one_hot([3], 3)


def test_dense_mse_backward_closed_form():
    # one linear dense layer feeding softmax+mse, compared with the hand formula
    rng = np.random.default_rng(6)
    layer = DenseLayer("dense", 3, 2, rng)
    x = rng.normal(size=(1, 3))
    t = one_hot([1], 2)
    probs, trace = forward_stack([layer], x)
    backward(trace, mse_softmax_backward(probs, t))
    g = 2 * (probs - t)
    dz = probs * (g - np.sum(g * probs, axis=1, keepdims=True))
    npt.assert_allclose(layer.W.grad, x.T @ dz, atol=1e-15)
    npt.assert_allclose(layer.b.grad, dz[0], atol=1e-15)


def test_zero_upstream_gradient_leaves_zero_grads():
    rng = np.random.default_rng(0)
    layers = [Conv1dLayer("conv", 2, 3, 2, rng), GruLayer("gru", 3, 2, rng), LastStep(), DenseLayer("out", 2, 2, rng)]
    probs, trace = forward_stack(layers, rng.normal(size=(2, 5, 2)))
    backward(trace, np.zeros_like(probs))
    for layer in layers:
        for p in layer.params:
            assert not p.grad.any()


def test_backward_rejects_wrong_gradient_shape():
    rng = np.random.default_rng(0)
    _, trace = forward_stack([Flatten(), DenseLayer("out", 6, 2, rng)], rng.normal(size=(1, 3, 2)))
    with pytest.raises(DimensionError):
        backward(trace, np.zeros((1, 3)))
