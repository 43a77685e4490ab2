import math

import numpy as np
import numpy.testing as npt
import pytest

from errors import DimensionError, GradientCheckError, ValidationError
from numerics import (
    ParamTensor,
    activate,
    activation_grad,
    as_matrix,
    finite_difference_gradient,
    glorot_uniform,
    matmul,
    max_relative_error,
    relative_error,
    sigmoid,
)


def test_matmul_hand_example():
    out = matmul(as_matrix([[1, 2], [3, 4]]), as_matrix([[5], [6]]))
    npt.assert_array_equal(out, [[17.0], [39.0]])


def test_matmul_identity_and_zero():
    m = np.array([[0.3, -1.2], [2.5, 7.0]])
    npt.assert_array_equal(matmul(np.eye(2), m), m)
    npt.assert_array_equal(matmul(np.zeros((2, 2)), m), np.zeros((2, 2)))


def test_matmul_identity_associativity_is_bitwise():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    eye = np.eye(4)
    assert np.array_equal(matmul(matmul(a, eye), b), matmul(a, matmul(eye, b)))


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_as_matrix_rejects_non_finite():
    with pytest.raises(ValidationError):
        as_matrix([[1.0, float("nan")]])


def test_activations():
    assert activate(np.array(-1.5), "relu") == 0.0
    assert activate(np.array(2.0), "relu") == 2.0
    assert activate(np.array(0.0), "sigmoid") == 0.5
    assert activate(np.array(0.0), "tanh") == 0.0
    assert activate(np.array(math.log(3.0)), "sigmoid") == pytest.approx(0.75, abs=1e-15)
    with pytest.raises(ValidationError):
        activate(np.array(1.0), "softplus")


def test_sigmoid_is_stable_for_large_inputs():
    out = sigmoid(np.array([-1000.0, 1000.0]))
    npt.assert_array_equal(out, [0.0, 1.0])
    assert np.all(np.isfinite(out))


@pytest.mark.parametrize("kind", ["relu", "sigmoid", "tanh"])
def test_activation_grad_matches_central_difference(kind):
    x = np.array([-1.3, -0.2, 0.4, 2.1])
    h = 1e-6
    numeric = (activate(x + h, kind) - activate(x - h, kind)) / (2 * h)
    npt.assert_allclose(activation_grad(activate(x, kind), kind), numeric, rtol=1e-6, atol=1e-9)


def test_param_tensor_zero_grad_and_mask():
    p = ParamTensor("w", np.ones((2, 3)), mask=np.array([[1, 0, 1], [0, 1, 0]]))
    assert p.size == 3
    npt.assert_array_equal(p.value, [[1, 0, 1], [0, 1, 0]])
    p.accumulate(np.full((2, 3), 2.0))
    npt.assert_array_equal(p.grad, [[2, 0, 2], [0, 2, 0]])
    p.zero_grad()
    assert not p.grad.any()
    with pytest.raises(DimensionError):
        p.accumulate(np.ones(3))


def test_param_tensor_does_not_mutate_caller_array():
    raw = np.ones((2, 2))
    ParamTensor("w", raw, mask=np.eye(2))
    npt.assert_array_equal(raw, np.ones((2, 2)))


def test_finite_difference_quadratic():
    p = ParamTensor("theta", np.array([3.0]))
    (g,) = finite_difference_gradient(lambda: float(p.value[0] ** 2), [p], h=1e-5)
    assert g[0] == pytest.approx(6.0, abs=1e-8)
    assert p.value[0] == 3.0


def test_finite_difference_constant_loss_gives_zero():
    p = ParamTensor("theta", np.arange(4.0).reshape(2, 2))
    (g,) = finite_difference_gradient(lambda: 1.5, [p])
    npt.assert_array_equal(g, np.zeros((2, 2)))


def test_finite_difference_restores_values_exactly():
    rng = np.random.default_rng(0)
    p = ParamTensor("w", rng.normal(size=(3, 3)))
    before = p.value.copy()
    finite_difference_gradient(lambda: float(np.sum(np.sin(p.value))), [p])
    assert np.array_equal(p.value, before)


def test_finite_difference_single_unit_dense_mse():
    # loss = (w*x + b - y)^2, analytic dw = 2(w*x+b-y)x, db = 2(w*x+b-y)
    x, y = 1.7, -0.4
    w = ParamTensor("w", np.array([0.3]))
    b = ParamTensor("b", np.array([0.1]))

    def loss() -> float:
        return float((w.value[0] * x + b.value[0] - y) ** 2)

    err = w.value[0] * x + b.value[0] - y
    numeric = finite_difference_gradient(loss, [w, b])
    assert max_relative_error([np.array([2 * err * x]), np.array([2 * err])], numeric) < 1e-6


def test_finite_difference_reports_non_finite_perturbation():
    p = ParamTensor("w", np.array([0.0]))
    with pytest.raises(GradientCheckError, match=r"w\[0\]"):
        finite_difference_gradient(lambda: float("inf"), [p])


def test_finite_difference_skips_masked_entries():
    p = ParamTensor("w", np.ones(3), mask=np.array([1.0, 0.0, 1.0]))
    calls = []

    def loss() -> float:
        calls.append(1)
        return float(np.sum(p.value**2))

    (g,) = finite_difference_gradient(loss, [p])
    assert len(calls) == 4
    assert g[1] == 0.0


def test_relative_error_floor():
    npt.assert_array_equal(relative_error(np.zeros(2), np.zeros(2)), [0.0, 0.0])
    assert relative_error(np.array([1.0]), np.array([1.1]))[0] == pytest.approx(0.1 / 1.1)


def test_glorot_uniform_bounds_and_seed():
    a = glorot_uniform(np.random.default_rng(5), (50, 40), 50, 40)
    b = glorot_uniform(np.random.default_rng(5), (50, 40), 50, 40)
    limit = math.sqrt(6.0 / 90.0)
    assert np.array_equal(a, b)
    assert np.all(np.abs(a) <= limit)
