"""Tests for the dense engine: layers, loss, Adam and gradient checking."""

import math

import numpy as np
import pytest

from domain2vec.errors import LabelError, NumericalError, ShapeError
from domain2vec.nn import (
    Activation,
    AdamState,
    DenseLayer,
    adam_step,
    as_matrix,
    dense_forward,
    grad_check,
    softmax_cross_entropy,
)


def _naive_matmul(a, b):
    rows, inner = a.shape
    cols = b.shape[1]
    out = np.zeros((rows, cols))
    for i in range(rows):
        for j in range(cols):
            total = 0.0
            for k in range(inner):
                total += a[i, k] * b[k, j]
            out[i, j] = total
    return out


def test_identity_layer_passes_input_through():
    """Identity weights, zero bias and identity activation return the input."""
    layer = DenseLayer(np.eye(2), np.zeros(2), Activation.IDENTITY)
    out = dense_forward(layer, np.array([[3.0, -1.0]]))
    assert out.tolist() == [[3.0, -1.0]]


def test_relu_layer_clamps_negatives():
    layer = DenseLayer(np.eye(2), np.zeros(2), Activation.RELU)
    out = dense_forward(layer, np.array([[3.0, -1.0]]))
    assert out.tolist() == [[3.0, 0.0]]


def test_forward_matches_naive_matmul():
    """A random 3x4 layer on a 5x3 input agrees with a triple-loop oracle."""
    rng = np.random.default_rng(0)
    weights = rng.normal(size=(3, 4))
    bias = rng.normal(size=4)
    x = rng.normal(size=(5, 3))
    layer = DenseLayer(weights, bias, Activation.TANH)
    expected = np.tanh(_naive_matmul(x, weights) + bias)
    assert np.max(np.abs(dense_forward(layer, x) - expected)) < 1e-12


def test_forward_shape_error_names_both_shapes():
    layer = DenseLayer(np.zeros((3, 2)), np.zeros(2), Activation.RELU)
    with pytest.raises(ShapeError) as excinfo:
        layer.forward(np.zeros((4, 5)))
    message = excinfo.value.message
    assert "(4, 5)" in message and "(3, 2)" in message, f"Unexpected message: {message}"


@pytest.mark.parametrize("seed", range(5))
def test_identity_layer_is_linear(seed):
    """Bias-free identity layers satisfy f(ax + by) = a f(x) + b f(y)."""
    rng = np.random.default_rng(seed)
    layer = DenseLayer(rng.normal(size=(4, 3)), np.zeros(3), Activation.IDENTITY)
    x, y = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
    alpha, beta = rng.normal(size=2)
    lhs = layer.forward(alpha * x + beta * y)
    rhs = alpha * layer.forward(x) + beta * layer.forward(y)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_layer_forward_does_not_mutate_layer():
    layer = DenseLayer(np.ones((2, 2)), np.ones(2), Activation.RELU)
    before = (layer.weights.copy(), layer.bias.copy())
    layer.forward(np.array([[1.0, 2.0]]))
    assert np.array_equal(layer.weights, before[0]) and np.array_equal(layer.bias, before[1])


def test_non_finite_input_rejected():
    layer = DenseLayer(np.eye(2), np.zeros(2), Activation.IDENTITY)
    with pytest.raises(NumericalError):
        layer.forward(as_matrix([[np.nan, 1.0]]))


def test_uniform_logits_loss_is_ln2():
    loss, _ = softmax_cross_entropy(np.array([[0.0, 0.0]]), [0])
    assert loss.loss == pytest.approx(math.log(2.0), abs=1e-12)


def test_extreme_logits_are_stable():
    """Max-subtraction keeps huge logits finite."""
    loss, grad = softmax_cross_entropy(np.array([[1000.0, 0.0]]), [0])
    assert math.isfinite(loss.loss) and loss.loss == pytest.approx(0.0, abs=1e-12)
    assert np.all(np.isfinite(grad))


def test_loss_is_mean_of_per_example_losses():
    rng = np.random.default_rng(3)
    loss, _ = softmax_cross_entropy(rng.normal(size=(7, 3)), rng.integers(0, 3, size=7))
    assert loss.loss == pytest.approx(loss.per_example.mean(), rel=1e-12)
    assert np.all(loss.per_example >= 0)


def test_cross_entropy_gradient_matches_finite_differences():
    """Random 4x3 logits; central differences with h = 1e-6."""
    rng = np.random.default_rng(11)
    logits = rng.normal(size=(4, 3))
    labels = np.array([0, 2, 1, 2])
    _, grad = softmax_cross_entropy(logits, labels)
    h = 1e-6
    numeric = np.zeros_like(logits)
    for index in np.ndindex(logits.shape):
        plus, minus = logits.copy(), logits.copy()
        plus[index] += h
        minus[index] -= h
        numeric[index] = (
            softmax_cross_entropy(plus, labels)[0].loss - softmax_cross_entropy(minus, labels)[0].loss
        ) / (2 * h)
    relative = np.abs(grad - numeric) / np.maximum(np.abs(grad) + np.abs(numeric), 1e-12)
    assert relative.max() < 1e-6, f"max relative error {relative.max()}"


@pytest.mark.parametrize("shift", [-50.0, 0.5, 1e3])
def test_loss_invariant_to_row_shift(shift):
    rng = np.random.default_rng(5)
    logits = rng.normal(size=(3, 4))
    labels = [1, 3, 0]
    base = softmax_cross_entropy(logits, labels)[0].loss
    shifted = softmax_cross_entropy(logits + shift, labels)[0].loss
    assert abs(base - shifted) < 1e-9


def test_label_out_of_range_names_example():
    with pytest.raises(LabelError) as excinfo:
        softmax_cross_entropy(np.zeros((3, 2)), [0, 1, 2])
    assert excinfo.value.context["example"] == 2
    assert "example 2" in excinfo.value.message


def test_sample_weights_scale_gradient():
    rng = np.random.default_rng(8)
    logits = rng.normal(size=(5, 2))
    labels = rng.integers(0, 2, size=5)
    _, grad = softmax_cross_entropy(logits, labels)
    _, doubled = softmax_cross_entropy(logits, labels, sample_weight=np.full(5, 2.0))
    assert np.allclose(doubled, 2.0 * grad, rtol=0, atol=1e-15)


def test_adam_zero_gradient_is_fixed_point():
    params = {"w": np.array([[1.0, -2.0]])}
    state = AdamState.zeros_like(params)
    adam_step(params, {"w": np.zeros((1, 2))}, state, lr=0.1, weight_decay=0.0)
    assert params["w"].tolist() == [[1.0, -2.0]]


def test_adam_first_step_moves_by_about_lr():
    params = {"w": np.array([1.0])}
    state = AdamState.zeros_like(params)
    adam_step(params, {"w": np.array([1.0])}, state, lr=0.1)
    assert params["w"][0] < 1.0
    assert params["w"][0] == pytest.approx(0.9, abs=1e-6)
    assert state.step == 1


def test_adam_descends_quadratic():
    """Ten steps on w^2 from w = 1 shrink |w| monotonically."""
    params = {"w": np.array([1.0])}
    state = AdamState.zeros_like(params)
    magnitudes = [1.0]
    for _ in range(10):
        adam_step(params, {"w": 2.0 * params["w"]}, state, lr=0.05)
        magnitudes.append(abs(float(params["w"][0])))
    assert all(b < a for a, b in zip(magnitudes, magnitudes[1:])), magnitudes


def test_adam_zero_lr_is_identity():
    rng = np.random.default_rng(2)
    params = {"w": rng.normal(size=(3, 3)), "b": rng.normal(size=3)}
    before = {k: v.copy() for k, v in params.items()}
    state = AdamState.zeros_like(params)
    adam_step(params, {k: rng.normal(size=v.shape) for k, v in params.items()}, state, lr=0.0, weight_decay=0.1)
    for name in params:
        assert np.array_equal(params[name], before[name])


def test_adam_decoupled_decay_applies_before_delta():
    params = {"w": np.array([2.0])}
    state = AdamState.zeros_like(params)
    adam_step(params, {"w": np.array([0.0])}, state, lr=0.1, weight_decay=0.5)
    # zero gradient: only the decay acts
    assert params["w"][0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0, abs=1e-15)


def test_adam_shape_mismatch():
    params = {"w": np.zeros(3)}
    state = AdamState.zeros_like(params)
    with pytest.raises(ShapeError):
        adam_step(params, {"w": np.zeros(4)}, state, lr=0.1)
    with pytest.raises(ShapeError):
        adam_step(params, {"v": np.zeros(3)}, state, lr=0.1)


def test_grad_check_exact_for_linear_quadratic():
    """Linear model with squared loss: analytic and numeric agree to rounding."""
    rng = np.random.default_rng(0)
    x = rng.uniform(1.0, 2.0, size=(6, 3))
    y = np.ones((6, 1))
    params = {"w": np.zeros((3, 1))}

    def closure():
        residual = x @ params["w"] - y
        loss = float(np.mean(residual**2))
        return loss, {"w": 2.0 * x.T @ residual / x.shape[0]}

    report = grad_check(closure, params)
    assert report.passed
    assert report.max_relative_error < 1e-8, report


def _tanh_network(seed):
    rng = np.random.default_rng(seed)
    hidden = DenseLayer.glorot(3, 5, Activation.TANH, rng)
    output = DenseLayer.glorot(5, 2, Activation.IDENTITY, rng)
    x = rng.normal(size=(6, 3))
    labels = rng.integers(0, 2, size=6)
    params = {**hidden.parameters("hidden"), **output.parameters("output")}

    def closure():
        h, hc = hidden.forward_cached(x)
        logits, oc = output.forward_cached(h)
        loss, grad = softmax_cross_entropy(logits, labels)
        grad_h, og = output.backward(oc, grad)
        _, hg = hidden.backward(hc, grad_h)
        return loss.loss, {
            "hidden.weights": hg["weights"],
            "hidden.bias": hg["bias"],
            "output.weights": og["weights"],
            "output.bias": og["bias"],
        }

    return closure, params


def test_grad_check_tanh_network_passes():
    closure, params = _tanh_network(4)
    report = grad_check(closure, params, tolerance=1e-5)
    assert report.passed, f"max relative error {report.max_relative_error} at {report.worst_block}"
    assert set(report.block_errors) == set(params)


def test_grad_check_catches_corrupted_gradient():
    """Doubling one gradient entry fails the check and names its block."""
    closure, params = _tanh_network(4)
    _, grads = closure()
    index = np.unravel_index(np.argmax(np.abs(grads["output.weights"])), grads["output.weights"].shape)

    def corrupted():
        loss, g = closure()
        g = {k: v.copy() for k, v in g.items()}
        g["output.weights"][index] *= 2.0
        return loss, g

    report = grad_check(corrupted, params, tolerance=1e-5)
    assert not report.passed
    assert report.worst_block == "output.weights"
    assert report.worst_index == tuple(int(i) for i in index)


def test_grad_check_rejects_non_finite_loss():
    params = {"w": np.zeros(2)}
    with pytest.raises(NumericalError):
        grad_check(lambda: (float("nan"), {"w": np.zeros(2)}), params)


def test_grad_check_restores_parameters():
    closure, params = _tanh_network(9)
    before = {k: v.copy() for k, v in params.items()}
    grad_check(closure, params)
    for name in params:
        assert np.array_equal(params[name], before[name])
