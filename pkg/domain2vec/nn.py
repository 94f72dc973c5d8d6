"""Minimal dense neural-network engine.

Matrices are float64 numpy arrays. Layers are pure: ``forward`` never mutates
the layer, ``forward_cached`` additionally returns what ``backward`` needs, so
a model can be shared read-only across threads while predicting.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import numpy.typing as npt

from .errors import LabelError, NumericalError, ShapeError, ValidationError, shape_mismatch

logger = logging.getLogger(__name__)

Matrix = npt.NDArray[np.float64]
Params = Dict[str, Matrix]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def as_matrix(value: npt.ArrayLike, name: str = "input", cols: Optional[int] = None) -> Matrix:
    """Coerce to a finite 2-D float64 array, optionally checking its column count."""
    matrix = np.asarray(value, dtype=np.float64)
    if matrix.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {matrix.shape}", actual=matrix.shape)
    if cols is not None and matrix.shape[1] != cols:
        raise shape_mismatch(name, ("n", cols), matrix.shape)
    if not np.all(np.isfinite(matrix)):
        raise NumericalError(f"{name} contains non-finite entries", name=name)
    return matrix


def as_labels(value: npt.ArrayLike, n: int, n_classes: int) -> npt.NDArray[np.int64]:
    """Validate class indices: length n, integral, in [0, n_classes)."""
    labels = np.asarray(value)
    if labels.shape != (n,):
        raise shape_mismatch("labels", (n,), labels.shape)
    if labels.dtype.kind not in "iu":
        if labels.dtype.kind != "f" or not np.all(labels == np.round(labels)):
            raise LabelError(f"labels must be integers, got dtype {labels.dtype}")
    labels = labels.astype(np.int64)
    bad = np.flatnonzero((labels < 0) | (labels >= n_classes))
    if bad.size:
        index = int(bad[0])
        raise LabelError(
            f"label {labels[index]} of example {index} is outside [0, {n_classes})",
            example=index,
            label=int(labels[index]),
            n_classes=n_classes,
        )
    return labels


class Activation(str, Enum):
    RELU = "relu"
    TANH = "tanh"
    IDENTITY = "identity"

    def apply(self, pre: Matrix) -> Matrix:
        if self is Activation.RELU:
            return np.maximum(pre, 0.0)
        if self is Activation.TANH:
            return np.tanh(pre)
        return pre

    def derivative(self, pre: Matrix) -> Matrix:
        if self is Activation.RELU:
            return (pre > 0.0).astype(np.float64)
        if self is Activation.TANH:
            return 1.0 - np.tanh(pre) ** 2
        return np.ones_like(pre)


@dataclass(frozen=True)
class LayerCache:
    """Input and pre-activation of one forward pass."""

    input: Matrix
    pre: Matrix


@dataclass
class DenseLayer:
    """Fully connected layer ``activation(x @ weights + bias)``."""

    weights: Matrix
    bias: Matrix
    activation: Activation = Activation.RELU

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        self.activation = Activation(self.activation)
        if self.weights.ndim != 2:
            raise ShapeError(f"weights must be 2-D, got shape {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[1],):
            raise shape_mismatch("bias", (self.weights.shape[1],), self.bias.shape)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def glorot(
        cls,
        in_dim: int,
        out_dim: int,
        activation: Activation,
        rng: np.random.Generator,
    ) -> "DenseLayer":
        """Uniform Glorot weights in ±sqrt(6 / (fan_in + fan_out)), zero bias."""
        fan = in_dim + out_dim
        limit = math.sqrt(6.0 / fan) if fan > 0 else 0.0
        weights = rng.uniform(-limit, limit, size=(in_dim, out_dim))
        return cls(weights, np.zeros(out_dim), activation)

    @classmethod
    def zeros(cls, in_dim: int, out_dim: int, activation: Activation) -> "DenseLayer":
        return cls(np.zeros((in_dim, out_dim)), np.zeros(out_dim), activation)

    def _check_input(self, x: Matrix) -> Matrix:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(
                f"layer input shape {x.shape} does not match weights shape "
                f"{self.weights.shape}: expected (n, {self.in_dim})",
                input_shape=x.shape,
                weights_shape=self.weights.shape,
            )
        return x

    def forward(self, x: Matrix) -> Matrix:
        return self.forward_cached(x)[0]

    def forward_cached(self, x: Matrix) -> Tuple[Matrix, LayerCache]:
        x = self._check_input(x)
        pre = x @ self.weights + self.bias
        return self.activation.apply(pre), LayerCache(input=x, pre=pre)

    def backward(self, cache: LayerCache, grad_out: Matrix) -> Tuple[Matrix, Params]:
        """
        Propagate an upstream gradient through the layer.

        Args:
            cache: Cache returned by forward_cached for the same input
            grad_out: Gradient of the loss w.r.t. the layer output (n × out_dim)

        Returns:
            Tuple of (gradient w.r.t. the layer input, {"weights": ..., "bias": ...})
        """
        if grad_out.shape != cache.pre.shape:
            raise shape_mismatch("upstream gradient", cache.pre.shape, grad_out.shape)
        grad_pre = grad_out * self.activation.derivative(cache.pre)
        grads = {
            "weights": cache.input.T @ grad_pre,
            "bias": grad_pre.sum(axis=0),
        }
        return grad_pre @ self.weights.T, grads

    def parameters(self, prefix: str) -> Params:
        """Live references to the layer arrays, keyed ``<prefix>.weights`` / ``<prefix>.bias``."""
        return {f"{prefix}.weights": self.weights, f"{prefix}.bias": self.bias}


def dense_forward(layer: DenseLayer, x: Matrix) -> Matrix:
    """``activation(x @ W + b)`` for a single layer."""
    return layer.forward(x)


@dataclass(frozen=True)
class LossValue:
    """Mean loss together with the per-example losses it averages."""

    loss: float
    per_example: Matrix


def softmax(logits: Matrix) -> Matrix:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def softmax_cross_entropy(
    logits: Matrix,
    labels: npt.ArrayLike,
    sample_weight: Optional[npt.ArrayLike] = None,
) -> Tuple[LossValue, Matrix]:
    """
    Mean softmax cross-entropy and its gradient w.r.t. the logits.

    Args:
        logits: n × C matrix
        labels: length-n class indices
        sample_weight: optional length-n per-example loss weights (default 1)

    Returns:
        Tuple of (LossValue, n × C gradient)
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] < 1:
        raise ShapeError(f"logits must be a non-empty 2-D matrix, got shape {logits.shape}")
    n, n_classes = logits.shape
    labels = as_labels(labels, n, n_classes)
    weight = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    if weight.shape != (n,):
        raise shape_mismatch("sample_weight", (n,), weight.shape)

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    per_example = weight * (log_norm - shifted[rows, labels])

    grad = softmax(logits)
    grad[rows, labels] -= 1.0
    grad *= (weight / n)[:, None]
    return LossValue(loss=float(per_example.mean()), per_example=per_example), grad


@dataclass
class AdamState:
    """First/second moment estimates and the step counter of Adam."""

    step: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params: Params) -> "AdamState":
        return cls(
            step=0,
            m={name: np.zeros_like(p) for name, p in params.items()},
            v={name: np.zeros_like(p) for name, p in params.items()},
        )


def adam_step(
    params: Params,
    grads: Params,
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
) -> Tuple[Params, AdamState]:
    """
    One Adam update with decoupled weight decay, applied in place.

    The decay ``p -= lr * weight_decay * p`` runs before the Adam delta
    ``p -= lr * m_hat / (sqrt(v_hat) + eps)``.

    Returns:
        The (mutated) params and state.
    """
    if lr < 0 or not math.isfinite(lr):
        raise ValidationError(f"learning rate must be finite and >= 0, got {lr}", lr=lr)
    if weight_decay < 0 or not math.isfinite(weight_decay):
        raise ValidationError(f"weight decay must be finite and >= 0, got {weight_decay}")
    if set(grads) != set(params) or set(state.m) != set(params):
        raise ShapeError(
            "parameter, gradient and optimizer-state blocks differ",
            params=sorted(params),
            grads=sorted(grads),
            state=sorted(state.m),
        )
    for name, p in params.items():
        if grads[name].shape != p.shape:
            raise shape_mismatch(f"gradient {name}", p.shape, grads[name].shape)
        if state.m[name].shape != p.shape:
            raise shape_mismatch(f"optimizer state {name}", p.shape, state.m[name].shape)

    state.step += 1
    bias1 = 1.0 - ADAM_BETA1 ** state.step
    bias2 = 1.0 - ADAM_BETA2 ** state.step
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        if weight_decay:
            p -= lr * weight_decay * p
        p -= lr * (m / bias1) / (np.sqrt(v / bias2) + ADAM_EPS)
    return params, state


@dataclass(frozen=True)
class GradCheckReport:
    max_relative_error: float
    passed: bool
    worst_block: Optional[str]
    worst_index: Optional[Tuple[int, ...]]
    block_errors: Dict[str, float]


# Entries whose analytic and numeric magnitudes sum below this are compared
# on an absolute scale; central differences carry ~1e-10 absolute noise.
GRAD_CHECK_FLOOR = 1e-4


def grad_check(
    closure: Callable[[], Tuple[float, Params]],
    params: Params,
    tolerance: float = 1e-5,
    h: float = 1e-5,
) -> GradCheckReport:
    """
    Compare analytic gradients against central finite differences.

    Args:
        closure: Computes (loss, analytic gradients) from the current values of
            ``params``; the arrays are perturbed in place between calls.
        params: Live parameter arrays, keyed like the gradients.
        tolerance: Pass iff the maximum relative error is below this.
        h: Finite-difference step.

    Returns:
        GradCheckReport naming the block and entry with the largest error.
    """
    loss, analytic = closure()
    if not math.isfinite(loss):
        raise NumericalError(f"closure returned a non-finite loss ({loss})")
    analytic = {name: np.array(g, dtype=np.float64) for name, g in analytic.items()}

    worst = 0.0
    worst_block: Optional[str] = None
    worst_index: Optional[Tuple[int, ...]] = None
    block_errors: Dict[str, float] = {}
    for name, p in params.items():
        if analytic[name].shape != p.shape:
            raise shape_mismatch(f"analytic gradient {name}", p.shape, analytic[name].shape)
        block_worst = 0.0
        for index in np.ndindex(p.shape):
            original = p[index]
            p[index] = original + h
            plus = closure()[0]
            p[index] = original - h
            minus = closure()[0]
            p[index] = original
            if not (math.isfinite(plus) and math.isfinite(minus)):
                raise NumericalError(f"non-finite loss while perturbing {name}{list(index)}")
            numeric = (plus - minus) / (2.0 * h)
            exact = analytic[name][index]
            denom = max(abs(exact) + abs(numeric), GRAD_CHECK_FLOOR)
            error = abs(exact - numeric) / denom
            if error > block_worst:
                block_worst = error
            if error > worst:
                worst, worst_block, worst_index = error, name, tuple(int(i) for i in index)
        block_errors[name] = block_worst

    passed = worst < tolerance
    if not passed:
        logger.debug("grad_check failed: %s%s relative error %.3e", worst_block, worst_index, worst)
    return GradCheckReport(
        max_relative_error=worst,
        passed=passed,
        worst_block=worst_block,
        worst_index=worst_index,
        block_errors=block_errors,
    )
