"""The Domain2Vec architecture and the pooling-NN baseline.

A task network maps every row of an unlabeled domain sample through one
hidden layer and a linear projection, then mean-pools over the rows to get a
fixed-length domain embedding. The main network classifies each point from
its features concatenated with that embedding.
"""

import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt

from .errors import (
    ConfigError,
    DataFormatError,
    EmptyDomainError,
    NumericalError,
    ShapeError,
    shape_mismatch,
)
from .json_utils import decode_array, dump_json, encode_array, load_json
from .nn import (
    Activation,
    DenseLayer,
    LossValue,
    Matrix,
    Params,
    as_matrix,
    softmax_cross_entropy,
)

logger = logging.getLogger(__name__)

CHECKPOINT_SCHEMA_VERSION = 1


class Pooling(str, Enum):
    MEAN = "mean"


def mean_pool(rows: Matrix) -> Matrix:
    """
    Column means computed with correctly rounded sums.

    math.fsum is exact before its single rounding, so the result does not
    depend on row order and is unchanged when every row is repeated k times.
    """
    n = rows.shape[0]
    return np.array([math.fsum(column) for column in rows.T.tolist()], dtype=np.float64) / n


@dataclass(frozen=True)
class DomainEmbedding:
    domain_id: str
    vector: Matrix

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])


@dataclass(frozen=True)
class ModelDims:
    """Architecture sizes: d inputs, H_t / D_t task sizes, H_m main hidden, C classes."""

    d: int
    hidden_task: int
    embed_dim: int
    hidden_main: int
    n_classes: int

    def __post_init__(self):
        for name in ("d", "hidden_task", "hidden_main", "n_classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}", field=name)
        if self.embed_dim < 0:
            raise ConfigError(f"embed_dim must be >= 0, got {self.embed_dim}", field="embed_dim")


@dataclass
class TaskNetwork:
    hidden: DenseLayer
    projection: DenseLayer
    pooling: Pooling = Pooling.MEAN

    def __post_init__(self):
        try:
            self.pooling = Pooling(self.pooling)
        except ValueError as exc:
            raise ConfigError(f"unknown pooling {self.pooling!r}", field="pooling") from exc
        if self.projection.in_dim != self.hidden.out_dim:
            raise shape_mismatch(
                "task projection weights",
                (self.hidden.out_dim, self.projection.out_dim),
                self.projection.weights.shape,
            )
        if self.projection.activation is not Activation.IDENTITY:
            raise ConfigError("task projection must use the identity activation")

    @property
    def in_dim(self) -> int:
        return self.hidden.in_dim

    @property
    def embed_dim(self) -> int:
        return self.projection.out_dim

    def _check_sample(self, sample: Matrix) -> Matrix:
        sample = as_matrix(sample, "domain sample")
        if sample.shape[0] == 0:
            raise EmptyDomainError("cannot embed an empty domain sample")
        if sample.shape[1] != self.in_dim:
            raise shape_mismatch("domain sample", ("n", self.in_dim), sample.shape)
        return sample

    def embed_vector(self, sample: Matrix) -> Matrix:
        sample = self._check_sample(sample)
        return mean_pool(self.projection.forward(self.hidden.forward(sample)))

    def embed(self, sample: Matrix, domain_id: str = "") -> DomainEmbedding:
        return DomainEmbedding(domain_id=domain_id, vector=self.embed_vector(sample))

    def parameters(self) -> Params:
        return {
            **self.hidden.parameters("task.hidden"),
            **self.projection.parameters("task.projection"),
        }


def embed(task: TaskNetwork, sample: Matrix, domain_id: str = "") -> DomainEmbedding:
    """Permutation-invariant embedding of one domain sample."""
    return task.embed(sample, domain_id)


@dataclass
class MainNetwork:
    hidden: DenseLayer
    output: DenseLayer

    def __post_init__(self):
        if self.output.in_dim != self.hidden.out_dim:
            raise shape_mismatch(
                "main output weights",
                (self.hidden.out_dim, self.output.out_dim),
                self.output.weights.shape,
            )

    def parameters(self, prefix: str = "main") -> Params:
        return {
            **self.hidden.parameters(f"{prefix}.hidden"),
            **self.output.parameters(f"{prefix}.output"),
        }


def predict_from_logits(logits: Matrix) -> npt.NDArray[np.int64]:
    """Row-wise argmax; ties go to the lowest class index."""
    return np.argmax(logits, axis=1).astype(np.int64)


@dataclass
class D2VModel:
    task: TaskNetwork
    main: MainNetwork
    dims: ModelDims

    kind = "d2v"

    def __post_init__(self):
        dims = self.dims
        if self.task.in_dim != dims.d or self.task.hidden.out_dim != dims.hidden_task:
            raise shape_mismatch("task hidden weights", (dims.d, dims.hidden_task), self.task.hidden.weights.shape)
        if self.task.embed_dim != dims.embed_dim:
            raise shape_mismatch(
                "task projection weights", (dims.hidden_task, dims.embed_dim), self.task.projection.weights.shape
            )
        expected = (dims.d + dims.embed_dim, dims.hidden_main)
        if self.main.hidden.weights.shape != expected:
            raise shape_mismatch("main hidden weights", expected, self.main.hidden.weights.shape)
        if self.main.output.weights.shape != (dims.hidden_main, dims.n_classes):
            raise shape_mismatch(
                "main output weights", (dims.hidden_main, dims.n_classes), self.main.output.weights.shape
            )

    @classmethod
    def initialize(
        cls,
        dims: ModelDims,
        rng: np.random.Generator,
        activation: Union[Activation, str] = Activation.RELU,
    ) -> "D2VModel":
        """Glorot-initialised model; layers are drawn task-first from ``rng``."""
        activation = Activation(activation)
        task = TaskNetwork(
            hidden=DenseLayer.glorot(dims.d, dims.hidden_task, activation, rng),
            projection=DenseLayer.glorot(dims.hidden_task, dims.embed_dim, Activation.IDENTITY, rng),
        )
        main = MainNetwork(
            hidden=DenseLayer.glorot(dims.d + dims.embed_dim, dims.hidden_main, activation, rng),
            output=DenseLayer.glorot(dims.hidden_main, dims.n_classes, Activation.IDENTITY, rng),
        )
        return cls(task=task, main=main, dims=dims)

    def parameters(self) -> Params:
        return {**self.task.parameters(), **self.main.parameters()}

    def _check_points(self, points: Matrix) -> Matrix:
        points = as_matrix(points, "points")
        if points.shape[0] == 0:
            raise EmptyDomainError("no points to classify")
        if points.shape[1] != self.dims.d:
            raise shape_mismatch("points", ("m", self.dims.d), points.shape)
        return points

    def _extend(self, points: Matrix, vector: Matrix) -> Matrix:
        tiled = np.broadcast_to(vector, (points.shape[0], vector.shape[0]))
        return np.hstack([points, tiled])

    def embed(self, sample: Matrix, domain_id: str = "") -> DomainEmbedding:
        return self.task.embed(sample, domain_id)

    def embed_domains(self, domains: Sequence[Any]) -> List[DomainEmbedding]:
        """Embeddings of whole domains (anything with ``domain_id`` and ``features``)."""
        return [self.task.embed(domain.features, domain.domain_id) for domain in domains]

    def logits_from_embedding(self, points: Matrix, vector: Matrix) -> Matrix:
        points = self._check_points(points)
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.dims.embed_dim,):
            raise shape_mismatch("domain embedding", (self.dims.embed_dim,), vector.shape)
        return self.main.output.forward(self.main.hidden.forward(self._extend(points, vector)))

    def forward(self, points: Matrix, domain_sample: Matrix) -> Matrix:
        return self.logits_from_embedding(points, self.task.embed_vector(domain_sample))

    def predict(self, points: Matrix, domain_sample: Matrix) -> npt.NDArray[np.int64]:
        return predict_from_logits(self.forward(points, domain_sample))

    def backward(
        self,
        points: Matrix,
        domain_sample: Matrix,
        labels: npt.ArrayLike,
        sample_weight: Optional[npt.ArrayLike] = None,
    ) -> Tuple[LossValue, Params]:
        """
        Exact gradients of the mean cross-entropy w.r.t. every parameter.

        The embedding gradient is the column sum of the main network's input
        gradient over its embedding columns; each task-sample row receives
        1/n of it through the mean pooling.
        """
        points = self._check_points(points)
        sample = self.task._check_sample(domain_sample)
        n = sample.shape[0]

        task_hidden, task_hidden_cache = self.task.hidden.forward_cached(sample)
        projected, projection_cache = self.task.projection.forward_cached(task_hidden)
        vector = mean_pool(projected)

        main_hidden, main_hidden_cache = self.main.hidden.forward_cached(self._extend(points, vector))
        logits, output_cache = self.main.output.forward_cached(main_hidden)
        loss, grad_logits = softmax_cross_entropy(logits, labels, sample_weight)
        if not math.isfinite(loss.loss):
            raise NumericalError(f"non-finite training loss {loss.loss}")

        grad_main_hidden, output_grads = self.main.output.backward(output_cache, grad_logits)
        grad_extended, hidden_grads = self.main.hidden.backward(main_hidden_cache, grad_main_hidden)
        grad_vector = grad_extended[:, self.dims.d:].sum(axis=0)
        grad_projected = np.broadcast_to(grad_vector / n, projected.shape)
        grad_task_hidden, projection_grads = self.task.projection.backward(projection_cache, grad_projected)
        _, task_hidden_grads = self.task.hidden.backward(task_hidden_cache, grad_task_hidden)

        grads = {
            "task.hidden.weights": task_hidden_grads["weights"],
            "task.hidden.bias": task_hidden_grads["bias"],
            "task.projection.weights": projection_grads["weights"],
            "task.projection.bias": projection_grads["bias"],
            "main.hidden.weights": hidden_grads["weights"],
            "main.hidden.bias": hidden_grads["bias"],
            "main.output.weights": output_grads["weights"],
            "main.output.bias": output_grads["bias"],
        }
        return loss, grads


def forward(model: D2VModel, points: Matrix, domain_sample: Matrix) -> Matrix:
    return model.forward(points, domain_sample)


def backward(
    model: D2VModel,
    points: Matrix,
    domain_sample: Matrix,
    labels: npt.ArrayLike,
    sample_weight: Optional[npt.ArrayLike] = None,
) -> Tuple[LossValue, Params]:
    return model.backward(points, domain_sample, labels, sample_weight)


def predict(model: D2VModel, points: Matrix, domain_sample: Matrix) -> npt.NDArray[np.int64]:
    return model.predict(points, domain_sample)


@dataclass
class PoolingMLP:
    """Single-hidden-layer network trained on the union of all domains."""

    hidden: DenseLayer
    output: DenseLayer

    kind = "pooling"

    def __post_init__(self):
        if self.output.in_dim != self.hidden.out_dim:
            raise shape_mismatch(
                "output weights", (self.hidden.out_dim, self.output.out_dim), self.output.weights.shape
            )

    @property
    def in_dim(self) -> int:
        return self.hidden.in_dim

    @property
    def n_classes(self) -> int:
        return self.output.out_dim

    @classmethod
    def initialize(
        cls,
        d: int,
        hidden: int,
        n_classes: int,
        rng: np.random.Generator,
        activation: Union[Activation, str] = Activation.RELU,
    ) -> "PoolingMLP":
        activation = Activation(activation)
        return cls(
            hidden=DenseLayer.glorot(d, hidden, activation, rng),
            output=DenseLayer.glorot(hidden, n_classes, Activation.IDENTITY, rng),
        )

    @classmethod
    def from_main(cls, main: MainNetwork) -> "PoolingMLP":
        """Copy of a main network's layers, used to compare against D2V with D_t = 0."""
        return cls(
            hidden=DenseLayer(main.hidden.weights.copy(), main.hidden.bias.copy(), main.hidden.activation),
            output=DenseLayer(main.output.weights.copy(), main.output.bias.copy(), main.output.activation),
        )

    def parameters(self) -> Params:
        return {**self.hidden.parameters("hidden"), **self.output.parameters("output")}

    def forward(self, points: Matrix, domain_sample: Optional[Matrix] = None) -> Matrix:
        """Logits; ``domain_sample`` is accepted for interface parity and ignored."""
        points = as_matrix(points, "points", cols=self.hidden.in_dim)
        return self.output.forward(self.hidden.forward(points))

    def predict(self, points: Matrix, domain_sample: Optional[Matrix] = None) -> npt.NDArray[np.int64]:
        return predict_from_logits(self.forward(points))

    def backward(
        self,
        points: Matrix,
        labels: npt.ArrayLike,
        sample_weight: Optional[npt.ArrayLike] = None,
    ) -> Tuple[LossValue, Params]:
        points = as_matrix(points, "points", cols=self.hidden.in_dim)
        hidden, hidden_cache = self.hidden.forward_cached(points)
        logits, output_cache = self.output.forward_cached(hidden)
        loss, grad_logits = softmax_cross_entropy(logits, labels, sample_weight)
        if not math.isfinite(loss.loss):
            raise NumericalError(f"non-finite training loss {loss.loss}")
        grad_hidden, output_grads = self.output.backward(output_cache, grad_logits)
        _, hidden_grads = self.hidden.backward(hidden_cache, grad_hidden)
        return loss, {
            "hidden.weights": hidden_grads["weights"],
            "hidden.bias": hidden_grads["bias"],
            "output.weights": output_grads["weights"],
            "output.bias": output_grads["bias"],
        }


def pooling_baseline_forward(mlp: PoolingMLP, points: Matrix) -> Matrix:
    return mlp.forward(points)


def pooling_baseline_backward(
    mlp: PoolingMLP, points: Matrix, labels: npt.ArrayLike
) -> Tuple[LossValue, Params]:
    return mlp.backward(points, labels)


def pooling_baseline_predict(mlp: PoolingMLP, points: Matrix) -> npt.NDArray[np.int64]:
    return mlp.predict(points)


Model = Union[D2VModel, PoolingMLP]


def _layer_payload(layer: DenseLayer) -> Dict[str, Any]:
    return {
        "activation": layer.activation.value,
        "weights": encode_array(layer.weights),
        "bias": encode_array(layer.bias),
    }


def _layer_from_payload(payload: Dict[str, Any], where: str) -> DenseLayer:
    try:
        return DenseLayer(
            decode_array(payload["weights"]),
            decode_array(payload["bias"]),
            Activation(payload["activation"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"checkpoint layer {where} is malformed: {exc}", layer=where) from exc


def save_checkpoint(model: Model, path: Union[str, Path], config_hash: str = "") -> Path:
    """
    Write a schema-versioned JSON checkpoint.

    Arrays are stored as base64 of their little-endian row-major float64
    bytes, so identical weights always give byte-identical files.
    """
    if isinstance(model, D2VModel):
        dims = asdict(model.dims)
        dims["pooling"] = model.task.pooling.value
        layers = {
            "task.hidden": model.task.hidden,
            "task.projection": model.task.projection,
            "main.hidden": model.main.hidden,
            "main.output": model.main.output,
        }
    else:
        dims = {"d": model.in_dim, "hidden": model.hidden.out_dim, "n_classes": model.n_classes}
        layers = {"hidden": model.hidden, "output": model.output}
    payload = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "kind": model.kind,
        "dims": dims,
        "config_hash": config_hash,
        "layers": {name: _layer_payload(layer) for name, layer in layers.items()},
    }
    path = Path(path)
    dump_json(path, payload)
    logger.debug("wrote %s checkpoint to %s", model.kind, path)
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[Model, str]:
    """
    Read a checkpoint written by save_checkpoint.

    Returns:
        Tuple of (model, config hash recorded in the checkpoint)
    """
    payload = load_json(path)
    if not isinstance(payload, dict):
        raise DataFormatError(f"{path}: checkpoint must be a JSON object")
    version = payload.get("schema_version")
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise DataFormatError(
            f"{path}: unsupported checkpoint schema_version {version!r}",
            expected=CHECKPOINT_SCHEMA_VERSION,
            actual=version,
        )
    layers = payload.get("layers", {})
    kind = payload.get("kind")
    try:
        if kind == D2VModel.kind:
            model: Model = D2VModel(
                task=TaskNetwork(
                    hidden=_layer_from_payload(layers["task.hidden"], "task.hidden"),
                    projection=_layer_from_payload(layers["task.projection"], "task.projection"),
                    pooling=payload["dims"].get("pooling", Pooling.MEAN.value),
                ),
                main=MainNetwork(
                    hidden=_layer_from_payload(layers["main.hidden"], "main.hidden"),
                    output=_layer_from_payload(layers["main.output"], "main.output"),
                ),
                dims=ModelDims(**{k: v for k, v in payload["dims"].items() if k != "pooling"}),
            )
        elif kind == PoolingMLP.kind:
            model = PoolingMLP(
                hidden=_layer_from_payload(layers["hidden"], "hidden"),
                output=_layer_from_payload(layers["output"], "output"),
            )
        else:
            raise DataFormatError(f"{path}: unknown checkpoint kind {kind!r}", kind=kind)
    except KeyError as exc:
        raise DataFormatError(f"{path}: checkpoint is missing {exc}") from exc
    except (ShapeError, ConfigError, TypeError, AttributeError) as exc:
        raise DataFormatError(f"{path}: inconsistent checkpoint: {exc}") from exc
    return model, str(payload.get("config_hash", ""))
