"""Tests for the D2V architecture, the pooling baseline and checkpoints."""

import numpy as np
import pytest

from domain2vec.errors import DataFormatError, EmptyDomainError, ShapeError
from domain2vec.model import (
    D2VModel,
    MainNetwork,
    ModelDims,
    PoolingMLP,
    TaskNetwork,
    backward,
    embed,
    forward,
    load_checkpoint,
    mean_pool,
    pooling_baseline_backward,
    pooling_baseline_forward,
    pooling_baseline_predict,
    predict,
    predict_from_logits,
    save_checkpoint,
)
from domain2vec.nn import Activation, AdamState, DenseLayer, adam_step, grad_check


def _model(seed, d=2, hidden_task=3, embed_dim=2, hidden_main=3, n_classes=2, activation=Activation.TANH):
    dims = ModelDims(d=d, hidden_task=hidden_task, embed_dim=embed_dim, hidden_main=hidden_main, n_classes=n_classes)
    return D2VModel.initialize(dims, np.random.default_rng(seed), activation)


def _instance(seed, m=4, n=6, d=2, n_classes=2):
    rng = np.random.default_rng(1000 + seed)
    return rng.normal(size=(m, d)), rng.normal(size=(n, d)), rng.integers(0, n_classes, size=m)


@pytest.mark.parametrize("seed", range(100))
def test_embedding_permutation_invariance(seed):
    """Shuffling the sample rows leaves the embedding unchanged."""
    rng = np.random.default_rng(seed)
    model = _model(seed, d=3, hidden_task=5, embed_dim=4, activation=Activation.RELU)
    sample = rng.normal(size=(int(rng.integers(1, 40)), 3))
    permuted = sample[rng.permutation(sample.shape[0])]
    a = model.task.embed_vector(sample)
    b = model.task.embed_vector(permuted)
    assert np.max(np.abs(a - b)) < 1e-12


@pytest.mark.parametrize("seed", range(100))
def test_embedding_duplication_invariance(seed):
    """Stacking the sample k times leaves the embedding unchanged."""
    rng = np.random.default_rng(seed)
    model = _model(seed, d=3, hidden_task=5, embed_dim=4, activation=Activation.RELU)
    sample = rng.normal(size=(int(rng.integers(1, 20)), 3))
    k = int(rng.integers(2, 5))
    a = model.task.embed_vector(sample)
    b = model.task.embed_vector(np.vstack([sample] * k))
    assert np.max(np.abs(a - b)) < 1e-12


@pytest.mark.parametrize("seed", range(100))
def test_prediction_invariant_to_task_batch_permutation(seed):
    rng = np.random.default_rng(seed)
    model = _model(seed, activation=Activation.RELU)
    points, sample, _ = _instance(seed, m=5, n=int(rng.integers(2, 30)))
    permuted = sample[rng.permutation(sample.shape[0])]
    assert np.array_equal(model.predict(points, sample), model.predict(points, permuted))
    assert np.max(np.abs(model.forward(points, sample) - model.forward(points, permuted))) < 1e-12


def test_single_row_embedding_is_projected_row():
    model = _model(0)
    row = np.array([[0.3, -0.7]])
    expected = model.task.projection.forward(model.task.hidden.forward(row))[0]
    assert np.allclose(embed(model.task, row, "x").vector, expected, rtol=0, atol=1e-15)


def test_empty_sample_rejected():
    model = _model(0)
    with pytest.raises(EmptyDomainError):
        model.embed(np.zeros((0, 2)))


def test_sample_dimension_mismatch():
    model = _model(0)
    with pytest.raises(ShapeError):
        forward(model, np.zeros((2, 2)), np.zeros((3, 5)))


def test_identical_points_give_identical_logits():
    model = _model(1)
    points = np.array([[0.2, 0.4], [0.2, 0.4]])
    logits = model.forward(points, np.random.default_rng(0).normal(size=(5, 2)))
    assert np.array_equal(logits[0], logits[1])


def test_zero_projection_feeds_zero_embedding():
    """A zero task projection equals a main network fed [points | 0]."""
    model = _model(2)
    model.task.projection.weights[:] = 0.0
    model.task.projection.bias[:] = 0.0
    points, sample, _ = _instance(2)
    extended = np.hstack([points, np.zeros((points.shape[0], 2))])
    expected = model.main.output.forward(model.main.hidden.forward(extended))
    assert np.array_equal(model.forward(points, sample), expected)


def test_predict_tie_breaks_to_lowest_index():
    assert predict_from_logits(np.array([[0.2, 0.9], [0.5, 0.5]])).tolist() == [1, 0]


def test_predict_invariant_to_logit_shift():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(10, 3))
    assert np.array_equal(predict_from_logits(logits), predict_from_logits(logits + 7.5))


@pytest.mark.parametrize("seed", range(20))
def test_d2v_gradients_match_finite_differences(seed):
    """Full backward, task path included, on small random instances."""
    model = _model(seed)
    points, sample, labels = _instance(seed)

    def closure():
        loss, grads = backward(model, points, sample, labels)
        return loss.loss, grads

    report = grad_check(closure, model.parameters(), tolerance=1e-5)
    assert report.passed, f"max relative error {report.max_relative_error} at {report.worst_block}{report.worst_index}"
    assert report.block_errors.keys() == model.parameters().keys()


@pytest.mark.parametrize("seed", range(5))
def test_d2v_gradients_with_relu(seed):
    model = _model(seed, d=3, hidden_task=4, embed_dim=3, hidden_main=5, n_classes=3, activation=Activation.RELU)
    points, sample, labels = _instance(seed, m=5, n=7, d=3, n_classes=3)

    def closure():
        loss, grads = model.backward(points, sample, labels)
        return loss.loss, grads

    assert grad_check(closure, model.parameters(), tolerance=1e-5).passed


@pytest.mark.parametrize("seed", range(20))
def test_baseline_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    mlp = PoolingMLP.initialize(3, 5, 2, rng, Activation.TANH)
    points = rng.normal(size=(6, 3))
    labels = rng.integers(0, 2, size=6)

    def closure():
        loss, grads = pooling_baseline_backward(mlp, points, labels)
        return loss.loss, grads

    report = grad_check(closure, mlp.parameters(), tolerance=1e-5)
    assert report.passed, f"max relative error {report.max_relative_error} at {report.worst_block}"


def test_task_gradient_receives_pooled_share():
    """A sample of one row repeated n times gets the same task gradient as the single row."""
    model = _model(3)
    points, _, labels = _instance(3)
    row = np.array([[0.4, -0.2]])
    _, single = model.backward(points, row, labels)
    _, repeated = model.backward(points, np.vstack([row] * 5), labels)
    for name in ("task.hidden.weights", "task.hidden.bias", "task.projection.weights", "task.projection.bias"):
        assert np.allclose(single[name], repeated[name], rtol=0, atol=1e-14), name


def test_zero_projection_main_gradients_equal_plain_mlp():
    model = _model(5)
    model.task.projection.weights[:] = 0.0
    model.task.projection.bias[:] = 0.0
    points, sample, labels = _instance(5)
    _, grads = model.backward(points, sample, labels)
    mlp = PoolingMLP.from_main(model.main)
    _, plain = mlp.backward(np.hstack([points, np.zeros((points.shape[0], 2))]), labels)
    for name in ("hidden.weights", "hidden.bias", "output.weights", "output.bias"):
        assert np.array_equal(grads[f"main.{name}"], plain[name]), name


def test_doubled_loss_weights_double_gradients():
    model = _model(6)
    points, sample, labels = _instance(6)
    _, grads = model.backward(points, sample, labels)
    _, doubled = model.backward(points, sample, labels, sample_weight=np.full(points.shape[0], 2.0))
    for name in grads:
        assert np.allclose(doubled[name], 2.0 * grads[name], rtol=1e-12, atol=1e-15), name


def test_zero_embedding_model_matches_baseline():
    """D2V with D_t = 0 and a baseline sharing its weights agree bit for bit."""
    model = _model(7, embed_dim=0)
    mlp = PoolingMLP.from_main(model.main)
    points, sample, labels = _instance(7)
    assert np.array_equal(model.forward(points, sample), pooling_baseline_forward(mlp, points))
    d2v_loss, _ = model.backward(points, sample, labels)
    mlp_loss, _ = mlp.backward(points, labels)
    assert d2v_loss.loss == mlp_loss.loss
    assert np.array_equal(predict(model, points, sample), pooling_baseline_predict(mlp, points))


def test_baseline_fits_separable_domain():
    """Full-batch Adam on a separable 2-D domain reaches 100% train accuracy."""
    rng = np.random.default_rng(0)
    points = rng.uniform(-1, 1, size=(64, 2))
    points = points[np.abs(points[:, 0]) > 0.1]
    labels = (points[:, 0] > 0).astype(np.int64)
    mlp = PoolingMLP.initialize(2, 8, 2, np.random.default_rng(1))
    params = mlp.parameters()
    state = AdamState.zeros_like(params)
    for _ in range(500):
        _, grads = mlp.backward(points, labels)
        adam_step(params, grads, state, lr=0.05)
    assert np.array_equal(mlp.predict(points), labels)


def test_model_dims_validated():
    with pytest.raises(ShapeError):
        D2VModel(
            task=TaskNetwork(
                hidden=DenseLayer.zeros(2, 3, Activation.RELU),
                projection=DenseLayer.zeros(3, 2, Activation.IDENTITY),
            ),
            main=MainNetwork(
                hidden=DenseLayer.zeros(3, 3, Activation.RELU),
                output=DenseLayer.zeros(3, 2, Activation.IDENTITY),
            ),
            dims=ModelDims(d=2, hidden_task=3, embed_dim=2, hidden_main=3, n_classes=2),
        )


def test_initialization_is_seeded():
    a, b = _model(11), _model(11)
    for name, value in a.parameters().items():
        assert np.array_equal(value, b.parameters()[name])


def test_mean_pool_matches_numpy_mean():
    rows = np.random.default_rng(0).normal(size=(17, 4))
    assert np.allclose(mean_pool(rows), rows.mean(axis=0), rtol=0, atol=1e-15)


@pytest.mark.parametrize("kind", ["d2v", "pooling"])
def test_checkpoint_round_trip(tmp_path, kind):
    if kind == "d2v":
        model = _model(12)
    else:
        model = PoolingMLP.initialize(2, 4, 2, np.random.default_rng(12))
    path = save_checkpoint(model, tmp_path / "model.json", config_hash="abc")
    loaded, config_hash = load_checkpoint(path)
    assert config_hash == "abc"
    assert loaded.kind == kind
    for name, value in model.parameters().items():
        assert np.array_equal(loaded.parameters()[name], value), name


def test_checkpoint_bytes_are_reproducible(tmp_path):
    first = save_checkpoint(_model(13), tmp_path / "a.json")
    second = save_checkpoint(_model(13), tmp_path / "b.json")
    assert first.read_bytes() == second.read_bytes()


def test_checkpoint_rejects_unknown_schema(tmp_path):
    path = tmp_path / "model.json"
    path.write_text('{"schema_version": 99, "kind": "d2v", "layers": {}}\n')
    with pytest.raises(DataFormatError):
        load_checkpoint(path)


def test_checkpoint_rejects_missing_layer(tmp_path):
    path = save_checkpoint(_model(14), tmp_path / "model.json")
    text = path.read_text().replace('"task.projection"', '"task.renamed"')
    path.write_text(text)
    with pytest.raises(DataFormatError):
        load_checkpoint(path)


def test_checkpoint_records_pooling(tmp_path):
    path = save_checkpoint(_model(15), tmp_path / "model.json")
    assert '"pooling": "mean"' in path.read_text()
    path.write_text(path.read_text().replace('"pooling": "mean"', '"pooling": "max"'))
    with pytest.raises(DataFormatError):
        load_checkpoint(path)
