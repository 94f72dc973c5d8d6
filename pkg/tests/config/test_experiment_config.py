"""Tests for experiment configs, search spaces and environment settings."""

import json

import numpy as np
import pytest

from domain2vec.config import (
    DEFAULT_GRID,
    ExperimentConfig,
    SearchSpace,
    SweepGrid,
    load_config,
    load_search_space,
    resolve_threads,
    save_config,
)
from domain2vec.errors import ConfigError, DataFormatError


def test_defaults_are_valid():
    config = ExperimentConfig()
    assert config.task_batch == "all"
    assert config.activation == "relu"
    assert config.to_dict()["schema_version"] == 1


@pytest.mark.parametrize(
    "field, value",
    [
        ("lr", 0.0),
        ("lr", float("nan")),
        ("weight_decay", -1e-3),
        ("hidden_task", 0),
        ("hidden_main", 2.5),
        ("embed_dim", -1),
        ("main_batch", 0),
        ("epochs", -1),
        ("steps_per_domain", 0),
        ("activation", "sigmoid"),
        ("activation", "identity"),
        ("seed", -1),
        ("seed", 2**64),
        ("seed", True),
        ("schema_version", 2),
    ],
)
def test_invalid_field_is_named(field, value):
    with pytest.raises(ConfigError) as excinfo:
        ExperimentConfig(**{field: value})
    assert excinfo.value.context["field"] == field, excinfo.value.message


def test_task_batch_must_cover_main_batch():
    ExperimentConfig(main_batch=4, task_batch=4)
    with pytest.raises(ConfigError) as excinfo:
        ExperimentConfig(main_batch=4, task_batch=3)
    assert excinfo.value.context["field"] == "task_batch"


def test_embed_dim_zero_allowed():
    assert ExperimentConfig(embed_dim=0).embed_dim == 0


def test_from_dict_rejects_unknown_field():
    with pytest.raises(ConfigError) as excinfo:
        ExperimentConfig.from_dict({"lr": 0.1, "learning_rate": 0.1})
    assert excinfo.value.context["field"] == "learning_rate"


def test_from_dict_accepts_integral_lr():
    config = ExperimentConfig.from_dict({"lr": 1, "weight_decay": 0})
    assert isinstance(config.lr, float) and config.lr == 1.0
    assert isinstance(config.weight_decay, float)


def test_from_dict_rejects_non_object():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict([1, 2])


def test_save_load_round_trip(tmp_path):
    config = ExperimentConfig(lr=0.003, epochs=5, seed=11, task_batch=64)
    path = save_config(config, tmp_path / "config.json")
    assert load_config(path) == config


def test_malformed_config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(DataFormatError) as excinfo:
        load_config(path)
    assert excinfo.value.context["line"] == 1


def test_config_hash_is_stable_and_field_sensitive():
    a, b = ExperimentConfig(seed=3), ExperimentConfig(seed=3)
    assert a.config_hash() == b.config_hash()
    assert len(a.config_hash()) == 64
    assert a.config_hash() != ExperimentConfig(seed=4).config_hash()


def test_with_overrides_ignores_none():
    config = ExperimentConfig()
    assert config.with_overrides(seed=None, epochs=None) is config
    changed = config.with_overrides(seed=9, lr=None)
    assert changed.seed == 9 and changed.lr == config.lr


def test_with_overrides_validates():
    with pytest.raises(ConfigError):
        ExperimentConfig().with_overrides(epochs=-2)


def test_validate_for_domains():
    config = ExperimentConfig(main_batch=8)
    config.validate_for_domains([8, 100])
    with pytest.raises(ConfigError) as excinfo:
        config.validate_for_domains([100, 7])
    assert excinfo.value.context["field"] == "main_batch"
    with pytest.raises(ConfigError):
        config.validate_for_domains([])


@pytest.mark.parametrize(
    "data, field",
    [
        ({"lr": [0.1]}, "lr"),
        ({"lr": [0.1, 0.01]}, "lr"),
        ({"weight_decay": [0.0, 0.1]}, "weight_decay"),
        ({"hidden_task": []}, "hidden_task"),
        ({"hidden_main": [8, 0]}, "hidden_main"),
        ({"trials": 0}, "trials"),
        ({"epochs": 3}, "epochs"),
    ],
)
def test_search_space_validation(data, field):
    with pytest.raises(ConfigError) as excinfo:
        SearchSpace.from_dict(data)
    assert excinfo.value.context["field"] == field


def test_search_space_samples_inside_ranges():
    space = SearchSpace(lr=(1e-4, 1e-1), weight_decay=(1e-6, 1e-3), hidden_task=(4, 8), hidden_main=(16,))
    rng = np.random.default_rng(0)
    base = ExperimentConfig(seed=5, epochs=3)
    for _ in range(200):
        config = space.sample(rng, base)
        assert 1e-4 <= config.lr <= 1e-1
        assert 1e-6 <= config.weight_decay <= 1e-3
        assert config.hidden_task in (4, 8)
        assert config.hidden_main == 16
        assert config.seed == 5 and config.epochs == 3


def test_search_space_log_uniform_median():
    """Half of the log-uniform draws fall below the geometric midpoint."""
    space = SearchSpace(lr=(1e-4, 1e-0))
    rng = np.random.default_rng(1)
    draws = np.array([space.sample(rng, ExperimentConfig()).lr for _ in range(2000)])
    below = np.mean(draws < 1e-2)
    assert abs(below - 0.5) < 0.05, below


def test_collapsed_space_returns_fixed_values():
    space = SearchSpace(lr=(0.02, 0.02), weight_decay=(1e-5, 1e-5), hidden_task=(8,), hidden_main=(12,))
    config = space.sample(np.random.default_rng(0), ExperimentConfig())
    assert (config.lr, config.weight_decay, config.hidden_task, config.hidden_main) == (0.02, 1e-5, 8, 12)


def test_load_search_space(tmp_path):
    path = tmp_path / "space.json"
    path.write_text(json.dumps({"lr": [0.001, 0.01], "trials": 3}), encoding="utf-8")
    space = load_search_space(path)
    assert space.lr == (0.001, 0.01)
    assert space.trials == 3
    assert space.hidden_task == (8, 16, 32, 64)


def test_resolve_threads():
    assert resolve_threads({"D2V_THREADS": "3"}) == 3
    assert resolve_threads({}) >= 1
    assert resolve_threads({"D2V_THREADS": " "}) >= 1
    for bad in ("0", "-2", "many"):
        with pytest.raises(ConfigError):
            resolve_threads({"D2V_THREADS": bad})


def test_default_grid():
    assert DEFAULT_GRID.domain_counts == (8, 16, 32, 64, 128, 256)
    assert DEFAULT_GRID.example_counts[-1] == 1024
    with pytest.raises(ConfigError):
        SweepGrid(domain_counts=(0,))
