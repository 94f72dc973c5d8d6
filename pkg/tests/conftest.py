"""Pytest configuration and fixtures."""

import numpy as np
import pytest

from domain2vec import report
from domain2vec.config import ExperimentConfig
from domain2vec.synth import DomainDataset


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow reproduction checks")


def pytest_collection_modifyitems(config, items):
    """Skip tests marked slow unless --runslow is given."""
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def reset_report():
    """Automatically reset the report before each test."""
    report.init(clear=True, warn=False)
    yield


@pytest.fixture
def two_domain_fixture():
    """Two labeled 3-point domains in two dimensions."""
    return [
        DomainDataset(
            domain_id="a",
            features=np.array([[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]]),
            labels=np.array([0, 1, 1]),
        ),
        DomainDataset(
            domain_id="b",
            features=np.array([[-1.0, 0.0], [0.0, -1.0], [-0.5, 0.25]]),
            labels=np.array([1, 0, 0]),
        ),
    ]


@pytest.fixture
def tiny_config():
    """A config small enough for a few-second training run."""
    return ExperimentConfig(
        lr=0.05,
        weight_decay=0.0,
        hidden_task=4,
        hidden_main=4,
        embed_dim=2,
        main_batch=2,
        epochs=2,
        seed=7,
    )
