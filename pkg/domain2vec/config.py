"""Experiment configuration, search spaces and environment settings."""

import dataclasses
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError
from .json_utils import dump_json, load_json, sha256_of
from .nn import Activation

CONFIG_SCHEMA_VERSION = 1
TASK_BATCH_ALL = "all"
THREADS_ENV = "D2V_THREADS"

TaskBatch = Union[int, str]


def _is_int(value: Any) -> bool:
    return isinstance(value, (int, np.integer)) and not isinstance(value, bool)


def _is_real(value: Any) -> bool:
    return isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a training run, given its seed."""

    lr: float = 1e-2
    weight_decay: float = 1e-4
    hidden_task: int = 32
    hidden_main: int = 32
    embed_dim: int = 16
    main_batch: int = 32
    task_batch: TaskBatch = TASK_BATCH_ALL
    epochs: int = 200
    steps_per_domain: int = 1
    activation: str = Activation.RELU.value
    seed: int = 0
    schema_version: int = CONFIG_SCHEMA_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """Check every field; raises ConfigError naming the first bad field."""
        for name in ("lr", "weight_decay"):
            value = getattr(self, name)
            if not _is_real(value) or not math.isfinite(value):
                raise ConfigError(f"{name} must be a finite number, got {value!r}", field=name)
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}", field="lr")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}", field="weight_decay")
        for name, minimum in (
            ("hidden_task", 1),
            ("hidden_main", 1),
            ("embed_dim", 0),
            ("main_batch", 1),
            ("epochs", 0),
            ("steps_per_domain", 1),
        ):
            value = getattr(self, name)
            if not _is_int(value) or value < minimum:
                raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}", field=name)
        if self.task_batch != TASK_BATCH_ALL:
            if not _is_int(self.task_batch) or self.task_batch < self.main_batch:
                raise ConfigError(
                    f"task_batch must be {TASK_BATCH_ALL!r} or an integer >= main_batch "
                    f"({self.main_batch}), got {self.task_batch!r}",
                    field="task_batch",
                )
        if self.activation not in {a.value for a in Activation} - {Activation.IDENTITY.value}:
            raise ConfigError(f"activation must be 'relu' or 'tanh', got {self.activation!r}", field="activation")
        if not _is_int(self.seed) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}", field="seed")
        if self.schema_version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported schema_version {self.schema_version!r}, expected {CONFIG_SCHEMA_VERSION}",
                field="schema_version",
            )

    def validate_for_domains(self, sizes: Sequence[int]) -> None:
        """main_batch must fit in the smallest domain."""
        if not sizes:
            raise ConfigError("at least one source domain is required", field="sources")
        smallest = min(sizes)
        if self.main_batch > smallest:
            raise ConfigError(
                f"main_batch {self.main_batch} exceeds the smallest domain size {smallest}",
                field="main_batch",
            )

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"config must be a JSON object, got {type(data).__name__}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}", field=unknown[0])
        values = dict(data)
        # Integral JSON numbers for real-valued fields.
        for name in ("lr", "weight_decay"):
            if _is_int(values.get(name)):
                values[name] = float(values[name])
        return cls(**values)

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Copy with the non-None overrides applied."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **changes) if changes else self

    def config_hash(self) -> str:
        return sha256_of(self.to_dict())


def _log_range(value: Any, name: str) -> Tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2 or not all(_is_real(v) for v in value):
        raise ConfigError(f"{name} must be a [low, high] pair, got {value!r}", field=name)
    low, high = float(value[0]), float(value[1])
    if not (0 < low <= high and math.isfinite(high)):
        raise ConfigError(f"{name} needs 0 < low <= high, got [{low}, {high}]", field=name)
    return low, high


def _choices(value: Any, name: str) -> Tuple[int, ...]:
    if not isinstance(value, (list, tuple)) or not value or not all(_is_int(v) and v >= 1 for v in value):
        raise ConfigError(f"{name} must be a non-empty list of positive integers, got {value!r}", field=name)
    return tuple(int(v) for v in value)


@dataclass(frozen=True)
class SearchSpace:
    """Random-search ranges: log-uniform reals and uniform integer choices."""

    lr: Tuple[float, float] = (1e-3, 1e-1)
    weight_decay: Tuple[float, float] = (1e-6, 1e-2)
    hidden_task: Tuple[int, ...] = (8, 16, 32, 64)
    hidden_main: Tuple[int, ...] = (8, 16, 32, 64)
    trials: int = 20
    schema_version: int = CONFIG_SCHEMA_VERSION

    def __post_init__(self):
        object.__setattr__(self, "lr", _log_range(self.lr, "lr"))
        object.__setattr__(self, "weight_decay", _log_range(self.weight_decay, "weight_decay"))
        object.__setattr__(self, "hidden_task", _choices(self.hidden_task, "hidden_task"))
        object.__setattr__(self, "hidden_main", _choices(self.hidden_main, "hidden_main"))
        if not _is_int(self.trials) or self.trials < 1:
            raise ConfigError(f"trials must be an integer >= 1, got {self.trials!r}", field="trials")
        if self.schema_version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version!r}", field="schema_version")

    def sample(self, rng: np.random.Generator, base: ExperimentConfig) -> ExperimentConfig:
        """Draw one configuration; fields outside the space come from ``base``."""

        def log_uniform(bounds: Tuple[float, float]) -> float:
            low, high = math.log(bounds[0]), math.log(bounds[1])
            return float(math.exp(rng.uniform(low, high))) if high > low else bounds[0]

        return dataclasses.replace(
            base,
            lr=log_uniform(self.lr),
            weight_decay=log_uniform(self.weight_decay),
            hidden_task=int(self.hidden_task[rng.integers(len(self.hidden_task))]),
            hidden_main=int(self.hidden_main[rng.integers(len(self.hidden_main))]),
        )

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SearchSpace":
        if not isinstance(data, dict):
            raise ConfigError("search space must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown search-space field(s): {', '.join(unknown)}", field=unknown[0])
        return cls(**data)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    return ExperimentConfig.from_dict(load_json(path))


def save_config(config: ExperimentConfig, path: Union[str, Path]) -> Path:
    dump_json(path, config.to_dict())
    return Path(path)


def load_search_space(path: Union[str, Path]) -> SearchSpace:
    return SearchSpace.from_dict(load_json(path))


def resolve_threads(env: Optional[Dict[str, str]] = None) -> int:
    """Worker-thread cap: ``D2V_THREADS`` if set, otherwise the machine's CPU count."""
    env = os.environ if env is None else env
    raw = env.get(THREADS_ENV, "").strip()
    if not raw:
        return max(1, os.cpu_count() or 1)
    try:
        threads = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}", field=THREADS_ENV) from exc
    if threads < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}", field=THREADS_ENV)
    return threads


@dataclass(frozen=True)
class SweepGrid:
    """Domain counts × examples-per-domain of a heatmap sweep."""

    domain_counts: Tuple[int, ...] = (8, 16, 32, 64, 128, 256)
    example_counts: Tuple[int, ...] = (8, 16, 32, 64, 128, 256, 512, 1024)

    def __post_init__(self):
        object.__setattr__(self, "domain_counts", _choices(list(self.domain_counts), "domain_counts"))
        object.__setattr__(self, "example_counts", _choices(list(self.example_counts), "example_counts"))


DEFAULT_GRID = SweepGrid()

__all__ = [
    "CONFIG_SCHEMA_VERSION",
    "DEFAULT_GRID",
    "ExperimentConfig",
    "SearchSpace",
    "SweepGrid",
    "TASK_BATCH_ALL",
    "load_config",
    "load_search_space",
    "resolve_threads",
    "save_config",
]
