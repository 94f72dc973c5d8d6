"""Rotated-halfspace synthetic domains.

Each domain draws points uniformly from [-1, 1] x [0, 1], labels them 1 when
the first coordinate is non-negative, and only then rotates every point by
the domain's angle theta. Domains with close angles therefore share both
their input distribution and their decision boundary.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import numpy.typing as npt
import pandas as pd

from .errors import ConfigError, DataFormatError, ShapeError, UnlabeledDomainError, shape_mismatch
from .nn import Matrix, as_labels, as_matrix

logger = logging.getLogger(__name__)

TRAIN_NAMESPACE = 0
TEST_NAMESPACE = 1
TEST_DOMAINS = 44
TEST_EXAMPLES = 1024
N_CLASSES = 2


@dataclass(frozen=True, eq=False)
class DomainDataset:
    """One domain: n × d features, optional labels, optional generating angle."""

    domain_id: str
    features: Matrix
    labels: Optional[npt.NDArray[np.int64]] = None
    theta: Optional[float] = None
    # Row positions in the table this domain was read from, when it came from a file
    row_ids: Optional[npt.NDArray[np.int64]] = field(default=None, repr=False)

    def __post_init__(self):
        features = as_matrix(self.features, f"features of {self.domain_id}")
        object.__setattr__(self, "features", features)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (features.shape[0],):
                raise shape_mismatch(f"labels of {self.domain_id}", (features.shape[0],), labels.shape)
            object.__setattr__(self, "labels", labels.astype(np.int64))
        if self.theta is not None and not 0.0 <= self.theta <= math.pi:
            raise ConfigError(f"theta of {self.domain_id} must lie in [0, pi], got {self.theta}")

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def is_labeled(self) -> bool:
        return self.labels is not None

    def require_labels(self, n_classes: Optional[int] = None) -> npt.NDArray[np.int64]:
        if self.labels is None:
            raise UnlabeledDomainError(f"domain {self.domain_id} has no labels", domain=self.domain_id)
        if n_classes is not None:
            as_labels(self.labels, self.n, n_classes)
        return self.labels

    def without_labels(self) -> "DomainDataset":
        return replace(self, labels=None)

    def with_labels(self, labels: npt.ArrayLike) -> "DomainDataset":
        return replace(self, labels=np.asarray(labels, dtype=np.int64))

    def permuted(self, order: npt.ArrayLike) -> "DomainDataset":
        """Same domain with its rows reordered."""
        order = np.asarray(order, dtype=np.int64)
        return replace(
            self,
            features=self.features[order],
            labels=None if self.labels is None else self.labels[order],
            row_ids=None if self.row_ids is None else self.row_ids[order],
        )


@dataclass(frozen=True)
class SynthSpec:
    num_domains: int
    examples_per_domain: int
    seed: int = 0

    def __post_init__(self):
        if self.num_domains < 1:
            raise ConfigError(f"num_domains must be >= 1, got {self.num_domains}", field="num_domains")
        if self.examples_per_domain < 1:
            raise ConfigError(
                f"examples_per_domain must be >= 1, got {self.examples_per_domain}",
                field="examples_per_domain",
            )


def rotation(theta: float) -> Matrix:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def generate_domain(theta: float, n: int, rng: np.random.Generator, domain_id: str = "domain") -> DomainDataset:
    """
    Draw one rotated-halfspace domain.

    Args:
        theta: Rotation angle in [0, pi]
        n: Number of points
        rng: Source of the point draws
        domain_id: Identifier stored on the dataset

    Returns:
        DomainDataset with labels assigned before rotation and theta recorded.
    """
    if not 0.0 <= theta <= math.pi:
        raise ConfigError(f"theta must lie in [0, pi], got {theta}", field="theta")
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}", field="n")
    x1 = rng.uniform(-1.0, 1.0, size=n)
    x2 = rng.uniform(0.0, 1.0, size=n)
    box = np.column_stack([x1, x2])
    labels = (x1 >= 0.0).astype(np.int64)
    return DomainDataset(domain_id=domain_id, features=box @ rotation(theta).T, labels=labels, theta=float(theta))


def domain_rng(seed: int, namespace: int, index: int) -> np.random.Generator:
    """Generator for domain ``index``; independent of how many domains are drawn."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), namespace, index]))


def _suite(num_domains: int, examples: int, seed: int, namespace: int, prefix: str) -> List[DomainDataset]:
    domains = []
    for index in range(num_domains):
        rng = domain_rng(seed, namespace, index)
        theta = rng.uniform(0.0, math.pi)
        domains.append(generate_domain(theta, examples, rng, domain_id=f"{prefix}-{index:04d}"))
    return domains


def generate_suite(spec: SynthSpec) -> List[DomainDataset]:
    """Training domains, each with its own theta ~ U[0, pi]; prefix-stable in num_domains."""
    logger.debug("generating %d x %d synthetic domains", spec.num_domains, spec.examples_per_domain)
    return _suite(spec.num_domains, spec.examples_per_domain, spec.seed, TRAIN_NAMESPACE, "train")


def test_suite(seed: int = 0) -> List[DomainDataset]:
    """The fixed 44 x 1024 evaluation suite, drawn from a namespace disjoint from training."""
    return _suite(TEST_DOMAINS, TEST_EXAMPLES, seed, TEST_NAMESPACE, "test")


# Not a pytest test despite the name.
test_suite.__test__ = False


def thetas_of(domains: Sequence[DomainDataset]) -> Optional[List[float]]:
    """Angles of all domains, or None if any domain lacks one."""
    thetas = [domain.theta for domain in domains]
    if any(theta is None for theta in thetas):
        return None
    return [float(theta) for theta in thetas]


def save_thetas(domains: Sequence[DomainDataset], path: Union[str, Path]) -> Path:
    """Write the ``domain,theta`` sidecar next to a synthetic dataset."""
    thetas = thetas_of(domains)
    if thetas is None:
        raise ShapeError("every domain needs a theta to write a theta sidecar")
    frame = pd.DataFrame({"domain": [d.domain_id for d in domains], "theta": thetas})
    path = Path(path)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def load_thetas(path: Union[str, Path]) -> dict:
    """Read a ``domain,theta`` sidecar into {domain_id: theta}."""
    try:
        frame = pd.read_csv(path, dtype={"domain": str}, keep_default_na=False, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataFormatError(f"{path}: unreadable theta sidecar: {exc}") from exc
    if list(frame.columns) != ["domain", "theta"]:
        raise DataFormatError(f"{path}: expected header domain,theta, got {','.join(map(str, frame.columns))}")
    thetas = pd.to_numeric(frame["theta"], errors="coerce")
    bad = np.flatnonzero(thetas.isna().to_numpy())
    if bad.size:
        raise DataFormatError(f"{path}: non-numeric theta on line {int(bad[0]) + 2}", line=int(bad[0]) + 2)
    return dict(zip(frame["domain"].tolist(), thetas.astype(float).tolist()))
