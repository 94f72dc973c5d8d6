"""Domain-to-domain similarity matrices and their comparison.

Both the learned and the known similarity are Gaussian kernels
``exp(-dist^2 / sigma^2)``: over embedding vectors for the former, over the
generating rotation angles for the latter.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
import pandas as pd
from scipy.spatial.distance import pdist, squareform
from scipy.stats import pearsonr, spearmanr

from .errors import ConfigError, DegenerateComparisonError, ShapeError, ValidationError, shape_mismatch
from .model import D2VModel, DomainEmbedding
from .nn import Matrix
from .synth import DomainDataset, thetas_of

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-12
# Smallest reported similarity; exp underflows to 0 for very distant domains.
MIN_SIMILARITY = np.finfo(np.float64).tiny
DEFAULT_SIGMA = 1.0


@dataclass(frozen=True)
class SimilarityMatrix:
    """Symmetric m × m similarities in (0, 1] with a unit diagonal."""

    domain_ids: Tuple[str, ...]
    values: Matrix = field(repr=False)
    sigma: Optional[float] = None
    thetas: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        m = len(self.domain_ids)
        if values.shape != (m, m):
            raise shape_mismatch("similarity values", (m, m), values.shape)
        if self.thetas is not None and len(self.thetas) != m:
            raise shape_mismatch("similarity thetas", (m,), (len(self.thetas),))
        if not np.all(np.isfinite(values)) or np.any(values <= 0.0) or np.any(values > 1.0):
            raise ValidationError("similarity values must lie in (0, 1]")
        if np.max(np.abs(values - values.T), initial=0.0) > SYMMETRY_TOLERANCE:
            raise ValidationError("similarity matrix is not symmetric")
        if np.max(np.abs(np.diag(values) - 1.0), initial=0.0) > SYMMETRY_TOLERANCE:
            raise ValidationError("similarity matrix diagonal is not 1")
        object.__setattr__(self, "domain_ids", tuple(str(d) for d in self.domain_ids))
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return len(self.domain_ids)

    def off_diagonal(self) -> npt.NDArray[np.float64]:
        """Strict upper triangle, row-major."""
        return self.values[np.triu_indices(self.size, k=1)]

    def permuted(self, order: Sequence[int]) -> "SimilarityMatrix":
        """Rows, columns, ids and thetas reordered consistently."""
        order = np.asarray(order, dtype=np.int64)
        return replace(
            self,
            domain_ids=tuple(self.domain_ids[i] for i in order),
            values=self.values[np.ix_(order, order)],
            thetas=None if self.thetas is None else tuple(self.thetas[i] for i in order),
        )

    def sorted_by_theta(self) -> "SimilarityMatrix":
        """Rows ordered by ascending theta; unchanged when thetas are unknown."""
        if self.thetas is None:
            return self
        return self.permuted(np.argsort(np.asarray(self.thetas), kind="stable"))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=list(self.domain_ids), columns=list(self.domain_ids))


def _check_sigma(sigma: float) -> float:
    if not isinstance(sigma, (int, float, np.floating)) or not math.isfinite(sigma) or sigma <= 0:
        raise ConfigError(f"sigma must be a finite number > 0, got {sigma!r}", field="sigma")
    return float(sigma)


def median_heuristic_sigma(points: npt.ArrayLike) -> float:
    """
    sigma with sigma^2 the median squared pairwise distance between rows.

    Falls back to 1.0 with fewer than two rows or when the median is zero.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    if points.shape[0] < 2:
        return DEFAULT_SIGMA
    median = float(np.median(pdist(points, "sqeuclidean")))
    if median <= 0.0:
        return DEFAULT_SIGMA
    return math.sqrt(median)


def _kernel(points: Matrix, sigma: float) -> Matrix:
    squared = squareform(pdist(points, "sqeuclidean")) if points.shape[0] > 1 else np.zeros((1, 1))
    return np.maximum(np.exp(-squared / (sigma * sigma)), MIN_SIMILARITY)


def estimated_similarity(
    embeddings: Sequence[DomainEmbedding],
    sigma: Optional[float] = None,
    thetas: Optional[Sequence[float]] = None,
) -> SimilarityMatrix:
    """
    Similarity of learned domain embeddings.

    Args:
        embeddings: One embedding per domain, all of the same dimension
        sigma: Kernel bandwidth; median heuristic over the embeddings when None
        thetas: Optional generating angles, kept for display ordering

    Returns:
        SimilarityMatrix with S[p][q] = exp(-||d_p - d_q||^2 / sigma^2)
    """
    if not embeddings:
        raise ValidationError("estimated similarity needs at least one embedding")
    dims = sorted({e.dim for e in embeddings})
    if len(dims) != 1:
        raise ShapeError(f"embeddings disagree on dimension: {dims}", dims=dims)
    points = np.vstack([e.vector for e in embeddings]).reshape(len(embeddings), dims[0])
    sigma = median_heuristic_sigma(points) if sigma is None else _check_sigma(sigma)
    return SimilarityMatrix(
        domain_ids=tuple(e.domain_id for e in embeddings),
        values=_kernel(points, sigma),
        sigma=sigma,
        thetas=None if thetas is None else tuple(float(t) for t in thetas),
    )


def known_similarity(
    thetas: Sequence[float],
    sigma: Optional[float] = None,
    domain_ids: Optional[Sequence[str]] = None,
) -> SimilarityMatrix:
    """Oracle similarity exp(-|theta_p - theta_q|^2 / sigma^2) from rotation angles."""
    angles = np.asarray(thetas, dtype=np.float64)
    if angles.ndim != 1 or angles.size == 0:
        raise ValidationError("known similarity needs a non-empty list of angles")
    if np.any(angles < 0.0) or np.any(angles > math.pi):
        raise ConfigError("thetas must lie in [0, pi]", field="thetas")
    ids = tuple(domain_ids) if domain_ids is not None else tuple(f"domain-{i}" for i in range(angles.size))
    points = angles[:, None]
    sigma = median_heuristic_sigma(points) if sigma is None else _check_sigma(sigma)
    return SimilarityMatrix(domain_ids=ids, values=_kernel(points, sigma), sigma=sigma, thetas=tuple(angles.tolist()))


def random_similarity(
    m: int,
    rng: np.random.Generator,
    domain_ids: Optional[Sequence[str]] = None,
    thetas: Optional[Sequence[float]] = None,
) -> SimilarityMatrix:
    """Unit diagonal with i.i.d. uniform off-diagonal entries mirrored across it."""
    if m < 1:
        raise ConfigError(f"m must be >= 1, got {m}", field="m")
    values = np.eye(m)
    upper = np.triu_indices(m, k=1)
    # 1 - U[0, 1) keeps every entry strictly positive.
    draws = 1.0 - rng.random(upper[0].size)
    values[upper] = draws
    values[upper[1], upper[0]] = draws
    ids = tuple(domain_ids) if domain_ids is not None else tuple(f"domain-{i}" for i in range(m))
    return SimilarityMatrix(
        domain_ids=ids,
        values=values,
        sigma=None,
        thetas=None if thetas is None else tuple(float(t) for t in thetas),
    )


def domain_similarity(
    model: D2VModel,
    domains: Sequence[DomainDataset],
    sigma: Optional[float] = None,
) -> SimilarityMatrix:
    """Estimated similarity of whole domains through a trained task network."""
    return estimated_similarity(model.embed_domains(domains), sigma, thetas_of(domains))


@dataclass(frozen=True)
class Comparison:
    pearson: float
    spearman: float
    pairs: int


def compare(a: SimilarityMatrix, b: SimilarityMatrix) -> Comparison:
    """
    Pearson and Spearman correlation over the strict upper triangles.

    Raises:
        ShapeError: the matrices differ in size
        ValidationError: the domain orderings differ
        DegenerateComparisonError: fewer than two pairs, or either side constant
    """
    if a.size != b.size:
        raise shape_mismatch("compared similarity matrix", (a.size, a.size), (b.size, b.size))
    if a.domain_ids != b.domain_ids:
        raise ValidationError("similarity matrices list their domains in different orders")
    x, y = a.off_diagonal(), b.off_diagonal()
    if x.size < 2:
        raise DegenerateComparisonError(f"need at least 2 domain pairs to correlate, got {x.size}")
    for name, values in (("first", x), ("second", y)):
        if np.ptp(values) == 0.0:
            raise DegenerateComparisonError(f"{name} similarity matrix is constant off the diagonal")
    pearson, _ = pearsonr(x, y)
    spearman, _ = spearmanr(x, y)
    if not (math.isfinite(pearson) and math.isfinite(spearman)):
        raise DegenerateComparisonError("correlation is undefined for these matrices")
    return Comparison(
        pearson=float(np.clip(pearson, -1.0, 1.0)),
        spearman=float(np.clip(spearman, -1.0, 1.0)),
        pairs=int(x.size),
    )


def write_similarity_csv(matrix: SimilarityMatrix, path: Union[str, Path]) -> Path:
    """Square CSV whose header row lists the domain ids."""
    path = Path(path)
    matrix.to_frame().to_csv(path, index=False, lineterminator="\n")
    return path


def read_similarity_csv(path: Union[str, Path]) -> SimilarityMatrix:
    frame = pd.read_csv(path, dtype=float, float_precision="round_trip")
    return SimilarityMatrix(domain_ids=tuple(str(c) for c in frame.columns), values=frame.to_numpy())


def pgm_bytes(matrix: SimilarityMatrix) -> bytes:
    """Binary (P5) 8-bit grayscale image, 255 * S rounded half-up."""
    pixels = np.clip(np.floor(255.0 * matrix.values + 0.5), 0, 255).astype(np.uint8)
    header = f"P5\n{matrix.size} {matrix.size}\n255\n".encode("ascii")
    return header + pixels.tobytes()


def write_pgm(matrix: SimilarityMatrix, path: Union[str, Path], order_by_theta: bool = True) -> Path:
    """Heatmap of a matrix, rows ordered by theta when it is known."""
    if order_by_theta:
        matrix = matrix.sorted_by_theta()
    path = Path(path)
    path.write_bytes(pgm_bytes(matrix))
    logger.debug("wrote %d x %d heatmap to %s", matrix.size, matrix.size, path)
    return path
