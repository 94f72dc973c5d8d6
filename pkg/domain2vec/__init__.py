from domain2vec.report import (
    Report,
    ReportConfiguration,
    generate_json,
    get_report,
    init,
)
from domain2vec.config import ExperimentConfig, SearchSpace, SweepGrid, resolve_threads
from domain2vec.dataset_io import FeatureTable, LodoSplit, load_csv, lodo_splits, save_csv
from domain2vec.errors import (
    ConfigError,
    D2VError,
    DataFormatError,
    DegenerateComparisonError,
    EmptyDomainError,
    LabelError,
    NumericalError,
    ShapeError,
    UnlabeledDomainError,
    ValidationError,
)
from domain2vec.model import (
    D2VModel,
    DomainEmbedding,
    ModelDims,
    PoolingMLP,
    load_checkpoint,
    save_checkpoint,
)
from domain2vec.similarity import (
    SimilarityMatrix,
    compare,
    estimated_similarity,
    known_similarity,
    median_heuristic_sigma,
    random_similarity,
)
from domain2vec.synth import DomainDataset, SynthSpec, generate_domain, generate_suite, test_suite
from domain2vec.trainer import (
    Evaluation,
    MetricsRecord,
    evaluate,
    heatmap_sweep,
    random_search,
    run_lodo,
    train,
    train_baseline,
)

# Export the report singleton
report = get_report()

__all__ = [
    "report",
    "init",
    "generate_json",
    "get_report",
    "Report",
    "ReportConfiguration",
    "ExperimentConfig",
    "SearchSpace",
    "SweepGrid",
    "resolve_threads",
    "FeatureTable",
    "LodoSplit",
    "load_csv",
    "save_csv",
    "lodo_splits",
    "D2VError",
    "ValidationError",
    "ShapeError",
    "LabelError",
    "ConfigError",
    "DataFormatError",
    "EmptyDomainError",
    "UnlabeledDomainError",
    "DegenerateComparisonError",
    "NumericalError",
    "D2VModel",
    "DomainEmbedding",
    "ModelDims",
    "PoolingMLP",
    "save_checkpoint",
    "load_checkpoint",
    "SimilarityMatrix",
    "estimated_similarity",
    "known_similarity",
    "random_similarity",
    "median_heuristic_sigma",
    "compare",
    "DomainDataset",
    "SynthSpec",
    "generate_domain",
    "generate_suite",
    "test_suite",
    "Evaluation",
    "MetricsRecord",
    "evaluate",
    "train",
    "train_baseline",
    "random_search",
    "heatmap_sweep",
    "run_lodo",
]
