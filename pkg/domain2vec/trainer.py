"""Training, evaluation and the experiments built on them.

D2V training feeds every optimisation step two batches from one domain: a
labeled main batch that is classified, and an unlabeled task batch (the whole
domain by default) from which the domain embedding is recomputed. The pooling
baseline takes the same number of steps over the union of all sources.
"""

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
import pandas as pd

from .config import DEFAULT_GRID, TASK_BATCH_ALL, ExperimentConfig, SearchSpace, resolve_threads
from .dataset_io import FeatureTable, lodo_splits
from .errors import ConfigError, EmptyDomainError, ShapeError, ValidationError
from .json_utils import write_jsonl
from .model import D2VModel, Model, ModelDims, PoolingMLP, predict_from_logits
from .nn import AdamState, Matrix, adam_step, softmax_cross_entropy
from .report import Report, get_report
from .synth import N_CLASSES, DomainDataset, SynthSpec, generate_suite, test_suite

logger = logging.getLogger(__name__)

DOMAIN_ACCESS = "domain_access"
D2V = "d2v"
POOLING = "pooling"
METHODS = (D2V, POOLING)

SEARCH_HOLDOUT_FRACTION = 0.2
_SEARCH_HOLDOUT_STREAM = 0
_SEARCH_TRIAL_STREAM = 1


def empirical_train_error(per_domain_losses: Sequence[npt.ArrayLike]) -> float:
    """
    Mean over domains of the mean loss within each domain.

    Every domain weighs the same regardless of its size.
    """
    if len(per_domain_losses) == 0:
        raise EmptyDomainError("empirical train error needs at least one domain")
    means = [empirical_test_error(losses) for losses in per_domain_losses]
    return math.fsum(means) / len(means)


def empirical_test_error(losses: npt.ArrayLike) -> float:
    """Mean loss over the points of a single domain."""
    values = np.asarray(losses, dtype=np.float64).ravel()
    if values.size == 0:
        raise EmptyDomainError("empirical test error needs at least one point")
    return math.fsum(values.tolist()) / values.size


@dataclass(frozen=True)
class DomainScore:
    """Per-point losses and predictions on one labeled domain."""

    domain_id: str
    cross_entropy: npt.NDArray[np.float64] = field(repr=False)
    zero_one: npt.NDArray[np.float64] = field(repr=False)
    predictions: npt.NDArray[np.int64] = field(repr=False)

    @property
    def n(self) -> int:
        return int(self.predictions.shape[0])

    @property
    def loss(self) -> float:
        return empirical_test_error(self.cross_entropy)

    @property
    def accuracy(self) -> float:
        return 1.0 - empirical_test_error(self.zero_one)


@dataclass(frozen=True)
class Evaluation:
    """Scores of a model on a list of domains, aggregated both ways."""

    scores: Tuple[DomainScore, ...]

    @property
    def train_form_error(self) -> float:
        return empirical_train_error([s.cross_entropy for s in self.scores])

    @property
    def train_form_accuracy(self) -> float:
        return 1.0 - empirical_train_error([s.zero_one for s in self.scores])

    @property
    def pooled_error(self) -> float:
        return empirical_test_error(np.concatenate([s.cross_entropy for s in self.scores]))

    @property
    def pooled_accuracy(self) -> float:
        return 1.0 - empirical_test_error(np.concatenate([s.zero_one for s in self.scores]))

    @property
    def mean_domain_accuracy(self) -> float:
        return self.train_form_accuracy

    def predictions(self) -> Dict[str, npt.NDArray[np.int64]]:
        return {s.domain_id: s.predictions for s in self.scores}

    def per_domain(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "domain": [s.domain_id for s in self.scores],
                "n": [s.n for s in self.scores],
                "loss": [s.loss for s in self.scores],
                "accuracy": [s.accuracy for s in self.scores],
            }
        )


@dataclass(frozen=True)
class MetricsRecord:
    """
    One line of a training history.

    Train-side values use the per-domain double mean; test-side values are
    pooled over every test point. Test fields are None without test domains.
    """

    epoch: int
    empirical_train_error: float
    train_accuracy: float
    empirical_test_error: Optional[float] = None
    test_accuracy: Optional[float] = None
    mean_domain_test_accuracy: Optional[float] = None
    training_loss: Optional[float] = None

    @classmethod
    def from_evaluations(
        cls,
        epoch: int,
        train: Evaluation,
        test: Optional[Evaluation] = None,
        training_loss: Optional[float] = None,
    ) -> "MetricsRecord":
        return cls(
            epoch=epoch,
            empirical_train_error=train.train_form_error,
            train_accuracy=train.train_form_accuracy,
            empirical_test_error=None if test is None else test.pooled_error,
            test_accuracy=None if test is None else test.pooled_accuracy,
            mean_domain_test_accuracy=None if test is None else test.mean_domain_accuracy,
            training_loss=training_loss,
        )

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def _n_classes_of(model: Model) -> int:
    return model.dims.n_classes if isinstance(model, D2VModel) else model.n_classes


def _logits(model: Model, domain: DomainDataset) -> Matrix:
    if isinstance(model, D2VModel):
        # The embedding sees every point of the domain and none of its labels.
        vector = model.task.embed_vector(domain.features)
        return model.logits_from_embedding(domain.features, vector)
    return model.forward(domain.features)


def predict_domain(model: Model, domain: DomainDataset) -> npt.NDArray[np.int64]:
    """Predicted class of every point, embedding the domain from its own features."""
    return predict_from_logits(_logits(model, domain))


def evaluate(model: Model, domains: Sequence[DomainDataset]) -> Evaluation:
    """
    Score a model on labeled domains.

    Args:
        model: Trained D2V model or pooling baseline
        domains: Labeled domains; labels are only used for scoring

    Returns:
        Evaluation with per-domain and aggregated cross-entropy and accuracy.
    """
    if not domains:
        raise EmptyDomainError("evaluate needs at least one domain")
    n_classes = _n_classes_of(model)
    scores = []
    for domain in domains:
        labels = domain.require_labels(n_classes)
        logits = _logits(model, domain)
        loss, _ = softmax_cross_entropy(logits, labels)
        predictions = predict_from_logits(logits)
        scores.append(
            DomainScore(
                domain_id=domain.domain_id,
                cross_entropy=loss.per_example,
                zero_one=(predictions != labels).astype(np.float64),
                predictions=predictions,
            )
        )
    return Evaluation(scores=tuple(scores))


@dataclass
class TrainingResult:
    model: Model
    history: List[MetricsRecord]
    config: ExperimentConfig
    method: str

    @property
    def final(self) -> MetricsRecord:
        return self.history[-1]


@dataclass(frozen=True)
class _Batch:
    points: Matrix
    labels: npt.NDArray[np.int64]
    task_sample: Optional[Matrix] = None


def class_count(domains: Sequence[DomainDataset]) -> int:
    """Classes needed to cover every label in the labeled domains, at least N_CLASSES."""
    return max([N_CLASSES] + [int(d.labels.max()) + 1 for d in domains if d.labels is not None and d.n])


def _check_sources(
    config: ExperimentConfig,
    sources: Sequence[DomainDataset],
    n_classes: Optional[int],
    test_domains: Optional[Sequence[DomainDataset]] = None,
) -> int:
    """Validate sources against the config; returns the class count."""
    if not sources:
        raise ConfigError("at least one source domain is required", field="sources")
    dims = sorted({domain.dim for domain in sources})
    if len(dims) != 1:
        raise ShapeError(f"source domains disagree on feature dimension: {dims}", dims=dims)
    ids = [domain.domain_id for domain in sources]
    if len(set(ids)) != len(ids):
        raise ValidationError("source domain ids must be unique", domains=ids)
    for domain in sources:
        domain.require_labels()
    if n_classes is None:
        n_classes = class_count([*sources, *(test_domains or ())])
    for domain in [*sources, *(test_domains or ())]:
        domain.require_labels(n_classes)
    config.validate_for_domains([domain.n for domain in sources])
    return n_classes


def _seed_streams(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    init_seq, schedule_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_seq), np.random.default_rng(schedule_seq)


def _task_sample(domain: DomainDataset, config: ExperimentConfig, rng: np.random.Generator) -> Matrix:
    if config.task_batch == TASK_BATCH_ALL or config.task_batch >= domain.n:
        return domain.features
    rows = rng.choice(domain.n, size=config.task_batch, replace=False)
    return domain.features[rows]


def _d2v_batches(
    sources: Sequence[DomainDataset],
    config: ExperimentConfig,
    rng: np.random.Generator,
    report: Report,
) -> Iterator[_Batch]:
    # Every domain is visited steps_per_domain times per epoch, in shuffled order.
    order = rng.permutation(np.repeat(np.arange(len(sources)), config.steps_per_domain))
    for index in order:
        domain = sources[int(index)]
        report.count(DOMAIN_ACCESS)
        rows = rng.choice(domain.n, size=config.main_batch, replace=False)
        yield _Batch(
            points=domain.features[rows],
            labels=domain.labels[rows],
            task_sample=_task_sample(domain, config, rng),
        )


def _pooled_batches(
    points: Matrix,
    labels: npt.NDArray[np.int64],
    steps: int,
    config: ExperimentConfig,
    rng: np.random.Generator,
) -> Iterator[_Batch]:
    for _ in range(steps):
        rows = rng.choice(points.shape[0], size=config.main_batch, replace=False)
        yield _Batch(points=points[rows], labels=labels[rows])


def _run_epochs(
    model: Model,
    method: str,
    config: ExperimentConfig,
    epoch_batches: Callable[[], Iterator[_Batch]],
    sources: Sequence[DomainDataset],
    test_domains: Optional[Sequence[DomainDataset]],
    report: Report,
    evaluate_every: int,
) -> TrainingResult:
    def record(epoch: int, training_loss: Optional[float]) -> MetricsRecord:
        test = evaluate(model, test_domains) if test_domains else None
        return MetricsRecord.from_evaluations(epoch, evaluate(model, sources), test, training_loss)

    params = model.parameters()
    state = AdamState.zeros_like(params)
    history = [record(0, None)]
    for epoch in range(1, config.epochs + 1):
        losses = []
        for batch in epoch_batches():
            if batch.task_sample is None:
                loss, grads = model.backward(batch.points, batch.labels)
            else:
                loss, grads = model.backward(batch.points, batch.task_sample, batch.labels)
            adam_step(params, grads, state, config.lr, config.weight_decay)
            losses.append(loss.loss)
        epoch_loss = math.fsum(losses) / len(losses)
        report.hist(f"{method}_epoch_loss", epoch_loss)
        report.timeline("epoch", method=method, epoch=epoch, loss=epoch_loss)
        logger.debug("%s epoch %d: training loss %.6f", method, epoch, epoch_loss)
        if epoch % evaluate_every == 0 or epoch == config.epochs:
            history.append(record(epoch, epoch_loss))
    return TrainingResult(model=model, history=history, config=config, method=method)


def train(
    config: ExperimentConfig,
    sources: Sequence[DomainDataset],
    *,
    test_domains: Optional[Sequence[DomainDataset]] = None,
    report: Optional[Report] = None,
    evaluate_every: int = 1,
    n_classes: Optional[int] = None,
) -> TrainingResult:
    """
    Train a D2V model with the two-batch scheme.

    Args:
        config: Hyperparameters and seed
        sources: Labeled source domains
        test_domains: Optional labeled domains scored into the history
        report: Instrumentation sink; the global report when None
        evaluate_every: Record metrics every this many epochs (and after the last)
        n_classes: Class count; inferred from source and test labels when None

    Returns:
        TrainingResult whose history starts with the untrained epoch-0 evaluation.
    """
    if evaluate_every < 1:
        raise ConfigError(f"evaluate_every must be >= 1, got {evaluate_every}", field="evaluate_every")
    report = get_report() if report is None else report
    n_classes = _check_sources(config, sources, n_classes, test_domains)
    init_rng, schedule_rng = _seed_streams(config.seed)
    dims = ModelDims(
        d=sources[0].dim,
        hidden_task=config.hidden_task,
        embed_dim=config.embed_dim,
        hidden_main=config.hidden_main,
        n_classes=n_classes,
    )
    model = D2VModel.initialize(dims, init_rng, config.activation)
    logger.info("training d2v on %d domains for %d epochs", len(sources), config.epochs)
    return _run_epochs(
        model,
        D2V,
        config,
        lambda: _d2v_batches(sources, config, schedule_rng, report),
        sources,
        test_domains,
        report,
        evaluate_every,
    )


def train_baseline(
    config: ExperimentConfig,
    sources: Sequence[DomainDataset],
    *,
    test_domains: Optional[Sequence[DomainDataset]] = None,
    report: Optional[Report] = None,
    evaluate_every: int = 1,
    n_classes: Optional[int] = None,
) -> TrainingResult:
    """
    Train the pooling baseline on the union of all sources.

    The network has ``config.hidden_main`` hidden units and takes as many
    optimisation steps per epoch as D2V does; batches ignore domain identity.
    """
    if evaluate_every < 1:
        raise ConfigError(f"evaluate_every must be >= 1, got {evaluate_every}", field="evaluate_every")
    report = get_report() if report is None else report
    n_classes = _check_sources(config, sources, n_classes, test_domains)
    init_rng, schedule_rng = _seed_streams(config.seed)
    points = np.vstack([domain.features for domain in sources])
    labels = np.concatenate([domain.labels for domain in sources])
    steps = len(sources) * config.steps_per_domain
    model = PoolingMLP.initialize(points.shape[1], config.hidden_main, n_classes, init_rng, config.activation)
    logger.info("training pooling baseline on %d points for %d epochs", points.shape[0], config.epochs)
    return _run_epochs(
        model,
        POOLING,
        config,
        lambda: _pooled_batches(points, labels, steps, config, schedule_rng),
        sources,
        test_domains,
        report,
        evaluate_every,
    )


def train_method(
    method: str, config: ExperimentConfig, sources: Sequence[DomainDataset], **kwargs: Any
) -> TrainingResult:
    if method == D2V:
        return train(config, sources, **kwargs)
    if method == POOLING:
        return train_baseline(config, sources, **kwargs)
    raise ConfigError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}", field="method")


def write_metrics(history: Sequence[MetricsRecord], path: Union[str, Path]) -> Path:
    """One JSON object per MetricsRecord."""
    path = Path(path)
    write_jsonl(path, [record.to_dict() for record in history])
    return path


def _map_ordered(fn: Callable[[Any], Any], jobs: Sequence[Any], threads: Optional[int]) -> List[Any]:
    threads = resolve_threads() if threads is None else threads
    workers = max(1, min(threads, len(jobs)))
    if workers == 1:
        return [fn(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    config: ExperimentConfig
    validation_accuracy: float
    validation_error: float
    train_accuracy: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "trial": self.trial,
            "config": self.config.to_dict(),
            "config_hash": self.config.config_hash(),
            "validation_accuracy": self.validation_accuracy,
            "validation_error": self.validation_error,
            "train_accuracy": self.train_accuracy,
        }


@dataclass(frozen=True)
class SearchResult:
    best: ExperimentConfig
    best_trial: int
    trials: Tuple[TrialRecord, ...]
    validation_ids: Tuple[str, ...]

    @property
    def best_record(self) -> TrialRecord:
        return self.trials[self.best_trial]


def _search_holdout(
    sources: Sequence[DomainDataset], seed: int
) -> Tuple[List[DomainDataset], List[DomainDataset]]:
    if len(sources) < 2:
        raise ConfigError(
            "random search without validation domains needs at least 2 source domains",
            field="sources",
        )
    count = max(1, int(round(SEARCH_HOLDOUT_FRACTION * len(sources))))
    rng = np.random.default_rng(np.random.SeedSequence([seed, _SEARCH_HOLDOUT_STREAM]))
    held = set(rng.permutation(len(sources))[:count].tolist())
    fit = [d for i, d in enumerate(sources) if i not in held]
    validation = [d for i, d in enumerate(sources) if i in held]
    return fit, validation


def random_search(
    space: SearchSpace,
    sources: Sequence[DomainDataset],
    validation: Optional[Sequence[DomainDataset]] = None,
    *,
    base: Optional[ExperimentConfig] = None,
    log_path: Optional[Union[str, Path]] = None,
    threads: Optional[int] = None,
    report: Optional[Report] = None,
) -> SearchResult:
    """
    Random hyperparameter search scored by validation accuracy.

    Args:
        space: Ranges to sample from; ``space.trials`` configs are drawn
        sources: Labeled training domains
        validation: Labeled validation domains, disjoint from ``sources`` by id.
            When None, 20% of the sources (at least one) are held out.
        base: Values for every field the space does not sample, including the seed
        log_path: Where to write the trial log as JSON lines
        threads: Worker cap; ``D2V_THREADS`` or the CPU count when None

    Returns:
        SearchResult; ties in validation accuracy go to the earliest trial.
    """
    base = ExperimentConfig() if base is None else base
    if validation is None:
        fit, validation = _search_holdout(sources, base.seed)
    else:
        fit = list(sources)
        overlap = sorted({d.domain_id for d in fit} & {d.domain_id for d in validation})
        if overlap:
            raise ValidationError(
                f"validation domains overlap the sources: {', '.join(overlap)}", overlap=overlap
            )
        if not validation:
            raise ConfigError("validation domain list is empty", field="validation")

    configs = [
        space.sample(np.random.default_rng(np.random.SeedSequence([base.seed, _SEARCH_TRIAL_STREAM, trial])), base)
        for trial in range(space.trials)
    ]

    def run_trial(trial: int) -> TrialRecord:
        config = configs[trial]
        result = train(config, fit, report=report, evaluate_every=max(1, config.epochs))
        scored = evaluate(result.model, validation)
        logger.info("trial %d: validation accuracy %.4f", trial, scored.pooled_accuracy)
        return TrialRecord(
            trial=trial,
            config=config,
            validation_accuracy=scored.pooled_accuracy,
            validation_error=scored.pooled_error,
            train_accuracy=result.final.train_accuracy,
        )

    records = tuple(_map_ordered(run_trial, list(range(space.trials)), threads))
    best = max(records, key=lambda record: (record.validation_accuracy, -record.trial))
    if log_path is not None:
        write_jsonl(log_path, [record.to_dict() for record in records])
    return SearchResult(
        best=best.config,
        best_trial=best.trial,
        trials=records,
        validation_ids=tuple(d.domain_id for d in validation),
    )


@dataclass(frozen=True)
class SweepCell:
    domains: int
    examples: int
    d2v_accuracy: float
    baseline_accuracy: float
    trials: int


@dataclass(frozen=True)
class SweepResult:
    domain_counts: Tuple[int, ...]
    example_counts: Tuple[int, ...]
    cells: Tuple[SweepCell, ...]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (len(self.domain_counts), len(self.example_counts), len(METHODS))

    def cell(self, domains: int, examples: int) -> SweepCell:
        for cell in self.cells:
            if cell.domains == domains and cell.examples == examples:
                return cell
        raise KeyError((domains, examples))

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for cell in self.cells:
            rows.append((cell.domains, cell.examples, D2V, cell.d2v_accuracy))
            rows.append((cell.domains, cell.examples, POOLING, cell.baseline_accuracy))
        return pd.DataFrame(rows, columns=["domains", "examples", "method", "accuracy"])

    def accuracy_grid(self, method: str) -> pd.DataFrame:
        """domains × examples table of one method's accuracy."""
        frame = self.to_frame()
        return frame[frame["method"] == method].pivot(index="domains", columns="examples", values="accuracy")


def write_grid_csv(result: SweepResult, path: Union[str, Path]) -> Path:
    path = Path(path)
    result.to_frame().to_csv(path, index=False, lineterminator="\n")
    return path


def heatmap_sweep(
    domain_counts: Sequence[int] = DEFAULT_GRID.domain_counts,
    example_counts: Sequence[int] = DEFAULT_GRID.example_counts,
    seed: int = 0,
    trials_per_cell: int = 1,
    *,
    config: Optional[ExperimentConfig] = None,
    test_domains: Optional[Sequence[DomainDataset]] = None,
    threads: Optional[int] = None,
    report: Optional[Report] = None,
) -> SweepResult:
    """
    Accuracy of D2V and the pooling baseline across training-suite sizes.

    Each cell draws ``domains`` training domains of ``examples`` points from
    ``seed``, trains both methods and scores them on the fixed test suite.
    Repetitions within a cell use model seeds ``config.seed + trial`` and are
    averaged. main_batch is clamped to the cell's examples per domain.
    """
    domain_counts = tuple(int(c) for c in domain_counts)
    example_counts = tuple(int(c) for c in example_counts)
    if not domain_counts or not example_counts or min(domain_counts + example_counts) < 1:
        raise ConfigError("sweep counts must be non-empty lists of positive integers", field="grid")
    if trials_per_cell < 1:
        raise ConfigError(f"trials_per_cell must be >= 1, got {trials_per_cell}", field="trials_per_cell")
    config = ExperimentConfig(seed=seed) if config is None else config
    test_domains = test_suite(seed) if test_domains is None else test_domains

    jobs = [
        (domains, examples, trial)
        for domains in domain_counts
        for examples in example_counts
        for trial in range(trials_per_cell)
    ]

    def run_job(job: Tuple[int, int, int]) -> Tuple[float, float]:
        domains, examples, trial = job
        suite = generate_suite(SynthSpec(num_domains=domains, examples_per_domain=examples, seed=seed))
        cell_config = dataclasses.replace(
            config,
            main_batch=min(config.main_batch, examples),
            seed=(config.seed + trial) % 2**64,
        )
        # Evaluate once at the end; the per-epoch history is not needed here.
        every = max(1, cell_config.epochs)
        d2v = train(cell_config, suite, report=report, evaluate_every=every)
        baseline = train_baseline(cell_config, suite, report=report, evaluate_every=every)
        accuracies = (
            evaluate(d2v.model, test_domains).pooled_accuracy,
            evaluate(baseline.model, test_domains).pooled_accuracy,
        )
        logger.info(
            "cell %d domains x %d examples, trial %d: d2v %.4f, pooling %.4f",
            domains,
            examples,
            trial,
            *accuracies,
        )
        return accuracies

    outcomes = _map_ordered(run_job, jobs, threads)
    cells = []
    for start in range(0, len(jobs), trials_per_cell):
        domains, examples, _ = jobs[start]
        chunk = outcomes[start:start + trials_per_cell]
        cells.append(
            SweepCell(
                domains=domains,
                examples=examples,
                d2v_accuracy=math.fsum(a for a, _ in chunk) / trials_per_cell,
                baseline_accuracy=math.fsum(b for _, b in chunk) / trials_per_cell,
                trials=trials_per_cell,
            )
        )
    return SweepResult(domain_counts=domain_counts, example_counts=example_counts, cells=tuple(cells))


@dataclass(frozen=True)
class LodoRow:
    sources: Tuple[str, ...]
    target: str
    pooling_accuracy: float
    d2v_accuracy: float


@dataclass(frozen=True)
class LodoResult:
    rows: Tuple[LodoRow, ...]

    @property
    def average_pooling(self) -> float:
        return math.fsum(row.pooling_accuracy for row in self.rows) / len(self.rows)

    @property
    def average_d2v(self) -> float:
        return math.fsum(row.d2v_accuracy for row in self.rows) / len(self.rows)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            {
                "source": [";".join(row.sources) for row in self.rows] + [""],
                "target": [row.target for row in self.rows] + ["Average"],
                "pooling_accuracy": [row.pooling_accuracy for row in self.rows] + [self.average_pooling],
                "d2v_accuracy": [row.d2v_accuracy for row in self.rows] + [self.average_d2v],
            }
        )
        return frame


def write_lodo_csv(result: LodoResult, path: Union[str, Path]) -> Path:
    path = Path(path)
    result.to_frame().to_csv(path, index=False, lineterminator="\n")
    return path


def run_lodo(
    config: ExperimentConfig,
    data: Union[FeatureTable, Sequence[DomainDataset]],
    *,
    threads: Optional[int] = None,
    report: Optional[Report] = None,
) -> LodoResult:
    """Leave each domain out in turn, training both methods on the rest and scoring on it."""
    splits = lodo_splits(data)
    # A held-out domain may hold classes none of its sources have.
    n_classes = class_count([*splits[0].sources, splits[0].target])

    def run_split(index: int) -> LodoRow:
        split = splits[index]
        every = max(1, config.epochs)
        d2v = train(config, split.sources, report=report, evaluate_every=every, n_classes=n_classes)
        baseline = train_baseline(config, split.sources, report=report, evaluate_every=every, n_classes=n_classes)
        row = LodoRow(
            sources=tuple(split.source_ids),
            target=split.target.domain_id,
            pooling_accuracy=evaluate(baseline.model, [split.target]).pooled_accuracy,
            d2v_accuracy=evaluate(d2v.model, [split.target]).pooled_accuracy,
        )
        logger.info(
            "target %s: pooling %.4f, d2v %.4f", row.target, row.pooling_accuracy, row.d2v_accuracy
        )
        return row

    return LodoResult(rows=tuple(_map_ordered(run_split, list(range(len(splits))), threads)))
