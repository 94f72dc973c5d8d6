"""Command-line entry point.

Exit codes: 0 on success, 1 on invalid input (bad flags, config, data), 2 on
runtime failure.
"""

import argparse
import dataclasses
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.table import Table

from .config import DEFAULT_GRID, ExperimentConfig, load_config, load_search_space, save_config
from .dataset_io import load_csv, save_csv
from .errors import D2VError, DegenerateComparisonError, ValidationError
from .json_utils import dump_json
from .manifest import RunManifest, write_manifest
from .model import D2VModel, load_checkpoint, save_checkpoint
from .report import generate_json, init as init_report
from .similarity import (
    compare,
    domain_similarity,
    known_similarity,
    random_similarity,
    write_pgm,
    write_similarity_csv,
)
from .synth import DomainDataset, SynthSpec, generate_suite, load_thetas, save_thetas, test_suite, thetas_of
from .trainer import (
    D2V,
    METHODS,
    evaluate,
    heatmap_sweep,
    random_search,
    run_lodo,
    train_method,
    write_grid_csv,
    write_lodo_csv,
    write_metrics,
)

logger = logging.getLogger(__name__)

console = Console()
err_console = Console(stderr=True)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILURE = 2

DATA_NAME = "data.csv"
THETAS_NAME = "thetas.csv"
MODEL_NAME = "model.json"
METRICS_NAME = "metrics.jsonl"
CONFIG_NAME = "config.json"
REPORT_NAME = "report.json"


class UsageError(ValidationError):
    """Bad command-line flags."""


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from exc
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from exc
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text!r}")
    return value


def _sigma(text: str) -> Optional[float]:
    if text == "auto":
        return None
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"sigma must be 'auto' or a number, got {text!r}") from exc
    if not value > 0 or value == float("inf"):
        raise argparse.ArgumentTypeError(f"sigma must be a finite number > 0, got {text!r}")
    return value


@dataclass
class _Run:
    """Bookkeeping shared by every command: output dir, inputs, resolved config."""

    command: str
    out: Path
    started: float = field(default_factory=time.perf_counter)
    inputs: List[Path] = field(default_factory=list)
    config: Optional[ExperimentConfig] = None
    seed: Optional[int] = None


def _prepare_out(out: Union[str, Path], force: bool) -> Path:
    out = Path(out)
    if out.exists() and not out.is_dir():
        raise ValidationError(f"{out} exists and is not a directory", path=str(out))
    if out.is_dir() and any(out.iterdir()) and not force:
        raise ValidationError(f"{out} is not empty; pass --force to write into it", path=str(out))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _start(command: str, args: argparse.Namespace) -> _Run:
    init_report(clear=True, warn=False)
    return _Run(command=command, out=_prepare_out(args.out, args.force))


def _finish(run: _Run, args: argparse.Namespace) -> int:
    if args.report:
        generate_json(output_path=run.out / REPORT_NAME)
    manifest = RunManifest.build(
        run.command,
        run.out,
        config=run.config,
        seed=run.seed,
        inputs=run.inputs,
        duration_seconds=round(time.perf_counter() - run.started, 3),
    )
    write_manifest(manifest, run.out)
    console.print(f"[green]{run.command}[/green] wrote {len(manifest.outputs) + 1} file(s) to {run.out}")
    return EXIT_OK


def _data_paths(data: Union[str, Path]) -> tuple:
    """(csv path, theta sidecar path or None) for a dataset file or directory."""
    path = Path(data)
    csv_path = path / DATA_NAME if path.is_dir() else path
    thetas_path = csv_path.with_name(THETAS_NAME)
    return csv_path, thetas_path if thetas_path.is_file() and thetas_path != csv_path else None


def _load_domains(data: Union[str, Path], run: _Run) -> List[DomainDataset]:
    csv_path, thetas_path = _data_paths(data)
    domains = load_csv(csv_path).to_domains()
    run.inputs.append(csv_path)
    if thetas_path is not None:
        thetas = load_thetas(thetas_path)
        run.inputs.append(thetas_path)
        domains = [
            dataclasses.replace(d, theta=thetas[d.domain_id]) if d.domain_id in thetas else d for d in domains
        ]
    return domains


def _resolve_config(args: argparse.Namespace, run: _Run) -> ExperimentConfig:
    config = ExperimentConfig()
    if getattr(args, "config", None):
        config = load_config(args.config)
        run.inputs.append(Path(args.config))
    config = config.with_overrides(
        seed=getattr(args, "seed", None),
        epochs=getattr(args, "epochs", None),
        lr=getattr(args, "lr", None),
        weight_decay=getattr(args, "weight_decay", None),
        main_batch=getattr(args, "main_batch", None),
    )
    run.config = config
    run.seed = config.seed
    return config


def _print_history_tail(history, title: str) -> None:
    table = Table(title=title)
    for column in ("epoch", "train error", "train acc", "test error", "test acc"):
        table.add_column(column, justify="right")

    def cell(value: Optional[float]) -> str:
        return "-" if value is None else f"{value:.4f}"

    for record in history[-5:]:
        table.add_row(
            str(record.epoch),
            cell(record.empirical_train_error),
            cell(record.train_accuracy),
            cell(record.empirical_test_error),
            cell(record.test_accuracy),
        )
    console.print(table)


def cmd_gen_synth(args: argparse.Namespace) -> int:
    """Write a synthetic rotated-halfspace dataset and its theta sidecar."""
    run = _start("gen-synth", args)
    run.seed = args.seed
    if args.suite == "test":
        domains = test_suite(args.seed)
    else:
        if args.domains is None or args.examples is None:
            raise UsageError("gen-synth --suite train needs --domains and --examples")
        domains = generate_suite(SynthSpec(args.domains, args.examples, seed=args.seed))
    save_csv(domains, run.out / DATA_NAME)
    save_thetas(domains, run.out / THETAS_NAME)
    logger.info("wrote %d domains, %d rows", len(domains), sum(d.n for d in domains))
    return _finish(run, args)


def cmd_train(args: argparse.Namespace) -> int:
    """Train D2V or the pooling baseline and write its checkpoint and metrics."""
    run = _start("train", args)
    config = _resolve_config(args, run)
    sources = _load_domains(args.data, run)
    test_domains = _load_domains(args.test_data, run) if args.test_data else None
    result = train_method(args.method, config, sources, test_domains=test_domains)
    config_hash = config.config_hash()
    save_checkpoint(result.model, run.out / MODEL_NAME, config_hash=config_hash)
    write_metrics(result.history, run.out / METRICS_NAME)
    save_config(config, run.out / CONFIG_NAME)
    _print_history_tail(result.history, f"{args.method} training")
    return _finish(run, args)


def cmd_eval(args: argparse.Namespace) -> int:
    """Score a checkpoint on labeled domains."""
    run = _start("eval", args)
    model, config_hash = load_checkpoint(args.model)
    run.inputs.append(Path(args.model))
    domains = _load_domains(args.data, run)
    scored = evaluate(model, domains)
    per_domain = scored.per_domain()
    per_domain.to_csv(run.out / "per_domain.csv", index=False, lineterminator="\n")
    dump_json(
        run.out / "evaluation.json",
        {
            "kind": model.kind,
            "config_hash": config_hash,
            "domains": len(domains),
            "pooled_accuracy": scored.pooled_accuracy,
            "pooled_error": scored.pooled_error,
            "mean_domain_accuracy": scored.mean_domain_accuracy,
            "train_form_error": scored.train_form_error,
        },
    )
    table = Table(title=f"{model.kind} evaluation")
    table.add_column("domains", justify="right")
    table.add_column("pooled accuracy", justify="right")
    table.add_column("mean domain accuracy", justify="right")
    table.add_row(str(len(domains)), f"{scored.pooled_accuracy:.4f}", f"{scored.mean_domain_accuracy:.4f}")
    console.print(table)
    return _finish(run, args)


def cmd_sweep(args: argparse.Namespace) -> int:
    """Accuracy heatmap over training-suite sizes, both methods."""
    run = _start("sweep", args)
    config = _resolve_config(args, run)
    result = heatmap_sweep(
        args.domains,
        args.examples,
        seed=config.seed,
        trials_per_cell=args.trials_per_cell,
        config=config,
    )
    write_grid_csv(result, run.out / "grid.csv")
    for method in METHODS:
        grid = result.accuracy_grid(method)
        table = Table(title=f"{method} accuracy (rows: domains, columns: examples per domain)")
        table.add_column("domains", justify="right")
        for examples in grid.columns:
            table.add_column(str(examples), justify="right")
        for domains, row in grid.iterrows():
            table.add_row(str(domains), *(f"{100 * value:.1f}" for value in row))
        console.print(table)
    return _finish(run, args)


def cmd_search(args: argparse.Namespace) -> int:
    """Random hyperparameter search scored on validation domains."""
    run = _start("search", args)
    base = _resolve_config(args, run)
    space = load_search_space(args.space)
    run.inputs.append(Path(args.space))
    sources = _load_domains(args.data, run)
    validation = _load_domains(args.validation_data, run) if args.validation_data else None
    result = random_search(space, sources, validation, base=base, log_path=run.out / "trials.jsonl")
    save_config(result.best, run.out / "best_config.json")
    table = Table(title="random search")
    for column in ("trial", "lr", "weight decay", "hidden task", "hidden main", "validation acc"):
        table.add_column(column, justify="right")
    for record in result.trials:
        style = "bold green" if record.trial == result.best_trial else None
        table.add_row(
            str(record.trial),
            f"{record.config.lr:.3g}",
            f"{record.config.weight_decay:.3g}",
            str(record.config.hidden_task),
            str(record.config.hidden_main),
            f"{record.validation_accuracy:.4f}",
            style=style,
        )
    console.print(table)
    return _finish(run, args)


def cmd_similarity(args: argparse.Namespace) -> int:
    """Estimated, known and random similarity matrices with their agreement."""
    run = _start("similarity", args)
    model, _ = load_checkpoint(args.model)
    run.inputs.append(Path(args.model))
    if not isinstance(model, D2VModel):
        raise ValidationError(f"{args.model} is a {model.kind} checkpoint; similarity needs a d2v model")
    if args.data:
        domains = _load_domains(args.data, run)
    else:
        domains = test_suite(args.seed)
    run.seed = args.seed

    estimated = domain_similarity(model, domains, args.sigma)
    write_similarity_csv(estimated, run.out / "estimated.csv")
    write_pgm(estimated, run.out / "estimated.pgm")
    ids = estimated.domain_ids
    random = random_similarity(len(ids), np.random.default_rng(args.seed), ids, estimated.thetas)
    write_similarity_csv(random, run.out / "random.csv")
    write_pgm(random, run.out / "random.pgm")

    thetas = thetas_of(domains)
    comparisons = {}
    known_sigma = None
    if thetas is None:
        logger.warning("no theta for every domain; skipping known similarity")
    else:
        known = known_similarity(thetas, None, ids)
        write_similarity_csv(known, run.out / "known.csv")
        write_pgm(known, run.out / "known.pgm")
        known_sigma = known.sigma
        for name, (a, b) in {
            "estimated_vs_known": (estimated, known),
            "known_vs_random": (known, random),
        }.items():
            try:
                comparisons[name] = dataclasses.asdict(compare(a, b))
            except DegenerateComparisonError as exc:
                logger.warning("%s: %s", name, exc.message)
                comparisons[name] = None
    summary = {"sigma": estimated.sigma, "known_sigma": known_sigma, "domains": len(ids)}
    dump_json(run.out / "comparison.json", {**summary, **comparisons})

    table = Table(title="similarity agreement")
    table.add_column("pair")
    table.add_column("pearson", justify="right")
    table.add_column("spearman", justify="right")
    for name, value in comparisons.items():
        if value is not None:
            table.add_row(name, f"{value['pearson']:.3f}", f"{value['spearman']:.3f}")
    console.print(table)
    return _finish(run, args)


def cmd_lodo(args: argparse.Namespace) -> int:
    """Leave-one-domain-out comparison of D2V against the pooling baseline."""
    run = _start("lodo", args)
    config = _resolve_config(args, run)
    csv_path, _ = _data_paths(args.data)
    table_data = load_csv(csv_path)
    run.inputs.append(csv_path)
    result = run_lodo(config, table_data)
    write_lodo_csv(result, run.out / "lodo.csv")
    table = Table(title="leave-one-domain-out accuracy")
    for column in ("source", "target", "pooling", D2V):
        table.add_column(column)
    for row in result.rows:
        table.add_row(", ".join(row.sources), row.target, f"{row.pooling_accuracy:.4f}", f"{row.d2v_accuracy:.4f}")
    table.add_row("", "Average", f"{result.average_pooling:.4f}", f"{result.average_d2v:.4f}", style="bold")
    console.print(table)
    return _finish(run, args)


def _add_output(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", required=True, help="Output directory")
    parser.add_argument("--force", action="store_true", help="Write into a non-empty output directory")
    parser.add_argument("--report", action="store_true", help="Also write the instrumentation report")


def _add_config(parser: argparse.ArgumentParser, seed_help: str = "Override the config seed") -> None:
    parser.add_argument("--config", help="Experiment config JSON")
    parser.add_argument("--seed", type=_seed, help=seed_help)
    parser.add_argument("--epochs", type=int, help="Override the config epochs")
    parser.add_argument("--lr", type=float, help="Override the config learning rate")
    parser.add_argument("--weight-decay", type=float, help="Override the config weight decay")
    parser.add_argument("--main-batch", type=_positive_int, help="Override the config main batch size")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="domain2vec", description="Domain2Vec domain generalization toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    gen = commands.add_parser("gen-synth", help="Generate rotated-halfspace domains")
    gen.add_argument("--suite", choices=("train", "test"), default="train")
    gen.add_argument("--domains", type=_positive_int)
    gen.add_argument("--examples", type=_positive_int)
    gen.add_argument("--seed", type=_seed, default=0)
    _add_output(gen)
    gen.set_defaults(func=cmd_gen_synth)

    train = commands.add_parser("train", help="Train a model")
    train.add_argument("--data", required=True, help="Dataset CSV or directory holding data.csv")
    train.add_argument("--test-data", help="Labeled domains scored every epoch")
    train.add_argument("--method", choices=METHODS, default=D2V)
    _add_config(train)
    _add_output(train)
    train.set_defaults(func=cmd_train)

    ev = commands.add_parser("eval", help="Evaluate a checkpoint")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)
    _add_output(ev)
    ev.set_defaults(func=cmd_eval)

    sweep = commands.add_parser("sweep", help="Accuracy heatmap over domains x examples")
    sweep.add_argument("--domains", type=_positive_int, nargs="+", default=list(DEFAULT_GRID.domain_counts))
    sweep.add_argument("--examples", type=_positive_int, nargs="+", default=list(DEFAULT_GRID.example_counts))
    sweep.add_argument("--trials-per-cell", type=_positive_int, default=1)
    _add_config(sweep, seed_help="Data and model seed")
    _add_output(sweep)
    sweep.set_defaults(func=cmd_sweep)

    search = commands.add_parser("search", help="Random hyperparameter search")
    search.add_argument("--space", required=True, help="Search space JSON")
    search.add_argument("--data", required=True)
    search.add_argument("--validation-data", help="Validation domains; 20%% of --data when omitted")
    _add_config(search)
    _add_output(search)
    search.set_defaults(func=cmd_search)

    sim = commands.add_parser("similarity", help="Domain similarity matrices")
    sim.add_argument("--model", required=True)
    sim.add_argument("--data", help="Domains to compare; the 44-domain test suite when omitted")
    sim.add_argument(
        "--sigma",
        type=_sigma,
        default=None,
        help="Bandwidth of the estimated matrix only: 'auto' (median heuristic) or a value > 0; "
        "the known matrix always uses the median heuristic over theta",
    )
    sim.add_argument("--seed", type=_seed, default=0, help="Seed of the test suite and the random baseline")
    _add_output(sim)
    sim.set_defaults(func=cmd_similarity)

    lodo = commands.add_parser("lodo", help="Leave-one-domain-out table")
    lodo.add_argument("--data", required=True)
    _add_config(lodo)
    _add_output(lodo)
    lodo.set_defaults(func=cmd_lodo)
    return parser


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ValidationError as exc:
        err_console.print(f"[red]error:[/red] {escape(exc.message)}")
        return EXIT_INVALID
    _configure_logging(args.verbose)
    command: Callable[[argparse.Namespace], int] = args.func
    try:
        return command(args)
    except ValidationError as exc:
        err_console.print(f"[red]error:[/red] {escape(exc.message)}")
        logger.debug("raised from %s", exc.location)
        return EXIT_INVALID
    except D2VError as exc:
        err_console.print(f"[red]failed:[/red] {escape(exc.message)}")
        logger.debug("raised from %s", exc.location)
        return EXIT_FAILURE
    except Exception as exc:  # noqa: BLE001
        logger.exception("%s failed", args.command)
        err_console.print(f"[red]failed:[/red] {escape(str(exc))}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
