"""Per-domain feature tables and leave-one-domain-out splits.

CSV contract: UTF-8, comma separated, header ``domain,label,f0,...,f{d-1}``,
``.`` as decimal separator, labels as pre-encoded integers.
"""

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
import numpy.typing as npt
import pandas as pd

from .errors import DataFormatError, ShapeError, ValidationError
from .nn import Matrix
from .synth import DomainDataset

logger = logging.getLogger(__name__)

_PARSER_LINE = re.compile(r"line (\d+)")


@dataclass(frozen=True)
class FeatureTable:
    """Rows of (domain id, label, d features) in file order."""

    domain_ids: npt.NDArray[np.str_]
    labels: npt.NDArray[np.int64]
    features: Matrix

    def __post_init__(self):
        n = self.features.shape[0]
        if self.domain_ids.shape != (n,) or self.labels.shape != (n,):
            raise ShapeError(
                f"table columns disagree: {self.domain_ids.shape[0]} domain ids, "
                f"{self.labels.shape[0]} labels, {n} feature rows"
            )

    @property
    def n_rows(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def shape(self) -> tuple:
        return (self.n_rows, self.dim)

    def domains(self) -> List[str]:
        """Distinct domain ids in order of first appearance."""
        return list(pd.unique(self.domain_ids))

    def to_domains(self) -> List[DomainDataset]:
        result = []
        for domain_id in self.domains():
            rows = np.flatnonzero(self.domain_ids == domain_id)
            result.append(
                DomainDataset(
                    domain_id=str(domain_id),
                    features=self.features[rows],
                    labels=self.labels[rows],
                    row_ids=rows.astype(np.int64),
                )
            )
        return result

    @classmethod
    def from_domains(cls, domains: Sequence[DomainDataset]) -> "FeatureTable":
        if not domains:
            raise ValidationError("cannot build a table from zero domains")
        dims = {domain.dim for domain in domains}
        if len(dims) != 1:
            raise ShapeError(f"domains disagree on feature dimension: {sorted(dims)}")
        return cls(
            domain_ids=np.concatenate([np.full(d.n, d.domain_id, dtype=object) for d in domains]).astype(str),
            labels=np.concatenate([d.require_labels() for d in domains]),
            features=np.vstack([d.features for d in domains]),
        )


@dataclass(frozen=True)
class LodoSplit:
    """All domains but one as sources; the held-out domain as target."""

    sources: List[DomainDataset]
    target: DomainDataset

    def row_ids(self) -> npt.NDArray[np.int64]:
        parts = [d.row_ids for d in (*self.sources, self.target) if d.row_ids is not None]
        return np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)

    @property
    def source_ids(self) -> List[str]:
        return [d.domain_id for d in self.sources]


def _expected_header(n_columns: int) -> List[str]:
    return ["domain", "label"] + [f"f{i}" for i in range(n_columns - 2)]


def load_csv(path: Union[str, Path]) -> FeatureTable:
    """
    Parse a feature CSV into a FeatureTable, preserving row order.

    Raises:
        DataFormatError: unknown header, ragged row (with its line number) or
            non-numeric value (with line and column).
    """
    path = Path(path)
    try:
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            na_values=[],
            encoding="utf-8",
        )
    except FileNotFoundError as exc:
        raise DataFormatError(f"{path}: no such file", path=str(path)) from exc
    except pd.errors.EmptyDataError as exc:
        raise DataFormatError(f"{path}: file is empty", path=str(path)) from exc
    except pd.errors.ParserError as exc:
        match = _PARSER_LINE.search(str(exc))
        line = int(match.group(1)) if match else None
        raise DataFormatError(f"{path}: ragged row at line {line}: {exc}", path=str(path), line=line) from exc

    columns = [str(c) for c in frame.columns]
    if len(columns) < 3 or columns != _expected_header(len(columns)):
        raise DataFormatError(
            f"{path}: unknown header {','.join(columns)}; expected domain,label,f0,...",
            path=str(path),
            header=columns,
        )

    # Short rows come back as missing values.
    missing = frame.isna().any(axis=1).to_numpy()
    if missing.any():
        line = int(np.flatnonzero(missing)[0]) + 2
        raise DataFormatError(f"{path}: ragged row at line {line}", path=str(path), line=line)

    numeric = {}
    for column_index, column in enumerate(columns[1:], start=1):
        values = pd.to_numeric(frame[column].str.strip(), errors="coerce")
        bad = (values.isna() | ~np.isfinite(values.astype(float))).to_numpy()
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise DataFormatError(
                f"{path}: non-numeric value {frame[column].iloc[row]!r} at line {row + 2}, "
                f"column {column_index + 1} ({column})",
                path=str(path),
                line=row + 2,
                column=column_index + 1,
            )
        numeric[column] = values.astype(float).to_numpy()

    labels = numeric.pop("label")
    if not np.all(labels == np.round(labels)):
        row = int(np.flatnonzero(labels != np.round(labels))[0])
        raise DataFormatError(f"{path}: label at line {row + 2} is not an integer", line=row + 2, column=2)
    table = FeatureTable(
        domain_ids=frame["domain"].to_numpy(dtype=str),
        labels=labels.astype(np.int64),
        features=np.column_stack([numeric[c] for c in columns[2:]]).astype(np.float64),
    )
    logger.debug("loaded %s: %d rows, %d features, %d domains", path, table.n_rows, table.dim, len(table.domains()))
    return table


def save_csv(domains: Union[FeatureTable, Sequence[DomainDataset]], path: Union[str, Path]) -> Path:
    """Write domains (or a table) in the load_csv schema; floats are written round-trip exact."""
    table = domains if isinstance(domains, FeatureTable) else FeatureTable.from_domains(domains)
    frame = pd.DataFrame(table.features, columns=[f"f{i}" for i in range(table.dim)])
    frame.insert(0, "label", table.labels)
    frame.insert(0, "domain", table.domain_ids)
    path = Path(path)
    frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    return path


def lodo_splits(table: Union[FeatureTable, Sequence[DomainDataset]]) -> List[LodoSplit]:
    """One split per distinct domain, in order of first appearance."""
    domains = table.to_domains() if isinstance(table, FeatureTable) else list(table)
    if len(domains) < 2:
        raise ValidationError(
            f"leave-one-domain-out needs at least 2 domains, got {len(domains)}",
            domains=[d.domain_id for d in domains],
        )
    return [
        LodoSplit(sources=[d for d in domains if d.domain_id != target.domain_id], target=target)
        for target in domains
    ]
