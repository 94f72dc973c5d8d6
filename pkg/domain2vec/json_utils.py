"""Shared JSON serialization utilities.

Provides the canonical conversion of Python and numpy values to JSON-safe
representations, the base64 array codec used by model checkpoints, and
writers that produce byte-reproducible files. Checkpoints, metrics logs,
manifests and the instrumentation report all go through this module so that
concerns like float('inf') handling live in exactly one place.
"""

import base64
import dataclasses
import hashlib
import json
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, Union

import numpy as np

from .errors import DataFormatError


def sanitize_float(value: float) -> Union[float, str]:
    """Convert non-finite float values to JSON-safe string representations.

    Standard JSON does not support Infinity, -Infinity, or NaN. This function
    converts those to string representations while passing through normal
    float values unchanged.

    Args:
        value: A float value to sanitize.

    Returns:
        The original float if finite, or a string ("Infinity", "-Infinity",
        "NaN") if not.
    """
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    elif math.isnan(value):
        return "NaN"
    return value


def to_json_serializable(value: Any) -> Any:
    """Convert a Python or numpy value to a JSON-serializable representation.

    Handles special float values (inf, -inf, NaN), numpy scalars and arrays,
    enums, paths, dataclasses, and recursively processes lists, tuples and
    dicts. Anything else falls back to a string representation.

    Args:
        value: Value to convert.

    Returns:
        A JSON-serializable representation of the value.
    """
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, (float, np.floating)):
        return sanitize_float(float(value))
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, str):
        return value
    if isinstance(value, Enum):
        return to_json_serializable(value.value)
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, np.ndarray):
        return to_json_serializable(value.tolist())

    if isinstance(value, (list, tuple)):
        return [to_json_serializable(item) for item in value]
    elif isinstance(value, dict):
        return {str(k): to_json_serializable(v) for k, v in value.items()}

    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return to_json_serializable(dataclasses.asdict(value))

    try:
        json.dumps(value, allow_nan=False)
        return value
    except (TypeError, ValueError, OverflowError):
        try:
            return f"<{type(value).__name__}: {repr(value)}>"
        except Exception:
            return f"<{type(value).__name__}: (unable to represent)>"


def encode_array(array: np.ndarray) -> Dict[str, Any]:
    """Encode a float64 array as shape plus base64 of its little-endian row-major bytes."""
    data = np.ascontiguousarray(array, dtype="<f8")
    return {
        "shape": list(data.shape),
        "data": base64.b64encode(data.tobytes(order="C")).decode("ascii"),
    }


def decode_array(payload: Dict[str, Any]) -> np.ndarray:
    """Inverse of encode_array."""
    try:
        shape = tuple(int(n) for n in payload["shape"])
        raw = base64.b64decode(payload["data"], validate=True)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"malformed encoded array: {exc}") from exc
    expected = 8 * int(np.prod(shape, dtype=np.int64))
    if len(raw) != expected:
        raise DataFormatError(
            f"encoded array holds {len(raw)} bytes, shape {shape} needs {expected}",
            shape=shape,
            bytes=len(raw),
        )
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def canonical_json(value: Any) -> str:
    """Compact, key-sorted JSON text used for hashing."""
    return json.dumps(
        to_json_serializable(value), sort_keys=True, separators=(",", ":"), allow_nan=False
    )


def sha256_of(value: Any) -> str:
    return hashlib.sha256(canonical_json(value).encode("utf-8")).hexdigest()


def dump_json(path: Union[str, Path], value: Any) -> None:
    """Write indented, key-sorted JSON with a trailing newline."""
    text = json.dumps(to_json_serializable(value), sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_json(path: Union[str, Path]) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataFormatError(f"{path}: no such file", path=str(path)) from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
            path=str(path),
            line=exc.lineno,
            column=exc.colno,
        ) from exc


def write_jsonl(path: Union[str, Path], records: Iterable[Any]) -> None:
    """Write one key-sorted JSON object per line."""
    lines = [
        json.dumps(to_json_serializable(record), sort_keys=True, allow_nan=False)
        for record in records
    ]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_jsonl(path: Union[str, Path]) -> list:
    records = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataFormatError(
                f"{path}: invalid JSON on line {lineno}: {exc.msg}", line=lineno
            ) from exc
    return records
