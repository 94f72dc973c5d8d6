"""Exception hierarchy; every error carries a message, context and origin."""

import os
import sys
from dataclasses import dataclass, field
from types import FrameType
from typing import Any, Dict, Optional

_PACKAGE_DIR = os.path.dirname(os.path.abspath(__file__)) + os.sep


@dataclass(frozen=True)
class Location:
    """Where user code called into domain2vec."""

    filename: str
    lineno: int
    function: str

    def __str__(self) -> str:
        return f"{self.filename}:{self.lineno} in {self.function}"


UNKNOWN_LOCATION = Location("<unknown>", 0, "<unknown>")


def caller_location(frame: Optional[FrameType] = None) -> Location:
    """
    First frame outside the package, walking outwards from ``frame``.

    Frames of generated code (``<string>``, ``<stdin>``) are passed over while a
    real source file remains further out.
    """
    frame = sys._getframe(1) if frame is None else frame
    if frame is None:
        return UNKNOWN_LOCATION
    innermost = Location(frame.f_code.co_filename, frame.f_lineno, frame.f_code.co_name)
    fallback = None
    while frame is not None:
        filename = frame.f_code.co_filename
        here = Location(filename, frame.f_lineno, frame.f_code.co_name)
        if filename.startswith("<"):
            fallback = fallback or here
        elif not os.path.abspath(filename).startswith(_PACKAGE_DIR):
            return here
        frame = frame.f_back
    return fallback or innermost


@dataclass(frozen=True)
class ErrorInfo:
    message: str
    context: Dict[str, Any] = field(default_factory=dict)
    location: Location = UNKNOWN_LOCATION


class D2VError(Exception):
    """Base class for every error raised by domain2vec."""

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.info = ErrorInfo(message, context, caller_location(sys._getframe(1)))

    @property
    def message(self) -> str:
        return self.info.message

    @property
    def context(self) -> Dict[str, Any]:
        return self.info.context

    @property
    def location(self) -> Location:
        return self.info.location


class ValidationError(D2VError):
    """Input rejected before any computation ran (CLI exit code 1)."""


class ShapeError(ValidationError):
    """Array dimensions do not line up."""


class LabelError(ValidationError):
    """A class index lies outside [0, n_classes)."""


class ConfigError(ValidationError):
    """A configuration field is missing, mistyped or out of range."""


class DataFormatError(ValidationError):
    """An input file does not follow its schema."""


class EmptyDomainError(ValidationError):
    """A domain sample has no rows."""


class UnlabeledDomainError(ValidationError):
    """Labels are required but the domain carries none."""


class DegenerateComparisonError(ValidationError):
    """A correlation is undefined because one side has zero variance."""


class NumericalError(D2VError):
    """A loss or parameter became non-finite (CLI exit code 2)."""


def shape_mismatch(
    what: str, expected: Any, actual: Any, **context: Any
) -> ShapeError:
    """Build a ShapeError that names both shapes."""
    return ShapeError(
        f"{what}: expected shape {tuple(expected)}, got {tuple(actual)}",
        expected=tuple(expected),
        actual=tuple(actual),
        **context,
    )

