"""Exception hierarchy shared across the package."""

from __future__ import annotations


class PaneliftError(Exception):
    """Base class for all panelift errors."""


class ValidationError(PaneliftError, ValueError):
    """An input violates a documented precondition or invariant."""


class DegenerateVarianceError(ValidationError):
    """Total variance of the regressor is zero in a population formula."""


class DegenerateRegressorError(ValidationError):
    """Sample variance of x is (numerically) zero; slope is unidentified."""


class InsufficientDataError(ValidationError):
    """Too few observations for the requested fit."""


class CollinearityError(ValidationError):
    """Covariate design is rank deficient.

    ``columns`` lists the offending column indices or term names.
    """

    def __init__(self, message: str, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class IdMismatchError(ValidationError):
    """Two keyed datasets do not cover the same unit ids."""

    def __init__(self, message: str, missing_ids=()):
        super().__init__(message)
        self.missing_ids = tuple(missing_ids)


class ResampleError(PaneliftError):
    """A random assignment came out degenerate; rerun with another seed or larger n."""


class DegenerateLabelsError(ValidationError):
    """A classification target contains a single class."""


class UndefinedMetricError(ValidationError):
    """A rank metric is undefined for this input (e.g. all values tied)."""


class InsufficientStrataError(ValidationError):
    """Fewer than two strata carry both treatment arms."""


class InputFileError(PaneliftError):
    """An input file is missing or ill formed.

    Carries the path and, when known, the first offending 1-based line.
    """

    def __init__(self, message: str, path=None, line=None):
        super().__init__(message)
        self.path = str(path) if path is not None else None
        self.line = line


class SchemaError(InputFileError):
    """A tabular input does not match the expected column schema."""

    def __init__(self, message: str, path=None, column=None, line=None):
        super().__init__(message, path=path, line=line)
        self.column = column
