"""Exception types raised across the package."""

from __future__ import annotations


class PathwealthError(Exception):
    """Base class for all package errors."""


class InvalidParams(PathwealthError, ValueError):
    pass


class CSVError(PathwealthError, ValueError):
    """Problem in an ingested CSV file; ``row`` is the 1-based line number."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class NonPositivePrice(CSVError):
    pass


class NonMonotoneTime(CSVError):
    pass


class MalformedRow(CSVError):
    pass


class IndexOutOfRange(InvalidParams, IndexError):
    pass


class InvalidHorizon(InvalidParams):
    pass


class DimensionMismatch(InvalidParams):
    pass


class UnknownKind(InvalidParams):
    pass


class StateCorrupt(PathwealthError):
    """Grid or prefix handed to a strategy is inconsistent with its horizon."""


class Ruin(PathwealthError, ArithmeticError):
    """A wealth factor ``1 + theta . dx/x`` was not strictly positive."""

    def __init__(self, time: float, factor: float, node: int | None = None):
        self.time = time
        self.factor = factor
        self.node = node
        where = f" at quadrature node {node}" if node is not None else ""
        super().__init__(f"wealth factor {factor!r} <= 0 at t={time!r}{where}")


class OmegaViolation(PathwealthError):
    def __init__(self, message: str, time: float | None = None, ratio: float | None = None):
        self.time = time
        self.ratio = ratio
        super().__init__(message)


class BoundViolation(PathwealthError, AssertionError):
    pass


class EmptyScenarioSet(PathwealthError, ValueError):
    pass


class SingularSigma(PathwealthError, ArithmeticError):
    pass
