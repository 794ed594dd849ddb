"""Exception hierarchy for the photonic QOC toolkit.

Every error derives from :class:`QocError`. The value-shaped errors also
derive from :class:`ValueError`, so ``except ValueError`` keeps working for
callers that do not care about the finer distinction.
"""

from typing import Optional


class QocError(Exception):
    """Base class for all toolkit errors."""


class ConstraintViolation(QocError, ValueError):
    """A control voltage lies outside the hardware range."""


class InvalidPairError(QocError, ValueError):
    """A channel pair (m, n) with m == n was used where m != n is required."""


class DimensionMismatch(QocError, ValueError):
    """Array shapes or channel/atom counts do not agree."""


class SegmentationError(QocError, ValueError):
    """The schedule segment count does not divide the simulation grid."""


class GateStringError(QocError, ValueError):
    """A gate string contains a character outside {I, X, Y, Z, H, S, T}."""


class ConfigError(QocError, ValueError):
    """A configuration file could not be parsed or violates the schema.

    Attributes:
        field: Dotted path of the offending field, if known
        line: 1-based line of a parse error, if known
        column: 1-based column of a parse error, if known
    """

    def __init__(
        self,
        message: str,
        field: Optional[str] = None,
        line: Optional[int] = None,
        column: Optional[int] = None,
    ):
        self.field = field
        self.line = line
        self.column = column
        location = ""
        if line is not None:
            location = f" (line {line}, column {column})"
        elif field is not None:
            location = f" (field '{field}')"
        super().__init__(f"{message}{location}")
