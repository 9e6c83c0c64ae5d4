"""Exception hierarchy shared across the package."""


class BivselError(Exception):
    """Base class for all package-specific failures."""


class ParseError(BivselError):
    """Malformed CSV input (ragged row, bad numeric literal, bad header)."""


class SchemaError(BivselError):
    """Data violates a declared schema (unknown column, non-binary values)."""


class TransformError(BivselError):
    """A derived-column definition references unknown inputs or clashes."""


class CalibrationError(BivselError):
    """Missingness-probability calibration cannot reach the target rate."""


class ImputationError(BivselError):
    """An imputation pass cannot proceed (e.g. a column with no observed cells)."""


class FitError(BivselError):
    """A learner could not be fit on the given data."""


class SelectionError(BivselError):
    """A selection procedure failed; carries the replicate index when known."""

    def __init__(self, message, replicate=None):
        super().__init__(message)
        self.replicate = replicate


class PipelineError(BivselError):
    """Too many replicate-level failures to report a consolidated answer."""
