"""Exception hierarchy shared across the package."""


class CogEffortError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(CogEffortError):
    """Invalid configuration value, schema violation, or missing input artifact."""


class ShapeError(CogEffortError):
    """Array dimensions do not match an operation's contract."""


class DataError(CogEffortError):
    """Input data violates a precondition (bad labels, misaligned keys, ...)."""


class AllMissingColumn(DataError):
    """An optode column has no finite value, so per-trial imputation is impossible."""


class TrainingError(CogEffortError):
    """Training aborted at runtime (non-finite loss or similar)."""
