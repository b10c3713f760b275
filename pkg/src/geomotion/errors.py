"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError and
FormatError -> 3, DivergenceError -> 4.
"""


class GeoMotionError(Exception):
    """Base class for package errors."""


class ConfigError(GeoMotionError, ValueError):
    """Invalid configuration or command arguments."""


class FormatError(GeoMotionError, ValueError):
    """A file does not conform to its on-disk format."""


class DataError(GeoMotionError, ValueError):
    """Dataset contents are missing, inconsistent, or non-finite."""


class ShapeContractError(GeoMotionError, ValueError):
    """A tensor violates a declared shape contract; names the offender."""


class DivergenceError(GeoMotionError, RuntimeError):
    """Training produced a non-finite loss; carries the offending step."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")
