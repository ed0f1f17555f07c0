"""Exception hierarchy shared by all modules.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, DivergenceError -> 4.
"""


class NarxLabError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(NarxLabError):
    """A configuration value violates its contract."""


class ShapeError(NarxLabError):
    """Array dimensions are inconsistent with the model or data."""


class DataError(NarxLabError):
    """An artifact is missing, stale, or makes a metric undefined."""


class DivergenceError(NarxLabError):
    """A numerical process produced non-finite values."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step
