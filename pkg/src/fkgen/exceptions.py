"""Exception hierarchy shared by the library and the CLI."""


class FKError(Exception):
    """Base class for library errors."""


class EpochRangeError(FKError, IndexError):
    """An epoch index lies outside ``0..horizon`` (or ``1..horizon``)."""


class ModelContractError(FKError, ValueError):
    """A model broke a standing assumption (potential outside (0, 1],
    non-positive transition density, rows not summing to one)."""


class ModelEvaluationError(FKError, RuntimeError):
    """A model callback raised; carries the epoch for context."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class DegenerateWeightsError(FKError, FloatingPointError):
    """All selection weights vanished in linear scale."""

    def __init__(self, epoch):
        super().__init__(f"selection weights sum to zero at epoch {epoch}")
        self.epoch = epoch


class EnumerationCapError(FKError):
    """An exact enumeration would exceed the configured atom cap."""


class ConvergenceError(FKError):
    """An iterative oracle computation did not converge."""


class HistoryError(FKError, ValueError):
    """A cloud history is incomplete or inconsistent."""


class ConfigError(FKError, ValueError):
    """A scenario configuration is malformed or fails schema validation."""
