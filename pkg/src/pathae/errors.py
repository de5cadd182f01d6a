"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 1,
DataError (and ParseError) -> 2, NumericError (and TrainingDiverged) -> 3.
"""


class PathaeError(Exception):
    """Base class for all package errors."""


class ShapeError(PathaeError):
    """Operand shapes are inconsistent."""


class ConfigError(PathaeError):
    """A configuration value or combination is invalid."""


class DataError(PathaeError):
    """Input data violates a documented contract."""


class ParseError(DataError):
    """A file could not be parsed; message carries the location."""


class NumericError(PathaeError):
    """A numeric operation produced non-finite values."""


class TrainingDiverged(NumericError):
    """Training loss became non-finite."""

    def __init__(self, epoch, loss_value):
        self.epoch = epoch
        self.loss_value = loss_value
        super().__init__(f"training diverged at epoch {epoch} (loss={loss_value})")
