"""Exception hierarchy shared by every diffch module."""


class DiffchError(Exception):
    """Base class for all package errors."""


class DimensionError(DiffchError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(DiffchError, ValueError):
    """A precondition of an operation was violated."""


class ConfigError(DiffchError, ValueError):
    """Invalid configuration value."""


class TrainingError(DiffchError, RuntimeError):
    """Non-finite loss or gradient during optimisation."""

    def __init__(self, message, *, step=None, param=None):
        super().__init__(message)
        self.step = step
        self.param = param


class ProfileError(ConfigError):
    """A scenario profile is malformed."""


class FeatureError(DiffchError, ValueError):
    """Statistical features cannot be extracted from a channel."""


class SplitError(DiffchError, ValueError):
    """A dataset cannot be split as requested."""


class FormatError(DiffchError, ValueError):
    """A dataset or checkpoint file is malformed."""
