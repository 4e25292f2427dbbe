# encoding: utf-8
# NeuroTrain exception hierarchy


class NeuroTrainError(Exception):
    """Base class for all errors raised by NeuroTrain."""


class DimensionError(NeuroTrainError, ValueError):
    """Tensor shapes do not agree."""


class ArgumentError(NeuroTrainError, ValueError):
    """An argument value is outside what the operation accepts."""


class RangeError(NeuroTrainError, ValueError):
    """Data values fall outside their allowed interval."""


class NumericError(NeuroTrainError, ArithmeticError):
    """A NaN or Inf appeared where finite values are required."""


class ConfigError(NeuroTrainError, ValueError):
    """
    Invalid model spec or configuration file.

    :param message:  what is wrong.
    :param location:  JSON-style path of the offending key, e.g. "models[1].lif.beta".
    """

    def __init__(self, message, location=None):
        self.message = message
        self.location = location
        if location:
            message = "{} (at {})".format(message, location)
        super().__init__(message)


class IncompatibilityError(NeuroTrainError, ValueError):
    """A trainer, model and dataset cannot be combined; names the violated constraint."""

    def __init__(self, constraint):
        self.constraint = constraint
        super().__init__(constraint)


class FormatError(NeuroTrainError, ValueError):
    """A binary container has the wrong magic number or record layout."""


class LengthError(FormatError):
    """A binary container is truncated."""


class TapeError(NeuroTrainError, ValueError):
    """A recorded tape does not belong to the model it is replayed against."""


class MissingRewardError(ArgumentError):
    """A reinforcement trainer was stepped without a reward source."""
