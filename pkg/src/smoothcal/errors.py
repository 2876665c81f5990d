"""Exception hierarchy shared by every smoothcal module."""


class SmoothcalError(Exception):
    """Base class for all errors raised by smoothcal."""


class ConfigurationError(SmoothcalError, ValueError):
    """A hyperparameter or configuration value lies outside its domain."""


class UnsupportedConfigurationError(ConfigurationError):
    """A configuration is well-formed but the requested formula is undefined for it."""


class InvalidInputError(SmoothcalError, ValueError):
    """Input data violates a precondition (range, shape, count)."""


class MissingDataError(SmoothcalError, KeyError):
    """A method needs votes or confidences that the example does not carry."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class UndefinedMetricError(SmoothcalError, ValueError):
    """A metric is undefined for the given inputs, e.g. AUC with one class."""


class DivergenceError(SmoothcalError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, message, *, epoch=None, learning_rate=None, seed=None, stage=None):
        super().__init__(message)
        self.epoch = epoch
        self.learning_rate = learning_rate
        self.seed = seed
        self.stage = stage


class ParseError(SmoothcalError, ValueError):
    """A dataset or auxiliary file could not be parsed."""

    def __init__(self, message, *, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column
