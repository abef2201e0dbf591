"""Exception hierarchy.

Every error carries the CLI exit code of its category so the command-line
front end can map failures without a lookup table.
"""


class MedaError(Exception):
    exit_code = 1


class ParseError(MedaError):
    """Malformed input file or configuration."""

    exit_code = 2

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(ParseError):
    pass


class DimensionError(MedaError, ValueError):
    exit_code = 3


class InsufficientDataError(DimensionError):
    pass


class EmptyInputError(DimensionError):
    pass


class NumericalError(MedaError, ArithmeticError):
    exit_code = 4


class ConvergenceError(NumericalError):
    pass


class DegenerateError(NumericalError):
    pass


class SingularSystemError(NumericalError):
    pass


class EmptyClassWarning(UserWarning):
    """A class has no members on one side; its alignment term is zeroed."""


class DegenerateFeatureWarning(UserWarning):
    """A feature has zero variance and was left unscaled."""
