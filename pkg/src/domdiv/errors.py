"""Exception hierarchy. Each family maps to a CLI exit code."""


class DomDivError(Exception):
    """Base class for all package errors."""

    exit_code = 1
    stage = None


class ConfigError(DomDivError, ValueError):
    exit_code = 2


class DataError(DomDivError, ValueError):
    exit_code = 3


class NumericalError(DomDivError, ArithmeticError):
    exit_code = 4


class ParseError(DataError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class DimensionMismatchError(DataError):
    pass


class UnknownLabelError(DataError):
    pass


class DuplicateIdError(DataError):
    pass


class EmptyInputError(DataError):
    pass


class InsufficientSamplesError(DataError):
    pass


class DegenerateClassError(DataError):
    pass


class MissingPrototypeError(DataError):
    pass


class CoverageError(DataError):
    pass


class NonConvergenceError(NumericalError):
    def __init__(self, message, iterations=None, last_iterate=None):
        super().__init__(message)
        self.iterations = iterations
        self.last_iterate = last_iterate


class SingularSystemError(NumericalError):
    pass


class BudgetExhaustedError(NumericalError):
    pass
