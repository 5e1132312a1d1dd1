"""Exception hierarchy shared by the library and the CLI."""


class SpagError(Exception):
    """Base class for all errors raised by this package."""


class ArgumentError(SpagError, ValueError):
    """An argument is outside its documented domain."""


class ParseError(SpagError, ValueError):
    """Malformed LibSVM input."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(SpagError, ArithmeticError):
    """A numerical routine failed to converge or hit an invalid state."""


class InvalidConstantsError(NumericalError):
    """Relative constants imply a condition number below one."""


class DivergedError(NumericalError):
    """An iterative method blew up.

    ``records`` holds whatever iteration history was collected before the
    failure so callers can still inspect or save it.
    """

    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = list(records) if records is not None else []
