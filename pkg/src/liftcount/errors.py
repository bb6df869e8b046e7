class LiftcountError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class ParseError(LiftcountError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)


class ValidationError(LiftcountError):
    pass


class OutOfScopeError(LiftcountError):
    exit_code = 2


class InfeasibleError(LiftcountError):
    exit_code = 2


class UnsatisfiableError(LiftcountError):
    exit_code = 2


class CrossCheckError(LiftcountError):
    exit_code = 3


class OracleLimitError(OutOfScopeError):
    """The brute-force oracle refuses Herbrand bases above its cap."""
