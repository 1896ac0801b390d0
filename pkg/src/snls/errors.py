"""Exception hierarchy shared by the solvers and the CLI."""


class SnlsError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(SnlsError, ValueError):
    """Malformed arguments: wrong shapes, non-finite entries, bad options."""


class ModelEvaluationError(SnlsError):
    """A model or residual evaluation produced a non-finite value."""

    def __init__(self, message, *, row=None, column=None, params=None):
        super().__init__(message)
        self.row = row
        self.column = column
        self.params = params


class InvalidStartError(SnlsError):
    """The residual is not finite at the starting point."""


class SubproblemFailedError(SnlsError):
    """An inner weighted least-squares solve failed inside the dual loop."""

    def __init__(self, message, *, status=None, trace=None):
        super().__init__(message)
        self.status = status
        self.trace = trace if trace is not None else []


class ParseError(SnlsError):
    """Input file could not be parsed."""

    def __init__(self, message, *, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class EmptyDatasetError(ParseError):
    pass


class ConfigError(SnlsError):
    pass
