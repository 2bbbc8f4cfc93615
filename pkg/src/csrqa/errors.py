"""Exception hierarchy shared by the csrqa modules."""


class CsrqaError(Exception):
    """Base class for all package errors."""


class ShapeError(CsrqaError, ValueError):
    """Array shapes do not satisfy an op's contract."""


class ContractError(CsrqaError, ValueError):
    """A precondition of an operation was violated."""


class NumericError(CsrqaError, FloatingPointError):
    """A computation produced NaN/Inf or an invalid probability."""


class ConfigError(CsrqaError, ValueError):
    """Inconsistent run configuration or unusable training setup."""


class DataError(CsrqaError):
    """Base for dataset ingestion problems."""


class ParseError(DataError, ValueError):
    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)


class FormatError(DataError, ValueError):
    """Input file does not have the expected layout (e.g. header)."""


class EvaluationError(CsrqaError, ValueError):
    """Ranking evaluation is impossible (e.g. no evaluable query)."""


class CheckpointError(CsrqaError):
    """Checkpoint cannot be loaded or does not match the run."""
