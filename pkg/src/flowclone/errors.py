"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ``DataError`` subclasses exit with 2,
``NumericError`` subclasses with 3 and ``ConfigError`` with 1.
"""

from __future__ import annotations


class FlowCloneError(Exception):
    """Base class for every error raised by this package."""


class DataError(FlowCloneError):
    pass


class NumericError(FlowCloneError):
    pass


class ConfigError(FlowCloneError):
    def __init__(self, problems: list[str] | str):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ParseError(DataError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        super().__init__(f"{message} (line {line}, column {column})")


class GranularityError(DataError):
    pass


class MalformedNode(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class DuplicateId(DataError):
    pass


class UnknownFragment(DataError):
    pass


class MissingTypeTags(DataError):
    pass


class EmptyDataset(DataError):
    pass


class DegenerateValidation(DataError):
    pass


class ModelKindMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class SingleClass(DataError):
    pass


class ShapeMismatch(NumericError):
    pass


class EmptyGraph(NumericError):
    pass


class ZeroVector(NumericError):
    pass


class NonFiniteLoss(NumericError):
    pass
