from __future__ import annotations

from typing import Any, Sequence


class BaseWarpbandException(Exception):
    """A base exception handler for Warpband."""

    exit_code: int = 2

    def __init__(self, *args):
        if args:
            self.message = args[0]
        else:
            self.message = self.__doc__

    def __str__(self):
        return self.message


class ConfigurationError(BaseWarpbandException):
    """The supplied configuration is invalid."""

    exit_code = 1


class DuplicateCommand(ConfigurationError):
    """You are attempting to register multiple commands with the same name.
    Consider setting the command_name argument to something unique."""


class UnknownCommand(ConfigurationError):
    """The command you requested does not exist."""


class DatasetError(BaseWarpbandException):
    """The dataset could not be loaded."""

    exit_code = 1


class EmptyDataset(DatasetError):
    """The dataset does not contain any usable rows."""


class DuplicateColumn(DatasetError):
    """The dataset header contains a duplicated column name."""

    def __init__(self, column: str):
        super().__init__(f"Duplicate column name {column!r} in header")
        self.column: str = column


class RaggedRow(DatasetError):
    """A row has a different number of fields than the header."""

    def __init__(self, line: int | None, detail: str):
        where = f" at line {line}" if line is not None else ""
        super().__init__(f"Ragged row{where}: {detail}")
        self.line: int | None = line


class MalformedCell(DatasetError):
    """A cell could not be parsed as a real number."""

    def __init__(self, row: int, column: str, value: Any):
        super().__init__(
            f"Malformed numeric cell {value!r} at row {row}, column {column!r}"
        )
        self.row: int = row
        self.column: str = column
        self.value: Any = value


class OutOfRange(DatasetError):
    """An input value lies outside its declared variable range."""

    def __init__(self, row: int, column: str, value: float):
        super().__init__(
            f"Row {row}: {column}={value!r} lies outside the declared range"
        )
        self.row: int = row
        self.column: str = column
        self.value: float = value


class DimensionMismatch(BaseWarpbandException):
    """Received an array of the wrong shape."""

    def __init__(self, expected: Any, received: Any):
        super().__init__(f"Dimension mismatch: expected {expected}, got {received}")
        self.expected = expected
        self.received = received


class NumericalError(BaseWarpbandException):
    """A numerical routine failed."""


class UnderDetermined(NumericalError):
    """The model is under-determined: more basis terms than observations."""

    def __init__(self, n: int, p: int):
        super().__init__(
            f"Model is under-determined: n={n} observations for p={p} basis terms"
        )
        self.n: int = n
        self.p: int = p


class RankDeficient(NumericalError):
    """The design matrix does not have full column rank."""

    def __init__(self, terms: Sequence[str]):
        super().__init__(
            "Design matrix is rank deficient, offending terms: " + ", ".join(terms)
        )
        self.terms: list[str] = list(terms)


class FactorizationFailed(NumericalError):
    """The posterior covariance could not be factorized."""


class DegeneratePosterior(NumericalError):
    """The posterior has zero variance so a confidence band is undefined."""
