"""Loading, validating and coding experiment tables.

A dataset is a flat run table: one row per simulation run, some columns are
process inputs with a declared physical range and some are responses.
Inputs are mapped affinely onto the coded box ``[-1, 1]^d`` before any fitting.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from warpband.exceptions import (
    ConfigurationError,
    DatasetError,
    DimensionMismatch,
    DuplicateColumn,
    EmptyDataset,
    MalformedCell,
    OutOfRange,
    RaggedRow,
)
from warpband.formats import SchemaRecord, VariableRecord

log = logging.getLogger(__name__)
_RANGE_SLACK = 1e-12
_PARSER_LINE = re.compile(r"line (\d+)")


def _frozen(array) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class VariableSpec:
    """A named input variable with its physical range."""

    name: str
    lower: float
    upper: float

    def __post_init__(self):
        if not self.name:
            raise ConfigurationError("Variable names must be non-empty")

        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ConfigurationError(f"Variable {self.name!r} has a non-finite bound")

        if not self.lower < self.upper:
            raise ConfigurationError(
                f"Variable {self.name!r} needs lower < upper, "
                f"got [{self.lower}, {self.upper}]"
            )

    @property
    def center(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.upper - self.lower)

    def to_record(self) -> VariableRecord:
        return VariableRecord(name=self.name, lower=self.lower, upper=self.upper)

    @classmethod
    def from_record(cls, record: VariableRecord) -> VariableSpec:
        try:
            return cls(str(record["name"]), float(record["lower"]), float(record["upper"]))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"Invalid variable entry {record!r}") from e


def _check_unique(names: Sequence[str], what: str) -> None:
    seen = set()
    for name in names:
        if name in seen:
            raise ConfigurationError(f"Duplicate {what} name {name!r}")
        seen.add(name)


@dataclass(frozen=True)
class Schema:
    """Maps CSV columns onto input and output roles.

    Columns that are not named by the schema are ignored.
    """

    inputs: tuple[VariableSpec, ...]
    outputs: tuple[str, ...]
    strict: bool = True
    degree: int | None = None
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.inputs:
            raise ConfigurationError("Schema needs at least one input column")
        if not self.outputs:
            raise ConfigurationError("Schema needs at least one output column")

        _check_unique([s.name for s in self.inputs] + list(self.outputs), "column")
        if self.weights is not None and len(self.weights) != len(self.outputs):
            raise ConfigurationError(
                f"Expected {len(self.outputs)} objective weights, got {len(self.weights)}"
            )

    @classmethod
    def from_record(cls, record: SchemaRecord) -> Schema:
        if "inputs" not in record or "outputs" not in record:
            raise ConfigurationError("Config must define 'inputs' and 'outputs'")

        weights = record.get("weights")
        return cls(
            inputs=tuple(VariableSpec.from_record(r) for r in record["inputs"]),
            outputs=tuple(str(o) for o in record["outputs"]),
            strict=bool(record.get("strict", True)),
            degree=record.get("degree"),
            weights=tuple(float(w) for w in weights) if weights is not None else None,
        )

    def to_record(self) -> SchemaRecord:
        record = SchemaRecord(
            inputs=[s.to_record() for s in self.inputs],
            outputs=list(self.outputs),
            strict=self.strict,
        )
        if self.degree is not None:
            record["degree"] = self.degree
        if self.weights is not None:
            record["weights"] = list(self.weights)
        return record


def load_schema(path: str | Path) -> Schema:
    """Read a JSON schema sidecar.

    Raises
    ------
    FileNotFoundError
        The config file does not exist.
    ConfigurationError
        The config is not valid JSON or misses required keys.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Config file {path} does not exist")

    try:
        record = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Config file {path} is not valid JSON: {e}") from e

    return Schema.from_record(record)


@dataclass(frozen=True)
class Dataset:
    """Inputs and outputs of ``n`` runs.

    Parameters
    ----------
    inputs: np.ndarray
        ``n x d`` input matrix, physical units unless ``coded`` is set.
    outputs: np.ndarray
        ``n x m`` response matrix.
    input_specs: tuple[VariableSpec, ...]
        The physical range of every input.
    output_names: tuple[str, ...]
        One name per response column.
    coded: bool
        Whether ``inputs`` are on the coded ``[-1, 1]`` scale.
    strict: bool
        When ``False`` out of range rows only log a warning.
    """

    inputs: np.ndarray
    outputs: np.ndarray
    input_specs: tuple[VariableSpec, ...]
    output_names: tuple[str, ...]
    coded: bool = False
    strict: bool = field(default=True, compare=False)

    def __post_init__(self):
        inputs = _frozen(self.inputs)
        outputs = _frozen(self.outputs)
        if inputs.ndim == 1:
            inputs = _frozen(inputs.reshape(-1, 1))
        if outputs.ndim == 1:
            outputs = _frozen(outputs.reshape(-1, 1))

        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "input_specs", tuple(self.input_specs))
        object.__setattr__(self, "output_names", tuple(self.output_names))

        n, d = inputs.shape
        if n < 1 or outputs.shape[0] < 1:
            raise EmptyDataset
        if outputs.shape[0] != n:
            raise DimensionMismatch(f"{n} output rows", f"{outputs.shape[0]} output rows")
        if len(self.input_specs) != d or d < 1:
            raise DimensionMismatch(f"{d} input specs", f"{len(self.input_specs)}")
        if len(self.output_names) != outputs.shape[1] or outputs.shape[1] < 1:
            raise DimensionMismatch(
                f"{outputs.shape[1]} output names", f"{len(self.output_names)}"
            )
        if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(outputs))):
            raise ConfigurationError("Dataset entries must all be finite")

        _check_unique([s.name for s in self.input_specs], "input")
        _check_unique(self.output_names, "output")
        self._validate_ranges()

    def _validate_ranges(self) -> None:
        if self.coded:
            lower = -np.ones(self.d)
            upper = np.ones(self.d)
        else:
            lower = np.array([s.lower for s in self.input_specs])
            upper = np.array([s.upper for s in self.input_specs])

        # Rounding slack for values produced by the affine maps
        slack = _RANGE_SLACK * (upper - lower)
        lower, upper = lower - slack, upper + slack

        outside = (self.inputs < lower) | (self.inputs > upper)
        if not outside.any():
            return

        row, col = (int(v) for v in np.argwhere(outside)[0])
        error = OutOfRange(row + 1, self.input_specs[col].name, float(self.inputs[row, col]))
        if self.strict:
            raise error

        log.warning(
            "%s (%s rows outside the box in total)",
            error.message,
            int(outside.any(axis=1).sum()),
        )

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    @property
    def m(self) -> int:
        return self.outputs.shape[1]

    @property
    def input_names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.input_specs)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.inputs, columns=list(self.input_names))
        for j, name in enumerate(self.output_names):
            frame[name] = self.outputs[:, j]
        return frame


@dataclass(frozen=True)
class ScaledDomain:
    """The box ``X`` with the affine map between physical and coded units."""

    specs: tuple[VariableSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        if not self.specs:
            raise ConfigurationError("A domain needs at least one variable")

    @property
    def d(self) -> int:
        return len(self.specs)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.specs)

    @property
    def lower(self) -> np.ndarray:
        return np.array([s.lower for s in self.specs])

    @property
    def upper(self) -> np.ndarray:
        return np.array([s.upper for s in self.specs])

    @property
    def center(self) -> np.ndarray:
        return np.array([s.center for s in self.specs])

    @property
    def half_width(self) -> np.ndarray:
        return np.array([s.half_width for s in self.specs])

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise DimensionMismatch(f"last axis of length {self.d}", x.shape)
        return x

    def encode(self, x) -> np.ndarray:
        """Physical to coded units, works on a vector or a stack of rows."""
        x = self._check(x)
        return (x - self.center) / self.half_width

    def decode(self, x_coded) -> np.ndarray:
        """Coded to physical units, works on a vector or a stack of rows."""
        x_coded = self._check(x_coded)
        return self.center + self.half_width * x_coded

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ConfigurationError(f"Unknown input variable {name!r}") from None


def load_csv(path: str | Path, schema: Schema) -> Dataset:
    """Load a run table from a CSV file.

    Parameters
    ----------
    path: str | Path
        A UTF-8, comma separated file with a single header row.
    schema: Schema
        Assigns columns to inputs and outputs.

    Returns
    -------
    Dataset
        Rows in file order, physical units.

    Raises
    ------
    FileNotFoundError
        The file does not exist.
    DuplicateColumn
        The header repeats a column name.
    MalformedCell
        A used cell is not a finite real number, names the row and column.
    EmptyDataset
        No data rows.
    RaggedRow
        A row has more or fewer fields than the header.
    DatasetError
        The file is not valid UTF-8.
    OutOfRange
        Strict mode is on and an input lies outside its range.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Dataset file {path} does not exist")

    try:
        # No header row here so the first line fixes the field count
        # and longer rows fail instead of shifting into an index
        table = pd.read_csv(
            path,
            header=None,
            index_col=False,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError:
        raise EmptyDataset from None
    except pd.errors.ParserError as e:
        match = _PARSER_LINE.search(str(e))
        raise RaggedRow(int(match.group(1)) if match else None, str(e)) from None
    except UnicodeDecodeError as e:
        raise DatasetError(f"Dataset file {path} is not valid UTF-8: {e}") from None

    columns = [str(c).strip() for c in table.iloc[0].tolist()]
    seen = set()
    for column in columns:
        if column in seen:
            raise DuplicateColumn(column)
        seen.add(column)

    wanted = [s.name for s in schema.inputs] + list(schema.outputs)
    missing = [c for c in wanted if c not in seen]
    if missing:
        raise ConfigurationError(f"Columns {missing} not found in {path}")

    raw = table.iloc[1:].reset_index(drop=True)
    raw.columns = columns
    if raw.empty:
        raise EmptyDataset

    # Only padding produces NaN since empty cells stay ""
    short = raw.isna().any(axis=1).to_numpy()
    if short.any():
        row = int(np.flatnonzero(short)[0])
        # Data row r sits on file line r + 1 when no blank lines intervene
        raise RaggedRow(
            row + 2,
            f"data row {row + 1} has fewer than {len(columns)} fields",
        )

    values = np.empty((len(raw), len(wanted)))
    for j, column in enumerate(wanted):
        cells = raw[column].str.strip()
        parsed = pd.to_numeric(cells, errors="coerce").to_numpy(dtype=float)
        bad = ~np.isfinite(parsed)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise MalformedCell(row + 1, column, raw[column].iloc[row])
        values[:, j] = parsed

    d = len(schema.inputs)
    dataset = Dataset(
        inputs=values[:, :d],
        outputs=values[:, d:],
        input_specs=schema.inputs,
        output_names=schema.outputs,
        strict=schema.strict,
    )
    log.info(
        "Loaded %s rows with %s inputs and %s outputs from %s",
        dataset.n,
        dataset.d,
        dataset.m,
        path,
    )
    return dataset


def write_csv(dataset: Dataset, path: str | Path) -> Path:
    """Write a dataset in the format ``load_csv`` reads."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dataset.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    return path


def to_coded(dataset: Dataset) -> tuple[Dataset, ScaledDomain]:
    """Map every input dimension so its range becomes ``[-1, 1]``.

    Outputs are untouched.
    """
    if dataset.coded:
        return dataset, ScaledDomain(dataset.input_specs)

    domain = ScaledDomain(dataset.input_specs)
    coded = Dataset(
        inputs=domain.encode(dataset.inputs),
        outputs=dataset.outputs,
        input_specs=dataset.input_specs,
        output_names=dataset.output_names,
        coded=True,
        strict=dataset.strict,
    )
    return coded, domain


def from_coded(x_coded, domain: ScaledDomain) -> np.ndarray:
    """Exact inverse of ``to_coded`` per coordinate."""
    return domain.decode(x_coded)
