"""Tabular schema, record representation, discretization, and dataset IO.

Cells are stored raw: categorical cells as domain indices (int), numerical
cells as real values. Numerical columns are binned on demand so that
marginal queries are well-defined while grouped scaled-L1 workloads stay
exact.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import (
    EmptyFileError,
    MalformedRowError,
    MissingColumnError,
    OverflowGuardError,
    SchemaError,
    UnknownCategoricalValueError,
)

Cell = Union[int, float]
Record = tuple  # one cell per schema column

CATEGORICAL = "categorical"
NUMERICAL = "numerical"

# Default cap on the total (binned) domain product; guards the uniform-domain
# baseline and workload construction against combinatorial blowups.
DOMAIN_SIZE_CAP = 10**12


class Provenance(str, enum.Enum):
    PRIVATE = "private"
    SYNTHETIC = "synthetic"
    PUBLIC = "public"
    GENERATED = "generated"


class ClampPolicy(str, enum.Enum):
    CLAMP = "clamp"
    REJECT = "reject"


def default_clamp_policy(provenance: Provenance) -> ClampPolicy:
    """Generator output is untrusted and gets clamped; private data errors
    indicate schema mistakes and must be rejected."""
    if provenance in (Provenance.GENERATED, Provenance.PUBLIC, Provenance.SYNTHETIC):
        return ClampPolicy.CLAMP
    return ClampPolicy.REJECT


@dataclass(frozen=True)
class ColumnSpec:
    """One column: either a categorical domain or a binned numerical range."""

    name: str
    kind: str
    domain: tuple = ()
    min: float = 0.0
    max: float = 1.0
    bins: int = 1

    def __post_init__(self):
        if not self.name:
            raise SchemaError("column name must be non-empty")
        if self.kind == CATEGORICAL:
            if len(self.domain) < 2:
                raise SchemaError(f"column {self.name!r}: categorical domain needs >= 2 values")
            if len(set(self.domain)) != len(self.domain):
                raise SchemaError(f"column {self.name!r}: categorical domain values must be distinct")
        elif self.kind == NUMERICAL:
            if not (math.isfinite(self.min) and math.isfinite(self.max)):
                raise SchemaError(f"column {self.name!r}: numerical range must be finite")
            if not self.min < self.max:
                raise SchemaError(f"column {self.name!r}: requires min < max")
            if self.bins < 1:
                raise SchemaError(f"column {self.name!r}: bin_count must be >= 1")
        else:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")

    @classmethod
    def categorical(cls, name: str, domain: Sequence[str]) -> "ColumnSpec":
        return cls(name=name, kind=CATEGORICAL, domain=tuple(domain))

    @classmethod
    def numerical(cls, name: str, min: float, max: float, bins: int) -> "ColumnSpec":
        return cls(name=name, kind=NUMERICAL, min=float(min), max=float(max), bins=int(bins))

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    @property
    def size(self) -> int:
        """Binned domain size: |domain| for categorical, bin count for numerical."""
        return len(self.domain) if self.is_categorical else self.bins

    def validate_cell(self, value: Cell) -> None:
        if self.is_categorical:
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise SchemaError(f"column {self.name!r}: categorical cell must be a domain index")
            if not 0 <= value < len(self.domain):
                raise SchemaError(f"column {self.name!r}: index {value} outside domain of size {len(self.domain)}")
        else:
            if not isinstance(value, (int, float, np.floating, np.integer)) or isinstance(value, bool):
                raise SchemaError(f"column {self.name!r}: numerical cell must be a real value")
            if not (self.min <= value <= self.max):
                raise SchemaError(f"column {self.name!r}: value {value} outside [{self.min}, {self.max}]")

    def bin_edges(self, index: int) -> tuple:
        """[low, high) edges of a numerical bin (the last bin is closed)."""
        width = (self.max - self.min) / self.bins
        return (self.min + index * width, self.min + (index + 1) * width)


def bin_index(col: ColumnSpec, value: Cell) -> int:
    """Bin of a validated cell: the domain index itself for categoricals,
    floor((v - min) / width) for numericals with v == max closing the last bin."""
    if col.is_categorical:
        return int(value)
    width = (col.max - col.min) / col.bins
    idx = int(math.floor((value - col.min) / width))
    return min(max(idx, 0), col.bins - 1)


@dataclass(frozen=True)
class TableSchema:
    """Ordered column definitions. This is exactly the information that may be
    shared with a candidate generator at zero privacy cost."""

    name: str
    columns: tuple = ()

    def __post_init__(self):
        if not self.columns:
            raise SchemaError("schema needs at least one column")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("column names must be unique")

    def __len__(self) -> int:
        return len(self.columns)

    def column_index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise SchemaError(f"no column named {name!r}")

    def column_names(self) -> list:
        return [c.name for c in self.columns]

    def column_sizes(self) -> list:
        return [c.size for c in self.columns]

    def validate_record(self, record: Record) -> None:
        if len(record) != len(self.columns):
            raise SchemaError(f"record arity {len(record)} != column count {len(self.columns)}")
        for col, value in zip(self.columns, record):
            col.validate_cell(value)

    def bin_record(self, record: Record) -> tuple:
        return tuple(bin_index(col, v) for col, v in zip(self.columns, record))

    def to_dict(self) -> dict:
        cols = []
        for c in self.columns:
            if c.is_categorical:
                cols.append({"name": c.name, "kind": CATEGORICAL, "domain": list(c.domain)})
            else:
                cols.append({"name": c.name, "kind": NUMERICAL, "min": c.min, "max": c.max, "bins": c.bins})
        return {"name": self.name, "columns": cols}

    @classmethod
    def from_dict(cls, payload: dict) -> "TableSchema":
        try:
            cols = []
            for c in payload["columns"]:
                if c["kind"] == CATEGORICAL:
                    cols.append(ColumnSpec.categorical(c["name"], c["domain"]))
                elif c["kind"] == NUMERICAL:
                    cols.append(ColumnSpec.numerical(c["name"], c["min"], c["max"], c["bins"]))
                else:
                    raise SchemaError(f"unknown column kind {c['kind']!r}")
            return cls(name=payload["name"], columns=tuple(cols))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema document: {exc}") from exc

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def from_json(cls, path) -> "TableSchema":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def content_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def domain_size(schema: TableSchema, cap: int = DOMAIN_SIZE_CAP) -> tuple:
    """Per-column binned sizes and their product.

    Raises OverflowGuardError when the product exceeds *cap*.
    """
    sizes = schema.column_sizes()
    total = 1
    for s in sizes:
        total *= s
        if total > cap:
            raise OverflowGuardError(f"domain product exceeds cap {cap}")
    return sizes, total


class Dataset:
    """Immutable collection of schema-validated records.

    Rows are validated on construction; the binned integer view used by
    marginal queries is computed lazily and cached.
    """

    def __init__(self, schema: TableSchema, rows: Iterable[Record],
                 provenance: Provenance = Provenance.SYNTHETIC, validate: bool = True):
        self.schema = schema
        self.rows = tuple(tuple(r) for r in rows)
        self.provenance = Provenance(provenance)
        if validate:
            for r in self.rows:
                schema.validate_record(r)
        self._bin_matrix = None
        self._cell_matrix = None

    def __len__(self) -> int:
        return len(self.rows)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Dataset) and self.schema == other.schema
                and self.rows == other.rows and self.provenance == other.provenance)

    def bin_matrix(self) -> np.ndarray:
        """(n, d) int array of per-cell bin indices."""
        if self._bin_matrix is None:
            self._bin_matrix = bin_records(self.schema, self.rows)
        return self._bin_matrix

    def cell_matrix(self) -> np.ndarray:
        """(n, d) float array of raw cell values (categorical cells as indices)."""
        if self._cell_matrix is None:
            self._cell_matrix = np.asarray(self.rows, dtype=float).reshape(len(self.rows), len(self.schema))
        return self._cell_matrix

    def replace_rows(self, rows: Iterable[Record], provenance=None, validate: bool = True) -> "Dataset":
        return Dataset(self.schema, rows, provenance or self.provenance, validate=validate)


def bin_records(schema: TableSchema, rows: Sequence[Record]) -> np.ndarray:
    """Vectorized bin indices for a batch of validated records."""
    n = len(rows)
    out = np.empty((n, len(schema)), dtype=np.int64)
    if n == 0:
        return out
    cells = np.asarray(rows, dtype=float).reshape(n, len(schema))
    for j, col in enumerate(schema.columns):
        if col.is_categorical:
            out[:, j] = cells[:, j].astype(np.int64)
        else:
            width = (col.max - col.min) / col.bins
            idx = np.floor((cells[:, j] - col.min) / width).astype(np.int64)
            out[:, j] = np.clip(idx, 0, col.bins - 1)
    return out


def _parse_cell(col: ColumnSpec, raw: str, row_number: int, clamp_policy: ClampPolicy) -> Cell:
    if col.is_categorical:
        try:
            return col.domain.index(raw)
        except ValueError:
            raise UnknownCategoricalValueError(
                f"row {row_number}: value {raw!r} not in domain of column {col.name!r}") from None
    try:
        value = float(raw)
    except ValueError:
        raise MalformedRowError(row_number, f"column {col.name!r}: {raw!r} is not a number") from None
    if not math.isfinite(value):
        raise MalformedRowError(row_number, f"column {col.name!r}: non-finite value {raw!r}")
    if not (col.min <= value <= col.max):
        if clamp_policy is ClampPolicy.CLAMP:
            value = min(max(value, col.min), col.max)
        else:
            raise MalformedRowError(
                row_number, f"column {col.name!r}: {value} outside [{col.min}, {col.max}]")
    return value


def load_dataset(path, schema: TableSchema, clamp_policy: ClampPolicy = ClampPolicy.REJECT,
                 provenance: Provenance = Provenance.PRIVATE) -> Dataset:
    """Read a header-rowed CSV whose columns are a permutation of the schema.

    Categorical values are mapped to domain indices; numerical values outside
    the declared range are clamped or rejected per *clamp_policy*.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFileError(f"{path}: no header row") from None
        missing = set(schema.column_names()) - set(header)
        if missing:
            raise MissingColumnError(f"{path}: header missing columns {sorted(missing)}")
        positions = [header.index(name) for name in schema.column_names()]
        rows = []
        for row_number, raw in enumerate(reader, start=2):
            if len(raw) != len(header):
                raise MalformedRowError(row_number, f"expected {len(header)} fields, got {len(raw)}")
            cells = tuple(
                _parse_cell(col, raw[pos], row_number, clamp_policy)
                for col, pos in zip(schema.columns, positions)
            )
            rows.append(cells)
    if not rows:
        raise EmptyFileError(f"{path}: no data rows")
    return Dataset(schema, rows, provenance)


def record_to_dict(schema: TableSchema, record: Record) -> dict:
    """JSON-friendly record object keyed by column names."""
    out = {}
    for col, value in zip(schema.columns, record):
        out[col.name] = col.domain[int(value)] if col.is_categorical else float(value)
    return out


def record_from_dict(schema: TableSchema, obj: dict) -> Record:
    """Parse and validate a record object; raises SchemaError on any mismatch."""
    if not isinstance(obj, dict):
        raise SchemaError(f"record must be an object, got {type(obj).__name__}")
    cells = []
    for col in schema.columns:
        if col.name not in obj:
            raise SchemaError(f"record missing column {col.name!r}")
        raw = obj[col.name]
        if col.is_categorical:
            if raw not in col.domain:
                raise SchemaError(f"column {col.name!r}: {raw!r} not in domain")
            cells.append(col.domain.index(raw))
        else:
            if isinstance(raw, bool) or not isinstance(raw, (int, float)):
                raise SchemaError(f"column {col.name!r}: {raw!r} is not a number")
            value = float(raw)
            if not math.isfinite(value) or not (col.min <= value <= col.max):
                raise SchemaError(f"column {col.name!r}: {raw!r} outside [{col.min}, {col.max}]")
            cells.append(value)
    return tuple(cells)


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset back to CSV (UTF-8, header row, numerics unquoted).

    Floats are written with repr so a save/load round-trip is cell-exact.
    """
    schema = dataset.schema
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(schema.column_names())
        for record in dataset.rows:
            out = []
            for col, value in zip(schema.columns, record):
                if col.is_categorical:
                    out.append(col.domain[int(value)])
                else:
                    out.append(repr(float(value)))
            writer.writerow(out)
