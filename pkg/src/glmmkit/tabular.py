"""Minimal column-oriented data layer.

CSV ingestion, column typing, missing-value handling, and the summary
statistics consumed by the design and prior machinery.  A column read from
CSV is numeric iff every non-missing cell parses as a number; otherwise it
is categorical with lexicographically sorted levels.  The missing-value
tokens are the empty string and "NA".
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError

MISSING_TOKENS = frozenset({"", "NA"})


@dataclass
class ColumnStats:
    """Sample mean, standard deviation (n-1 denominator), and variance."""

    mean: float
    sd: float
    var: float


class NumericColumn:
    """Float64 column; NaN cells are missing."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)

    @property
    def is_numeric(self):
        return True

    def missing_mask(self):
        return np.isnan(self.values)

    def take(self, idx):
        return NumericColumn(self.values[idx])

    def __len__(self):
        return self.values.shape[0]


class CategoricalColumn:
    """Integer-coded column with an ordered level list; code -1 is missing."""

    def __init__(self, codes, levels):
        self.codes = np.asarray(codes, dtype=np.int64)
        self.levels = list(levels)

    @property
    def is_numeric(self):
        return False

    def missing_mask(self):
        return self.codes < 0

    def take(self, idx):
        return CategoricalColumn(self.codes[idx], self.levels)

    def value_strings(self):
        return ["" if c < 0 else self.levels[c] for c in self.codes]

    def __len__(self):
        return self.codes.shape[0]


class DataTable:
    """Immutable-by-convention mapping of column name to typed column."""

    def __init__(self, columns, n_rows):
        for name, col in columns.items():
            if len(col) != n_rows:
                raise DataError(f"column {name!r} has {len(col)} rows, expected {n_rows}")
        self.columns = dict(columns)
        self.n_rows = n_rows

    def __contains__(self, name):
        return name in self.columns

    def __getitem__(self, name):
        try:
            return self.columns[name]
        except KeyError:
            raise DataError(f"unknown variable {name!r}") from None

    @property
    def names(self):
        return list(self.columns)

    def subset(self, mask):
        idx = np.asarray(mask)
        cols = {name: col.take(idx) for name, col in self.columns.items()}
        n = int(idx.sum()) if idx.dtype == bool else len(idx)
        return DataTable(cols, n)

    @classmethod
    def from_dict(cls, mapping):
        """Build a table from lists/arrays; numbers become numeric columns,
        anything else is stringified into a categorical column.  ``None`` and
        NaN mark missing cells."""
        columns = {}
        n_rows = None
        for name, raw in mapping.items():
            raw = list(raw) if not isinstance(raw, np.ndarray) else raw
            if n_rows is None:
                n_rows = len(raw)
            elif len(raw) != n_rows:
                raise DataError(f"column {name!r} has {len(raw)} rows, expected {n_rows}")
            columns[name] = _column_from_values(name, raw)
        if n_rows is None:
            raise DataError("empty table")
        return cls(columns, n_rows)


def _column_from_values(name, raw):
    if isinstance(raw, np.ndarray) and raw.dtype.kind in "fiu":
        return NumericColumn(raw.astype(np.float64))
    is_number = all(
        v is None or isinstance(v, (int, float, np.integer, np.floating))
        for v in raw
    )
    if is_number:
        vals = np.array([np.nan if v is None else float(v) for v in raw])
        return NumericColumn(vals)
    strings = []
    for v in raw:
        if v is None or (isinstance(v, float) and np.isnan(v)):
            strings.append(None)
        else:
            s = str(v)
            strings.append(None if s in MISSING_TOKENS else s)
    return _categorical_from_strings(strings)


def _categorical_from_strings(strings):
    observed = sorted({s for s in strings if s is not None})
    index = {lev: i for i, lev in enumerate(observed)}
    codes = np.array([-1 if s is None else index[s] for s in strings], dtype=np.int64)
    return CategoricalColumn(codes, observed)


def read_csv(path):
    """Read an RFC-4180-style CSV with a header row into a DataTable."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as handle:
            rows = list(csv.reader(handle))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: file is empty")
    header = rows[0]
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    body = [row for row in rows[1:] if row]  # blank lines are skipped
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(
                f"{path}: row {i + 2} has {len(row)} fields, expected {len(header)}"
            )
    columns = {}
    for j, name in enumerate(header):
        cells = [row[j] for row in body]
        columns[name] = _parse_cells(cells)
    return DataTable(columns, len(body))


def _parse_cells(cells):
    values = np.empty(len(cells))
    numeric = True
    for i, cell in enumerate(cells):
        if cell in MISSING_TOKENS:
            values[i] = np.nan
            continue
        try:
            values[i] = float(cell)
        except ValueError:
            numeric = False
            break
    if numeric:
        return NumericColumn(values)
    strings = [None if c in MISSING_TOKENS else c for c in cells]
    return _categorical_from_strings(strings)


def write_csv(table, path):
    """Write a DataTable back to CSV.  Numerics use shortest round-trip
    formatting, so a write/read cycle reproduces values bit-exactly."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(table.names)
        cells_by_col = []
        for name in table.names:
            col = table[name]
            if col.is_numeric:
                cells_by_col.append(
                    ["" if np.isnan(v) else repr(float(v)) for v in col.values]
                )
            else:
                cells_by_col.append(col.value_strings())
        for i in range(table.n_rows):
            writer.writerow([c[i] for c in cells_by_col])


def drop_incomplete(table, variables):
    """Remove rows with a missing value in any of ``variables``.

    Returns the filtered table together with the number of dropped rows.
    """
    keep = np.ones(table.n_rows, dtype=bool)
    for name in variables:
        keep &= ~table[name].missing_mask()
    dropped = int(table.n_rows - keep.sum())
    if keep.sum() == 0:
        raise DataError("empty dataset after dropna")
    if dropped == 0:
        return table, 0
    return table.subset(keep), dropped


def column_stats(column):
    """Mean, sd and variance of a complete numeric column (sd uses n-1)."""
    if not column.is_numeric:
        raise DataError("statistics require a numeric column")
    values = column.values if isinstance(column, NumericColumn) else np.asarray(column)
    if np.isnan(values).any():
        raise DataError("column contains missing values")
    if values.size < 2:
        raise DataError("need at least 2 observations to compute a standard deviation")
    mean = float(np.mean(values))
    var = float(np.var(values, ddof=1))
    return ColumnStats(mean=mean, sd=float(np.sqrt(var)), var=var)
