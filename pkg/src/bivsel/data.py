"""Core data model: typed data matrix with missingness masks, derived-column
transforms, reproducible RNG streams, and CSV round-trip I/O.

Conventions used throughout the package:

* predictors live in an (n, K) float64 matrix; binary columns hold 0/1
* a True mask entry means "missing"; masked cells carry NaN in the values
* the outcome is a separate binary vector with its own mask
* missing cells in CSV files are written as a token (default ``"NA"``),
  decimal separator is always ``.``
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ParseError, SchemaError, TransformError

_MASK64 = (1 << 64) - 1


def _mix64(a: int, b: int) -> int:
    # splitmix64 finalizer over a combined word; collisions between distinct
    # (a, b) pairs are as unlikely as 64-bit hash collisions
    x = (a * 0x9E3779B97F4A7C15 + b + 0x632BE59BD9B4E019) & _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x


@dataclass(frozen=True)
class RngHandle:
    """Reproducible, splittable random stream identified by (seed, stream).

    The same handle always yields the same sequence, two handles with
    different stream ids are statistically independent, and results never
    depend on which thread or process consumes the stream.
    """

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if not 0 <= self.stream <= _MASK64:
            raise ValueError("stream must fit in 64 unsigned bits")

    def split(self, index: int) -> "RngHandle":
        """Derive the child stream for a replicate / tree / fold index."""
        return RngHandle(self.seed, _mix64(self.stream, index))

    def generator(self) -> np.random.Generator:
        """Counter-based generator bound to this (seed, stream)."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.Philox(ss))

    def bits64(self) -> int:
        """Stable 64-bit word for seeding compiled kernels."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return int(ss.generate_state(1, np.uint64)[0])


class ColumnKind(Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


def _check_binary(values, mask, label):
    obs = values[~mask]
    if obs.size and not np.isin(obs, (0.0, 1.0)).all():
        raise SchemaError(f"binary column {label!r} contains values other than 0/1")


class DataMatrix:
    """Immutable (n, K) predictor matrix plus binary outcome, with masks.

    Parameters
    ----------
    names : sequence of str
        Predictor column names, unique, in storage order.
    kinds : sequence of ColumnKind
        Per-predictor kind, aligned with ``names``.
    x : ndarray of shape (n, K)
        Predictor values; entries under ``x_mask`` are ignored and stored
        as NaN.
    y : ndarray of shape (n,)
        Binary outcome; entries under ``y_mask`` stored as NaN.
    x_mask, y_mask : bool ndarrays, optional
        True marks a missing cell. Default all-observed.
    outcome : str
        Name of the outcome column for CSV I/O. Must not collide with
        predictor names.
    """

    __slots__ = ("names", "kinds", "x", "x_mask", "y", "y_mask", "outcome", "_index")

    def __init__(self, names, kinds, x, y, x_mask=None, y_mask=None, outcome="y"):
        names = tuple(str(s) for s in names)
        kinds = tuple(kinds)
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if x.ndim != 2:
            raise SchemaError("x must be 2-dimensional")
        n, k = x.shape
        if n < 1 or k < 1:
            raise SchemaError("need at least one row and one predictor")
        if len(names) != k or len(kinds) != k:
            raise SchemaError("names/kinds do not match the number of columns")
        if len(set(names)) != k:
            raise SchemaError("duplicate predictor names")
        if outcome in names:
            raise SchemaError(f"outcome name {outcome!r} collides with a predictor")
        if y.shape != (n,):
            raise SchemaError("y must have one entry per row")
        x_mask = (
            np.zeros((n, k), dtype=bool)
            if x_mask is None
            else np.array(x_mask, dtype=bool)
        )
        y_mask = (
            np.zeros(n, dtype=bool) if y_mask is None else np.array(y_mask, dtype=bool)
        )
        if x_mask.shape != (n, k) or y_mask.shape != (n,):
            raise SchemaError("mask shapes do not match the data")
        x = np.where(x_mask, np.nan, x)
        y = np.where(y_mask, np.nan, y)
        if np.isnan(x[~x_mask]).any() or np.isnan(y[~y_mask]).any():
            raise SchemaError("NaN in an unmasked cell; mark it missing instead")
        for j, (name, kind) in enumerate(zip(names, kinds)):
            if kind is ColumnKind.BINARY:
                _check_binary(x[:, j], x_mask[:, j], name)
        _check_binary(y, y_mask, outcome)
        for arr in (x, y, x_mask, y_mask):
            arr.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "kinds", kinds)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "x_mask", x_mask)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "y_mask", y_mask)
        object.__setattr__(self, "outcome", outcome)
        object.__setattr__(self, "_index", {s: j for j, s in enumerate(names)})

    def __setattr__(self, name, value):
        raise AttributeError("DataMatrix is immutable")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    def col_index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SchemaError(f"unknown column {name!r}") from None

    def col(self, name: str) -> np.ndarray:
        return self.x[:, self.col_index(name)]

    def kind(self, name: str) -> ColumnKind:
        return self.kinds[self.col_index(name)]

    def is_complete(self) -> bool:
        return not (self.x_mask.any() or self.y_mask.any())

    def complete_row_mask(self) -> np.ndarray:
        """True for rows with no missing predictor or outcome cell."""
        return ~(self.x_mask.any(axis=1) | self.y_mask)

    def take(self, rows) -> "DataMatrix":
        """Row subset / resample; masks travel with their rows."""
        rows = np.asarray(rows)
        return DataMatrix(
            self.names,
            self.kinds,
            self.x[rows],
            self.y[rows],
            self.x_mask[rows],
            self.y_mask[rows],
            self.outcome,
        )

    def take_columns(self, names) -> "DataMatrix":
        """Predictor subset by name, preserving storage order of ``names``."""
        cols = [self.col_index(s) for s in names]
        return DataMatrix(
            [self.names[j] for j in cols],
            [self.kinds[j] for j in cols],
            self.x[:, cols],
            self.y,
            self.x_mask[:, cols],
            self.y_mask,
            self.outcome,
        )

    def with_values(self, x, y, x_mask=None, y_mask=None) -> "DataMatrix":
        """Same schema, new cells (used by amputation and imputation)."""
        return DataMatrix(self.names, self.kinds, x, y, x_mask, y_mask, self.outcome)

    def __eq__(self, other):
        if not isinstance(other, DataMatrix):
            return NotImplemented
        return (
            self.names == other.names
            and self.kinds == other.kinds
            and self.outcome == other.outcome
            and np.array_equal(self.x, other.x, equal_nan=True)
            and np.array_equal(self.y, other.y, equal_nan=True)
            and np.array_equal(self.x_mask, other.x_mask)
            and np.array_equal(self.y_mask, other.y_mask)
        )

    def __repr__(self):
        miss = int(self.x_mask.sum() + self.y_mask.sum())
        return f"DataMatrix(n={self.n}, k={self.k}, missing_cells={miss})"


_TRANSFORM_OPS = ("square", "cube", "exp", "product")


@dataclass(frozen=True)
class DerivedColumn:
    """One derived predictor: square/cube/exp of a column, or a pairwise product."""

    name: str
    op: str
    inputs: tuple[str, ...]

    def __post_init__(self):
        if self.op not in _TRANSFORM_OPS:
            raise TransformError(f"unknown transform op {self.op!r}")
        need = 2 if self.op == "product" else 1
        if len(self.inputs) != need:
            raise TransformError(f"{self.op} takes {need} input(s), got {self.inputs}")
        object.__setattr__(self, "inputs", tuple(self.inputs))


@dataclass(frozen=True)
class TransformSpec:
    """Ordered list of derived columns computed from base predictors.

    A derived cell is missing whenever any of its inputs is missing.
    """

    derived: tuple[DerivedColumn, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "derived", tuple(self.derived))
        seen = set()
        for dc in self.derived:
            if dc.name in seen:
                raise TransformError(f"duplicate derived name {dc.name!r}")
            seen.add(dc.name)

    def names(self) -> tuple[str, ...]:
        return tuple(dc.name for dc in self.derived)

    def evaluate(self, d: DataMatrix):
        """Compute derived values on ``d``.

        Returns
        -------
        q : ndarray (n, m)
            Derived values, NaN where masked.
        q_mask : ndarray (n, m) of bool
            OR of the input masks.
        """
        n, m = d.n, len(self.derived)
        q = np.empty((n, m))
        q_mask = np.zeros((n, m), dtype=bool)
        for j, dc in enumerate(self.derived):
            for s in dc.inputs:
                if s not in d._index:
                    raise TransformError(
                        f"derived column {dc.name!r} references unknown column {s!r}"
                    )
            cols = [d.col(s) for s in dc.inputs]
            mask = np.zeros(n, dtype=bool)
            for s in dc.inputs:
                mask |= d.x_mask[:, d.col_index(s)]
            with np.errstate(over="ignore", invalid="ignore"):
                if dc.op == "square":
                    vals = cols[0] ** 2
                elif dc.op == "cube":
                    vals = cols[0] ** 3
                elif dc.op == "exp":
                    vals = np.exp(cols[0])
                else:
                    vals = cols[0] * cols[1]
            q[:, j] = np.where(mask, np.nan, vals)
            q_mask[:, j] = mask
        return q, q_mask

    def depends_on(self, name: str) -> tuple[str, ...]:
        """Names of derived columns that take ``name`` as an input."""
        return tuple(dc.name for dc in self.derived if name in dc.inputs)


def apply_transforms(d: DataMatrix, t: TransformSpec) -> DataMatrix:
    """Append the derived columns of ``t`` to ``d`` as continuous predictors."""
    q, q_mask = t.evaluate(d)
    for name in t.names():
        if name in d._index:
            raise TransformError(f"derived name {name!r} clashes with a base column")
    return DataMatrix(
        d.names + t.names(),
        d.kinds + (ColumnKind.CONTINUOUS,) * len(t.derived),
        np.hstack([d.x, q]),
        d.y,
        np.hstack([d.x_mask, q_mask]),
        d.y_mask,
        d.outcome,
    )


def _format_cell(value, masked, kind, missing_token):
    if masked:
        return missing_token
    if kind is ColumnKind.BINARY:
        return str(int(value))
    return repr(float(value))


def save_csv(d: DataMatrix, path, missing_token: str = "NA") -> None:
    """Write ``d`` with a header row; masked cells become ``missing_token``.

    Floats are written with shortest round-trip formatting so that
    ``load_csv(save_csv(d)) == d`` bit for bit.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(d.names) + [d.outcome])
        for i in range(d.n):
            row = [
                _format_cell(d.x[i, j], d.x_mask[i, j], d.kinds[j], missing_token)
                for j in range(d.k)
            ]
            row.append(
                _format_cell(d.y[i], d.y_mask[i], ColumnKind.BINARY, missing_token)
            )
            writer.writerow(row)


def load_csv(path, kinds=None, outcome: str = "y", missing_token: str = "NA"):
    """Read a CSV written by :func:`save_csv` (or compatible).

    Parameters
    ----------
    path : str or Path
    kinds : mapping name -> ColumnKind, optional
        Kind per predictor column. Columns not listed (or all columns when
        omitted) are inferred: observed values within {0, 1} make a column
        binary, anything else continuous.
    outcome : str
        Header name of the outcome column.
    missing_token : str
        Cell content marking a missing value.

    Raises
    ------
    ParseError
        Ragged rows, non-numeric cells, missing outcome column, empty file.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if outcome not in header:
            raise ParseError(f"{path}: no outcome column {outcome!r} in header")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}"
                )
            rows.append(row)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    n = len(rows)
    values = np.empty((n, len(header)))
    mask = np.zeros((n, len(header)), dtype=bool)
    for i, row in enumerate(rows):
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == missing_token:
                mask[i, j] = True
                values[i, j] = np.nan
                continue
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}:{i + 2}: column {header[j]!r}: bad number {cell!r}"
                ) from None
    y_at = header.index(outcome)
    pred_idx = [j for j in range(len(header)) if j != y_at]
    names = [header[j] for j in pred_idx]
    resolved = []
    for j, name in zip(pred_idx, names):
        if kinds is not None and name in kinds:
            resolved.append(kinds[name])
        else:
            obs = values[~mask[:, j], j]
            is_binary = obs.size > 0 and np.isin(obs, (0.0, 1.0)).all()
            resolved.append(ColumnKind.BINARY if is_binary else ColumnKind.CONTINUOUS)
    return DataMatrix(
        names,
        resolved,
        values[:, pred_idx],
        values[:, y_at],
        mask[:, pred_idx],
        mask[:, y_at],
        outcome,
    )
