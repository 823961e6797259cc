"""Counterfactual benchmark tables: CSV ingestion, ground truth, noise plug-in.

A table carries both potential outcomes per unit (factual arm plus the
counterfactual one), so the true average treatment effect is computable
exactly and a sequential experiment can query the outcome of whichever arm
it picks.

Column layouts vary between circulating benchmark files, so the mapping from
columns to roles is explicit: a named builtin, a mapping with column names
(header files) or zero-based indices (headerless files), with ``covariates``
either a list or ``"rest"`` for every column not claimed by another role.
The ``ihdp`` builtin matches the common public IHDP CSV layout: columns
0/1/2 are treatment and the two outcomes, 3/4 the noiseless potential
outcomes (ignored), 5 onward the 25 covariates, no header.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import BookkeepingError, EstimationError, ParameterError, ParseError, SchemaError

logger = logging.getLogger(__name__)

REST = "rest"
_ROLES = ("treatment", "y_factual", "y_counterfactual")
_OPTIONAL_ROLES = ("mu0", "mu1")


@dataclass(frozen=True)
class ColumnSchema:
    """Maps file columns to roles, by header name (str) or position (int)."""

    treatment: int | str
    y_factual: int | str
    y_counterfactual: int | str
    covariates: tuple[int | str, ...] | str = REST
    header: bool = True
    ignored: tuple[int | str, ...] = ()

    def claimed(self) -> list[int | str]:
        cols = [self.treatment, self.y_factual, self.y_counterfactual, *self.ignored]
        if self.covariates != REST:
            cols.extend(self.covariates)
        return cols


BUILTIN_SCHEMAS: dict[str, ColumnSchema] = {
    "ihdp": ColumnSchema(
        treatment=0,
        y_factual=1,
        y_counterfactual=2,
        covariates=tuple(range(5, 30)),
        header=False,
        ignored=(3, 4),
    ),
    "basic": ColumnSchema(
        treatment="treatment",
        y_factual="y_factual",
        y_counterfactual="y_counterfactual",
        covariates=REST,
        header=True,
    ),
}


def resolve_schema(spec) -> ColumnSchema:
    """Accept a builtin name, a role mapping, or a ready ColumnSchema."""
    if isinstance(spec, ColumnSchema):
        return spec
    if isinstance(spec, str):
        try:
            return BUILTIN_SCHEMAS[spec]
        except KeyError:
            raise SchemaError(
                f"unknown schema {spec!r}; builtins are {sorted(BUILTIN_SCHEMAS)}"
            ) from None
    if isinstance(spec, Mapping):
        known = {*_ROLES, *_OPTIONAL_ROLES, "covariates", "header"}
        unknown = sorted(set(spec) - known)
        if unknown:
            raise SchemaError(f"unknown schema keys: {unknown}")
        missing = [r for r in _ROLES if r not in spec]
        if missing:
            raise SchemaError(f"schema is missing roles: {missing}")
        cov = spec.get("covariates", REST)
        if cov != REST:
            if not isinstance(cov, Sequence) or isinstance(cov, (str, bytes)):
                raise SchemaError("covariates must be a list of columns or 'rest'")
            cov = tuple(cov)
        ignored = tuple(spec[r] for r in _OPTIONAL_ROLES if r in spec)
        return ColumnSchema(
            treatment=spec["treatment"],
            y_factual=spec["y_factual"],
            y_counterfactual=spec["y_counterfactual"],
            covariates=cov,
            header=bool(spec.get("header", True)),
            ignored=ignored,
        )
    raise SchemaError(f"cannot interpret schema spec of type {type(spec).__name__}")


@dataclass(frozen=True)
class CounterfactualTable:
    """Column arrays of a counterfactual benchmark; rows are ids 0..n-1."""

    t_factual: np.ndarray
    y_factual: np.ndarray
    y_counterfactual: np.ndarray
    X: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.t_factual, dtype=int)
        yf = np.asarray(self.y_factual, dtype=float)
        ycf = np.asarray(self.y_counterfactual, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if not (t.shape[0] == yf.shape[0] == ycf.shape[0] == X.shape[0]):
            raise ParameterError("table columns have mismatched lengths")
        if X.ndim != 2:
            raise ParameterError(f"covariates must be 2-d, got shape {X.shape}")
        if t.size and not np.isin(t, (0, 1)).all():
            raise ParameterError("factual treatments must all be 0 or 1")
        object.__setattr__(self, "t_factual", t)
        object.__setattr__(self, "y_factual", yf)
        object.__setattr__(self, "y_counterfactual", ycf)
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.t_factual.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def _column_index(col: int | str, names: list[str] | None, path: str) -> int:
    if isinstance(col, str):
        if names is None:
            raise SchemaError(f"{path}: schema names column {col!r} but the file has no header")
        try:
            return names.index(col)
        except ValueError:
            raise SchemaError(f"{path}: column {col!r} not found in header {names}") from None
    return int(col)


def load_table(path: str, schema="basic") -> CounterfactualTable:
    """Parse a counterfactual CSV under an explicit column mapping.

    Ragged or non-numeric rows raise ``ParseError`` naming the line; a file
    without usable rows or columns raises ``SchemaError``.
    """
    schema = resolve_schema(schema)
    with open(path, newline="") as fh:
        raw = [(lineno, row) for lineno, row in enumerate(csv.reader(fh), start=1) if row]
    if not raw:
        raise SchemaError(f"{path}: file has no rows")
    names: list[str] | None = None
    if schema.header:
        names = [cell.strip() for cell in raw[0][1]]
        raw = raw[1:]
        if not raw:
            raise SchemaError(f"{path}: file has a header but no data rows")
    width = len(names) if names is not None else len(raw[0][1])

    t_col = _column_index(schema.treatment, names, path)
    yf_col = _column_index(schema.y_factual, names, path)
    ycf_col = _column_index(schema.y_counterfactual, names, path)
    claimed = {t_col, yf_col, ycf_col}
    claimed.update(_column_index(c, names, path) for c in schema.ignored)
    if schema.covariates == REST:
        x_cols = [i for i in range(width) if i not in claimed]
    else:
        x_cols = [_column_index(c, names, path) for c in schema.covariates]
    if not x_cols:
        raise SchemaError(f"{path}: schema leaves no covariate columns")
    needed = max([t_col, yf_col, ycf_col, *x_cols])
    if needed >= width:
        raise SchemaError(f"{path}: schema needs column {needed}, file has {width}")

    def cell(row: list[str], col: int, lineno: int, role: str) -> float:
        try:
            return float(row[col])
        except ValueError:
            raise ParseError(
                f"{path}: line {lineno}, column {col} ({role}): "
                f"not a number: {row[col]!r}"
            ) from None

    t_vals, yf_vals, ycf_vals, x_rows = [], [], [], []
    for lineno, row in raw:
        if len(row) != width:
            raise ParseError(f"{path}: line {lineno}: expected {width} cells, got {len(row)}")
        t = cell(row, t_col, lineno, "treatment")
        if t not in (0.0, 1.0):
            raise ParseError(f"{path}: line {lineno}: treatment must be 0 or 1, got {t!r}")
        t_vals.append(int(t))
        yf_vals.append(cell(row, yf_col, lineno, "y_factual"))
        ycf_vals.append(cell(row, ycf_col, lineno, "y_counterfactual"))
        x_rows.append([cell(row, c, lineno, "covariate") for c in x_cols])

    table = CounterfactualTable(
        np.array(t_vals), np.array(yf_vals), np.array(ycf_vals), np.array(x_rows)
    )
    logger.info("loaded %d rows with %d covariates from %s", table.n, table.d, path)
    return table


def write_table(table: CounterfactualTable, path: str) -> None:
    """Write the canonical header layout; ``load_table(path)`` round-trips it.

    Floats are serialized with 17 significant digits, so values survive the
    trip bit-for-bit.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["treatment", "y_factual", "y_counterfactual"]
            + [f"x{i}" for i in range(table.d)]
        )
        for i in range(table.n):
            writer.writerow(
                [
                    int(table.t_factual[i]),
                    f"{table.y_factual[i]:.17g}",
                    f"{table.y_counterfactual[i]:.17g}",
                ]
                + [f"{v:.17g}" for v in table.X[i]]
            )


def true_ate(table: CounterfactualTable) -> float:
    """Mean over rows of (outcome under t=1) - (outcome under t=0)."""
    if table.n == 0:
        raise EstimationError("cannot compute an effect from an empty table")
    treated = np.where(table.t_factual == 1, table.y_factual, table.y_counterfactual)
    control = np.where(table.t_factual == 0, table.y_factual, table.y_counterfactual)
    return float(np.mean(treated - control))


def observe_factual(table: CounterfactualTable, row: int, t: float) -> float:
    """Outcome of row ``row`` under arm ``t``, factual or counterfactual."""
    if not 0 <= row < table.n:
        raise BookkeepingError(f"row {row} is outside the table (n={table.n})")
    if float(t) not in (0.0, 1.0):
        raise ParameterError(f"treatment must be 0 or 1, got {t!r}")
    if int(t) == int(table.t_factual[row]):
        return float(table.y_factual[row])
    return float(table.y_counterfactual[row])


def estimate_noise_precision(y: np.ndarray) -> float:
    """Plug-in noise precision: inverse unbiased sample variance of y."""
    y = np.asarray(y, dtype=float).ravel()
    if y.size < 2:
        raise EstimationError(f"need at least 2 observations, got {y.size}")
    var = float(np.var(y, ddof=1))
    if var <= 0.0:
        raise EstimationError("observed outcomes have zero variance")
    return 1.0 / var
