"""Column-typed data model: CSV ingestion, imputation, encoding, arm splits."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaError, SingleArmError, UnimputableError, ValidationError

KINDS = ("continuous", "categorical", "treatment", "outcome")


@dataclass(frozen=True)
class ColumnSchema:
    """Declared role of one column.

    Parameters
    ----------
    name : str
        Column name as it appears in the CSV header.
    kind : str
        One of ``continuous``, ``categorical``, ``treatment``, ``outcome``.
    """

    name: str
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise SchemaError(f"unknown column kind {self.kind!r} for {self.name!r}")


def _check_schema(columns: list[ColumnSchema]) -> None:
    names = [c.name for c in columns]
    if len(set(names)) != len(names):
        raise SchemaError("duplicate column names in schema")
    n_treat = sum(c.kind == "treatment" for c in columns)
    n_out = sum(c.kind == "outcome" for c in columns)
    if n_treat != 1 or n_out != 1:
        raise SchemaError(
            f"schema needs exactly one treatment and one outcome column, "
            f"got {n_treat} and {n_out}"
        )


class Dataset:
    """Immutable column store with explicit per-cell missingness.

    Continuous, treatment and outcome columns are float64 arrays; categorical
    columns are object arrays of labels. Treatment and outcome cells can never
    be missing. All arrays are read-only.
    """

    def __init__(
        self,
        columns: list[ColumnSchema],
        values: dict[str, np.ndarray],
        missing: dict[str, np.ndarray] | None = None,
    ) -> None:
        _check_schema(columns)
        if set(values) != {c.name for c in columns}:
            raise SchemaError("values do not cover exactly the schema columns")
        self.columns = list(columns)
        lengths = {len(v) for v in values.values()}
        if len(lengths) != 1:
            raise SchemaError("columns have unequal lengths")
        self.n_rows = lengths.pop()

        self._values: dict[str, np.ndarray] = {}
        self._missing: dict[str, np.ndarray] = {}
        for col in self.columns:
            raw = values[col.name]
            if col.kind == "categorical":
                arr = np.asarray(raw, dtype=object)
            else:
                arr = np.asarray(raw, dtype=float)
            mask = (
                np.zeros(self.n_rows, dtype=bool)
                if missing is None or col.name not in missing
                else np.asarray(missing[col.name], dtype=bool).copy()
            )
            if col.kind in ("treatment", "outcome") and mask.any():
                raise ValidationError(f"missing values in {col.kind} column {col.name!r}")
            if col.kind == "treatment":
                observed = arr[~np.isnan(arr)] if arr.dtype.kind == "f" else arr
                if not np.isin(observed, (0.0, 1.0)).all():
                    raise ValidationError(
                        f"treatment column {col.name!r} contains values outside {{0, 1}}"
                    )
            arr = arr.copy()
            arr.flags.writeable = False
            mask.flags.writeable = False
            self._values[col.name] = arr
            self._missing[col.name] = mask

    # -- accessors ---------------------------------------------------------

    def column(self, name: str) -> np.ndarray:
        return self._values[name]

    def missing(self, name: str) -> np.ndarray:
        return self._missing[name]

    def schema_for(self, name: str) -> ColumnSchema:
        for col in self.columns:
            if col.name == name:
                return col
        raise KeyError(name)

    @property
    def treatment_name(self) -> str:
        return next(c.name for c in self.columns if c.kind == "treatment")

    @property
    def outcome_name(self) -> str:
        return next(c.name for c in self.columns if c.kind == "outcome")

    @property
    def covariate_names(self) -> list[str]:
        return [c.name for c in self.columns if c.kind in ("continuous", "categorical")]

    @property
    def has_missing(self) -> bool:
        return any(m.any() for m in self._missing.values())

    def subset(self, rows: np.ndarray) -> "Dataset":
        """New Dataset restricted to ``rows`` (repeats allowed)."""
        rows = np.asarray(rows, dtype=int)
        return Dataset(
            self.columns,
            {name: arr[rows] for name, arr in self._values.items()},
            {name: mask[rows] for name, mask in self._missing.items()},
        )


@dataclass(frozen=True)
class Population:
    """A set of rows of one Dataset, kept in raw (pre-encoding) values."""

    dataset: Dataset
    rows: np.ndarray

    @property
    def n(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return self.dataset.column(name)[self.rows]

    def outcomes(self) -> np.ndarray:
        return self.column(self.dataset.outcome_name)


@dataclass
class DesignMatrix:
    """Numeric matrix ready for model fitting.

    Continuous columns are z-scored with full-dataset population (1/N)
    statistics; categorical columns are expanded to one indicator per level.
    ``group_index`` maps matrix rows back to source Dataset rows.
    """

    features: np.ndarray
    feature_names: list[str]
    treatment: np.ndarray
    outcome: np.ndarray
    group_index: np.ndarray
    source: Dataset
    mean_: dict[str, float] = field(default_factory=dict)
    scale_: dict[str, float] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    def original_continuous(self, name: str) -> np.ndarray:
        """Invert the z-scoring of one continuous column."""
        j = self.feature_names.index(name)
        return self.features[:, j] * self.scale_[name] + self.mean_[name]


# -- operations -------------------------------------------------------------


def load_schema(path: str) -> list[ColumnSchema]:
    """Read a JSON object {column_name: kind} preserving file order."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise SchemaError("schema file must contain a JSON object")
    columns = [ColumnSchema(name, kind) for name, kind in raw.items()]
    _check_schema(columns)
    return columns


def load_csv(path: str, schema: list[ColumnSchema]) -> Dataset:
    """Read a CSV file into a Dataset.

    The header must contain exactly the schema's column names (any order).
    Empty cells are missing. Treatment cells must be 0 or 1 and present;
    outcome cells must be numeric and present.
    """
    _check_schema(schema)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = list(reader)

    wanted = {c.name for c in schema}
    if len(set(header)) != len(header):
        raise SchemaError("duplicate column names in CSV header")
    if set(header) != wanted:
        missing = sorted(wanted - set(header))
        extra = sorted(set(header) - wanted)
        raise SchemaError(f"header mismatch: missing {missing}, unexpected {extra}")
    pos = {name: header.index(name) for name in wanted}

    values: dict[str, np.ndarray] = {}
    missing_masks: dict[str, np.ndarray] = {}
    n = len(rows)
    for col in schema:
        cells = [row[pos[col.name]] for row in rows]
        mask = np.array([cell == "" for cell in cells], dtype=bool)
        if col.kind == "categorical":
            arr = np.array(cells, dtype=object)
        elif col.kind == "treatment":
            arr = np.zeros(n)
            for i, cell in enumerate(cells):
                if mask[i]:
                    raise ValidationError(f"row {i}: missing treatment value")
                try:
                    val = float(cell)
                except ValueError:
                    raise ValidationError(f"row {i}: treatment {cell!r} is not numeric") from None
                if val not in (0.0, 1.0):
                    raise ValidationError(f"row {i}: treatment {cell!r} is not 0 or 1")
                arr[i] = val
        else:
            arr = np.zeros(n)
            for i, cell in enumerate(cells):
                if mask[i]:
                    if col.kind == "outcome":
                        raise ValidationError(f"row {i}: missing outcome value")
                    arr[i] = np.nan
                    continue
                try:
                    arr[i] = float(cell)
                except ValueError:
                    raise ValidationError(
                        f"row {i}: column {col.name!r} value {cell!r} is not numeric"
                    ) from None
        values[col.name] = arr
        missing_masks[col.name] = mask
    return Dataset(schema, values, missing_masks)


def impute(d: Dataset) -> Dataset:
    """Fill missing cells: column mean (continuous) or mode (categorical).

    Mode ties resolve to the lexicographically smallest label. Idempotent.
    """
    values: dict[str, np.ndarray] = {}
    for col in d.columns:
        arr = d.column(col.name).copy()
        mask = d.missing(col.name)
        if mask.any():
            observed = arr[~mask]
            if len(observed) == 0:
                raise UnimputableError(f"column {col.name!r} has no observed values")
            if col.kind == "continuous":
                arr[mask] = float(observed.mean())
            else:
                labels, counts = np.unique(observed.astype(str), return_counts=True)
                arr[mask] = min(labels[counts == counts.max()].tolist())
        values[col.name] = arr
    return Dataset(d.columns, values)


def encode(d: Dataset) -> DesignMatrix:
    """Expand an imputed Dataset into a DesignMatrix."""
    if d.has_missing:
        raise ValidationError("encode requires an imputed dataset")
    blocks: list[np.ndarray] = []
    names: list[str] = []
    mean_: dict[str, float] = {}
    scale_: dict[str, float] = {}
    warnings: list[str] = []
    for col in d.columns:
        arr = d.column(col.name)
        if col.kind == "continuous":
            mu = float(arr.mean())
            sigma = float(arr.std())  # population (1/N) scale
            if sigma == 0.0:
                warnings.append(f"column {col.name!r} has zero variance; encoded as zeros")
                blocks.append(np.zeros((d.n_rows, 1)))
                mean_[col.name] = mu
                scale_[col.name] = 1.0
            else:
                blocks.append(((arr - mu) / sigma).reshape(-1, 1))
                mean_[col.name] = mu
                scale_[col.name] = sigma
            names.append(col.name)
        elif col.kind == "categorical":
            levels = sorted(set(arr.astype(str)))
            onehot = np.zeros((d.n_rows, len(levels)))
            for j, level in enumerate(levels):
                onehot[:, j] = arr.astype(str) == level
            blocks.append(onehot)
            names.extend(f"{col.name}={level}" for level in levels)
    features = np.hstack(blocks) if blocks else np.zeros((d.n_rows, 0))
    return DesignMatrix(
        features=features,
        feature_names=names,
        treatment=d.column(d.treatment_name).astype(int),
        outcome=d.column(d.outcome_name).copy(),
        group_index=np.arange(d.n_rows),
        source=d,
        mean_=mean_,
        scale_=scale_,
        warnings=warnings,
    )


def split_by_treatment(m: DesignMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Row positions of the control (0) and treated (1) arms."""
    idx0 = np.flatnonzero(m.treatment == 0)
    idx1 = np.flatnonzero(m.treatment == 1)
    if len(idx0) == 0 or len(idx1) == 0:
        raise SingleArmError("one treatment arm is empty")
    return idx0, idx1
