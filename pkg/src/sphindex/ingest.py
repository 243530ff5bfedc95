"""Compositional CSV ingestion.

Compositional response columns are renormalized to proportions and mapped
to the sphere by the square-root transform, so each response row has unit
norm exactly.  Continuous covariates are standardized (optionally after a
log transform) and categorical covariates are dummy-encoded against a
declared reference level.  The fitted transform is kept so new data can
be encoded with the training statistics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DataError, NegativeComposition, UnknownColumn, ZeroRowSum
from .params import Dataset


@dataclass(frozen=True)
class IngestSpec:
    """Declarative column mapping for a compositional regression CSV."""

    response_columns: tuple
    continuous: tuple = ()
    log_columns: tuple = ()
    categorical: tuple = ()  # entries "column:reference_level"

    def __post_init__(self):
        if len(self.response_columns) < 3:
            raise DataError("need at least 3 response columns for S^{d-1}, d >= 3")
        unknown_logs = set(self.log_columns) - set(self.continuous)
        if unknown_logs:
            raise DataError(
                f"log_columns not declared as continuous: {sorted(unknown_logs)}")
        for entry in self.categorical:
            if ":" not in entry:
                raise DataError(
                    f"categorical entry {entry!r} must look like 'column:reference'")


@dataclass(frozen=True)
class ColumnTransform:
    """Fitted covariate encoding, reusable on new data."""

    continuous: tuple
    log_columns: tuple
    means: np.ndarray
    sds: np.ndarray
    categorical: tuple        # ((column, reference, (level, ...)), ...)
    feature_names: tuple

    def apply(self, rows: list[dict], where: str = "data") -> np.ndarray:
        """Encode covariate columns of parsed CSV rows."""
        n = len(rows)
        cols = []
        for j, name in enumerate(self.continuous):
            vals = np.array([_parse_float(r, name, i) for i, r in enumerate(rows)])
            if name in self.log_columns:
                if (vals <= 0).any():
                    bad = int(np.flatnonzero(vals <= 0)[0])
                    raise DataError(
                        f"{where} row {bad}: column {name!r} must be positive "
                        "for the log transform")
                vals = np.log(vals)
            cols.append((vals - self.means[j]) / self.sds[j])
        for col, ref, levels in self.categorical:
            seen = [_parse_str(r, col, i) for i, r in enumerate(rows)]
            known = set(levels) | {ref}
            for i, v in enumerate(seen):
                if v not in known:
                    raise DataError(
                        f"{where} row {i}: unseen level {v!r} in column {col!r}")
            for level in levels:
                cols.append(np.array([1.0 if v == level else 0.0 for v in seen]))
        if not cols:
            raise DataError("no covariate columns declared")
        return np.column_stack(cols)


def _parse_float(row: dict, name: str, index: int) -> float:
    if name not in row or row[name] is None:
        raise UnknownColumn(f"row {index}: missing column {name!r}")
    try:
        return float(row[name])
    except ValueError as err:
        raise DataError(
            f"row {index}: cannot parse {row[name]!r} in column {name!r}") from err


def _parse_str(row: dict, name: str, index: int) -> str:
    if name not in row or row[name] is None:
        raise UnknownColumn(f"row {index}: missing column {name!r}")
    return row[name].strip()


def read_csv_rows(path) -> list[dict]:
    """Read a UTF-8 CSV with a header row into dictionaries."""
    path = Path(path)
    try:
        with path.open("r", newline="", encoding="utf-8") as handle:
            return list(csv.DictReader(handle))
    except OSError as err:
        raise DataError(f"cannot read {path}: {err}") from err


def ingest_composition_csv(path, spec: IngestSpec) -> tuple[Dataset, ColumnTransform]:
    """Build a Dataset from a compositional CSV.

    Responses are square roots of row-renormalized proportions; covariates
    are encoded per the spec with training-sample statistics.
    """
    rows = read_csv_rows(path)
    if not rows:
        raise DataError(f"{path}: no data rows")
    header = set(rows[0].keys())
    declared = set(spec.response_columns) | set(spec.continuous) | {
        entry.split(":", 1)[0] for entry in spec.categorical}
    missing = declared - header
    if missing:
        raise UnknownColumn(f"columns not in file: {sorted(missing)}")

    n = len(rows)
    comp = np.empty((n, len(spec.response_columns)))
    for i, row in enumerate(rows):
        for j, name in enumerate(spec.response_columns):
            comp[i, j] = _parse_float(row, name, i)
        if (comp[i] < 0).any():
            bad = spec.response_columns[int(np.flatnonzero(comp[i] < 0)[0])]
            raise NegativeComposition(f"row {i}: negative entry in column {bad!r}")
        total = comp[i].sum()
        if total <= 0:
            raise ZeroRowSum(f"row {i}: response columns sum to zero")
        comp[i] /= total
    Y = np.sqrt(comp)

    means = []
    sds = []
    for name in spec.continuous:
        vals = np.array([_parse_float(r, name, i) for i, r in enumerate(rows)])
        if name in spec.log_columns:
            if (vals <= 0).any():
                bad = int(np.flatnonzero(vals <= 0)[0])
                raise DataError(
                    f"row {bad}: column {name!r} must be positive for the "
                    "log transform")
            vals = np.log(vals)
        mean = float(vals.mean())
        sd = float(vals.std(ddof=0))
        if sd <= 0:
            raise DataError(f"column {name!r} is constant; cannot standardize")
        means.append(mean)
        sds.append(sd)

    categorical = []
    feature_names = list(spec.continuous)
    for entry in spec.categorical:
        col, _, ref = entry.partition(":")
        col = col.strip()
        ref = ref.strip()
        seen = sorted({_parse_str(r, col, i) for i, r in enumerate(rows)})
        if ref not in seen:
            raise DataError(
                f"reference level {ref!r} not present in column {col!r}")
        levels = tuple(lv for lv in seen if lv != ref)
        categorical.append((col, ref, levels))
        feature_names.extend(f"{col}={lv}" for lv in levels)

    transform = ColumnTransform(
        continuous=tuple(spec.continuous), log_columns=tuple(spec.log_columns),
        means=np.asarray(means), sds=np.asarray(sds),
        categorical=tuple(categorical), feature_names=tuple(feature_names))
    X = transform.apply(rows, where="training")
    return Dataset(X, Y), transform
