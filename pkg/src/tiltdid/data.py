"""Observed-data structures, treatment mixture semantics, CSV ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllTreatedOrAllUntreated,
    InputError,
    MissingColumn,
    NonNumericValue,
    TooFewUnitsPerStratum,
    TreatmentOutOfRange,
)

REQUIRED_COLUMNS = ("y0", "y1", "a")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PanelDataset:
    """Two-period panel with a mixed treatment: a point mass at 0 plus a
    continuous dose on (0, 1].

    Exact ``a == 0.0`` encodes "untreated"; analysts must pre-code any
    background treatment level as literal zero. Immutable after
    construction, so instances are safe to share across parallel workers.
    """

    y0: np.ndarray
    y1: np.ndarray
    a: np.ndarray
    x: np.ndarray
    covariate_names: tuple[str, ...] = ()
    dy: np.ndarray = field(init=False)
    treated: np.ndarray = field(init=False)

    def __post_init__(self):
        y0 = _frozen(np.asarray(self.y0, dtype=float).ravel())
        y1 = _frozen(np.asarray(self.y1, dtype=float).ravel())
        a = _frozen(np.asarray(self.a, dtype=float).ravel())
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if x.size else x.reshape(len(a), 0)
        x = _frozen(x)
        n = len(a)
        if not (len(y0) == len(y1) == n and x.shape[0] == n):
            raise InputError("y0, y1, a, x must have one row per unit")
        for name, arr in (("y0", y0), ("y1", y1), ("a", a), ("x", x)):
            if not np.all(np.isfinite(arr)):
                raise InputError(f"non-finite values in {name}")
        if np.any(a < 0.0) or np.any(a > 1.0):
            row = int(np.where((a < 0.0) | (a > 1.0))[0][0]) + 1
            raise TreatmentOutOfRange(row)
        treated = a > 0.0
        if treated.all() or not treated.any():
            raise AllTreatedOrAllUntreated(
                "need at least one treated (a > 0) and one untreated (a == 0) unit"
            )
        names = tuple(self.covariate_names)
        if names and len(names) != x.shape[1]:
            raise InputError("covariate_names length must match x columns")
        if not names:
            names = tuple(f"x{j + 1}" for j in range(x.shape[1]))
        treated.setflags(write=False)
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "dy", _frozen(y1 - y0))
        object.__setattr__(self, "treated", treated)

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def n_covariates(self) -> int:
        return self.x.shape[1]

    @property
    def n_treated(self) -> int:
        return int(self.treated.sum())

    @property
    def n_untreated(self) -> int:
        return self.n - self.n_treated

    def treated_rows(self) -> np.ndarray:
        return np.flatnonzero(self.treated)

    def untreated_rows(self) -> np.ndarray:
        return np.flatnonzero(~self.treated)


@dataclass(frozen=True)
class FoldAssignment:
    """Partition of unit indices into K folds, stratified on treatment."""

    fold_id: np.ndarray
    k: int

    def __post_init__(self):
        fold_id = np.ascontiguousarray(self.fold_id, dtype=int)
        fold_id.setflags(write=False)
        object.__setattr__(self, "fold_id", fold_id)

    def eval_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_id == fold)

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_id != fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_id, minlength=self.k)


def _parse_cell(raw: str, row: int, column: str) -> float:
    raw = (raw or "").strip()
    if not raw:
        raise NonNumericValue(row, column)
    try:
        return float(raw)
    except ValueError:
        raise NonNumericValue(row, column) from None


def load_csv(path, covariate_columns=()) -> PanelDataset:
    """Load and validate a panel CSV.

    The file must carry a header with columns ``y0, y1, a`` plus the named
    covariate columns (order free, UTF-8, ``.`` decimal separator). Row
    indices in errors are 1-based data rows, excluding the header.
    """
    covariate_columns = list(covariate_columns)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (*REQUIRED_COLUMNS, *covariate_columns):
            if col not in header:
                raise MissingColumn(col)
        y0, y1, a, xrows = [], [], [], []
        for i, record in enumerate(reader, start=1):
            y0.append(_parse_cell(record.get("y0"), i, "y0"))
            y1.append(_parse_cell(record.get("y1"), i, "y1"))
            a_val = _parse_cell(record.get("a"), i, "a")
            if a_val < 0.0 or a_val > 1.0:
                raise TreatmentOutOfRange(i)
            a.append(a_val)
            xrows.append([_parse_cell(record.get(c), i, c) for c in covariate_columns])
    if not a:
        raise InputError(f"no data rows in {path}")
    x = np.array(xrows, dtype=float).reshape(len(a), len(covariate_columns))
    return PanelDataset(
        y0=np.array(y0), y1=np.array(y1), a=np.array(a), x=x,
        covariate_names=tuple(covariate_columns),
    )


def write_csv(data: PanelDataset, path) -> None:
    """Write a dataset back to CSV; floats use repr so a reload is bit-identical."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y0", "y1", "a", *data.covariate_names])
        for i in range(data.n):
            writer.writerow(
                [repr(float(data.y0[i])), repr(float(data.y1[i])), repr(float(data.a[i]))]
                + [repr(float(v)) for v in data.x[i]]
            )


def assign_folds(data: PanelDataset, k: int, seed: int) -> FoldAssignment:
    """Stratified random K-fold partition.

    Treated and untreated units are shuffled and dealt round-robin
    separately, so each fold's treated count matches the sample's within
    one unit and no fold is left without both strata. Deterministic given
    the seed.
    """
    if k < 2:
        raise TooFewUnitsPerStratum(f"fold count must be >= 2, got {k}")
    if data.n_treated < k or data.n_untreated < k:
        raise TooFewUnitsPerStratum(
            f"need at least {k} treated and {k} untreated units for {k} folds "
            f"(have {data.n_treated} treated, {data.n_untreated} untreated)"
        )
    rng = np.random.default_rng(seed)
    fold_id = np.empty(data.n, dtype=int)
    for stratum in (data.treated_rows(), data.untreated_rows()):
        order = rng.permutation(stratum)
        fold_id[order] = np.arange(len(order)) % k
    return FoldAssignment(fold_id=fold_id, k=k)
