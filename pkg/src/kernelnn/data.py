"""Datasets, CSV ingestion, attribute scaling and stratified folds."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np

from .geometry import Dispersion, dispersion

BUNDLED = ("iris", "wine", "ionosphere", "glass", "sonar", "wisconsin")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Numeric feature matrix with class labels.

    ``y`` holds integer codes into ``classes``; the order of ``classes``
    is fixed at load time and decides every downstream argmax tie.
    """

    X: np.ndarray
    y: np.ndarray
    classes: tuple
    name: str = "dataset"
    feature_names: tuple | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"features must be a non-empty 2-D matrix, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("features contain non-finite values")
        if y.shape != (X.shape[0],):
            raise ValueError(f"expected {X.shape[0]} labels, got shape {y.shape}")
        if not np.issubdtype(y.dtype, np.integer) or (y.size and (y.min() < 0 or y.max() >= len(self.classes))):
            raise ValueError("labels must be integer codes into the class catalogue")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("class catalogue has duplicates")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y.astype(np.int64)))
        object.__setattr__(self, "classes", tuple(self.classes))

    @classmethod
    def from_labels(cls, X, labels: Sequence, name: str = "dataset", classes: Sequence | None = None, **kw) -> "Dataset":
        """Build from raw class identifiers; the catalogue defaults to first-appearance order."""
        labels = list(labels)
        if classes is None:
            classes = list(dict.fromkeys(labels))
        lookup = {c: i for i, c in enumerate(classes)}
        missing = [c for c in labels if c not in lookup]
        if missing:
            raise ValueError(f"label {missing[0]!r} not in class catalogue")
        return cls(np.asarray(X, dtype=float), np.array([lookup[c] for c in labels], dtype=np.int64), tuple(classes), name, **kw)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    @property
    def labels(self) -> list:
        return [self.classes[i] for i in self.y]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=len(self.classes))

    def subset(self, rows) -> "Dataset":
        """Rows ``rows`` with the full class catalogue retained."""
        rows = np.asarray(rows)
        return Dataset(self.X[rows], self.y[rows], self.classes, self.name, self.feature_names)

    def with_features(self, X) -> "Dataset":
        return Dataset(X, self.y, self.classes, self.name, self.feature_names)

    def with_labels(self, y) -> "Dataset":
        return Dataset(self.X, y, self.classes, self.name, self.feature_names)


class CSVFormatError(ValueError):
    """Malformed delimited input; the message names the offending row/column."""


def _parse_float(cell: str) -> float | None:
    try:
        value = float(cell)
    except ValueError:
        return None
    return value


def load_csv(source, label_column: int | str = -1, header: bool | None = None, name: str | None = None) -> Dataset:
    """Read a comma-delimited dataset.

    ``source`` is a path, a text or byte stream. ``label_column`` is a
    column index (negative counts from the end) or a header name. With
    ``header=None`` a header row is assumed when the first row has a
    non-numeric cell outside the label column.
    """
    if isinstance(source, (str, os.PathLike)):
        if name is None:
            name = os.path.splitext(os.path.basename(os.fspath(source)))[0]
        with open(source, "rb") as fh:
            raw = fh.read()
    else:
        raw = source.read()
    text = raw.decode("utf-8-sig") if isinstance(raw, bytes) else raw
    catalogue = None
    lines = []
    for line in text.splitlines():
        if line.startswith("#"):
            directive = line[1:].strip()
            if directive.startswith("classes="):
                catalogue = json.loads(directive[len("classes="):])
            continue
        lines.append(line)
    rows = [r for r in csv.reader(lines) if r and any(c.strip() for c in r)]
    if not rows:
        raise CSVFormatError("empty dataset: no rows")

    width = len(rows[0])
    if width < 2:
        raise CSVFormatError("need at least one feature column and a label column")

    names = None
    if header is None:
        if isinstance(label_column, str):
            header = True
        else:
            li = label_column % width
            header = any(_parse_float(c) is None for j, c in enumerate(rows[0]) if j != li)
    if header:
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
    if isinstance(label_column, str):
        if names is None or label_column not in names:
            raise CSVFormatError(f"label column {label_column!r} not found in header")
        li = names.index(label_column)
    else:
        if not -width <= label_column < width:
            raise CSVFormatError(f"label column {label_column} out of range for {width} columns")
        li = label_column % width
    if not rows:
        raise CSVFormatError("empty dataset: header only")

    first_data_line = 2 if header else 1
    X = np.empty((len(rows), width - 1))
    labels = []
    for r, row in enumerate(rows):
        line = r + first_data_line
        if len(row) != width:
            raise CSVFormatError(f"row {line}: expected {width} columns, found {len(row)}")
        j_out = 0
        for j, cell in enumerate(row):
            if j == li:
                label = cell.strip()
                if label == "":
                    raise CSVFormatError(f"row {line}, column {j + 1}: missing label")
                labels.append(label)
                continue
            value = _parse_float(cell.strip()) if cell.strip() else None
            col = names[j] if names else str(j + 1)
            if cell.strip() in ("", "?", "NA", "nan", "NaN"):
                raise CSVFormatError(f"row {line}, column {col}: missing value")
            if value is None:
                raise CSVFormatError(f"row {line}, column {col}: non-numeric value {cell!r}")
            if not np.isfinite(value):
                raise CSVFormatError(f"row {line}, column {col}: non-finite value {cell!r}")
            X[r, j_out] = value
            j_out += 1
    feature_names = tuple(n for j, n in enumerate(names) if j != li) if names else None
    return Dataset.from_labels(X, labels, name=name or "dataset", classes=catalogue, feature_names=feature_names)


def save_csv(data: Dataset, dest) -> None:
    """Write ``data`` as CSV with the label in the last column.

    Floats are written with ``repr`` so that reloading is bit-exact. A
    leading ``# classes=[...]`` line preserves the catalogue order.
    """
    names = list(data.feature_names) if data.feature_names else [f"x{j + 1}" for j in range(data.m)]
    own = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        fh.write("# classes=" + json.dumps([str(c) for c in data.classes]) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names + ["class"])
        for row, code in zip(data.X, data.y):
            writer.writerow([repr(float(v)) for v in row] + [data.classes[code]])
    finally:
        if own:
            fh.close()


def load_bundled(name: str) -> Dataset:
    """One of the small datasets shipped with the package (see ``BUNDLED``)."""
    if name not in BUNDLED:
        raise ValueError(f"no bundled dataset {name!r}; available: {', '.join(BUNDLED)}")
    path = resources.files("kernelnn").joinpath("datasets", f"{name}.csv")
    with path.open("rb") as fh:
        return load_csv(fh, label_column=-1, header=True, name=name)


@dataclass(frozen=True, eq=False)
class Scaler:
    """Per-attribute divisors; constant attributes keep divisor 1."""

    divisors: np.ndarray
    measure: Dispersion = Dispersion.NONE

    def __post_init__(self):
        d = np.asarray(self.divisors, dtype=float)
        if d.ndim != 1 or np.any(~np.isfinite(d)) or np.any(d <= 0):
            raise ValueError("divisors must be a vector of positive finite reals")
        object.__setattr__(self, "divisors", _frozen(d))

    def transform(self, X) -> np.ndarray:
        return apply_scaler(self, X)


def fit_scaler(train, measure=Dispersion.NONE) -> Scaler:
    """Fit divisors on training data (a ``Dataset`` or a feature matrix)."""
    measure = Dispersion.parse(measure)
    X = train.X if isinstance(train, Dataset) else np.atleast_2d(np.asarray(train, dtype=float))
    if measure is Dispersion.NONE:
        return Scaler(np.ones(X.shape[1]), measure)
    divisors = np.array([dispersion(X[:, j], measure) for j in range(X.shape[1])])
    divisors[divisors <= 0] = 1.0
    return Scaler(divisors, measure)


def apply_scaler(scaler: Scaler, record) -> np.ndarray:
    """Divide a record (or each row of a matrix) by the scaler's divisors."""
    x = np.asarray(record, dtype=float)
    if x.shape[-1] != scaler.divisors.shape[0]:
        raise ValueError(f"dimension mismatch: record has {x.shape[-1]} features, scaler {scaler.divisors.shape[0]}")
    return x / scaler.divisors


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    fold_of: np.ndarray
    n_folds: int

    def __post_init__(self):
        object.__setattr__(self, "fold_of", _frozen(np.asarray(self.fold_of, dtype=np.int64)))

    def train_test(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """Row indices (ascending) of the training and test portions of ``fold``."""
        test = np.flatnonzero(self.fold_of == fold)
        train = np.flatnonzero(self.fold_of != fold)
        return train, test

    def __iter__(self):
        for fold in range(self.n_folds):
            yield self.train_test(fold)


def stratified_folds(data: Dataset, f: int = 5, seed: int = 0) -> FoldAssignment:
    """Seeded stratified assignment of records to ``f`` folds.

    Each class is shuffled and dealt round-robin; the dealing position
    carries over from one class to the next so fold sizes stay balanced.
    """
    if f < 2:
        raise ValueError("need at least two folds")
    if f > data.n:
        raise ValueError(f"cannot split {data.n} records into {f} folds")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(data.n, dtype=np.int64)
    offset = 0
    for c in range(len(data.classes)):
        members = np.flatnonzero(data.y == c)
        members = members[rng.permutation(members.size)]
        fold_of[members] = (offset + np.arange(members.size)) % f
        offset = (offset + members.size) % f
    return FoldAssignment(fold_of, f)


__all__ = [
    "BUNDLED",
    "CSVFormatError",
    "Dataset",
    "FoldAssignment",
    "Scaler",
    "apply_scaler",
    "fit_scaler",
    "load_bundled",
    "load_csv",
    "save_csv",
    "stratified_folds",
]
