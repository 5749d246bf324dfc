"""Tabular dataset with named float columns, a target, and missing values.

CSV dialect: comma-separated, mandatory header row, UTF-8, '.' decimal
separator. An empty cell or the literal NaN marks a missing feature value.
The target column may not contain missing values.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Dataset:
    """Column-major feature storage plus a target vector."""

    feature_names: tuple[str, ...]
    features: np.ndarray  # (n_rows, n_features) float64, NaN = missing
    target: np.ndarray  # (n_rows,) float64, no NaN
    target_name: str = "target"

    def __post_init__(self):
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("feature names must be unique")
        if self.features.ndim != 2 or self.features.shape[1] != len(self.feature_names):
            raise DataError("feature matrix shape does not match feature names")
        if self.target.shape != (self.features.shape[0],):
            raise DataError("target length does not match the number of rows")
        if np.isnan(self.target).any():
            raise DataError(f"target column {self.target_name!r} contains missing values")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def feature_matrix(self) -> np.ndarray:
        return np.ascontiguousarray(self.features)

    def column(self, name: str) -> np.ndarray:
        return self.features[:, self.feature_names.index(name)]

    def select_features(self, names) -> "Dataset":
        """New dataset keeping only the named feature columns, in the given order."""
        names = list(names)
        missing = [n for n in names if n not in self.feature_names]
        if missing:
            raise DataError(f"unknown feature columns: {missing}")
        idx = [self.feature_names.index(n) for n in names]
        return Dataset(
            feature_names=tuple(names),
            features=np.ascontiguousarray(self.features[:, idx]),
            target=self.target,
            target_name=self.target_name,
        )

    def take_rows(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(
            feature_names=self.feature_names,
            features=np.ascontiguousarray(self.features[indices]),
            target=self.target[indices],
            target_name=self.target_name,
        )


def _parse_cell(text: str, row: int, column: str, allow_missing: bool) -> float:
    text = text.strip()
    if text == "" or text == "NaN":
        if allow_missing:
            return float("nan")
        raise DataError(f"row {row} column {column!r}: missing value in target column")
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"row {row} column {column!r}: cannot parse {text!r} as a number") from None
    if value != value:  # "nan" spelled some other way
        if allow_missing:
            return value
        raise DataError(f"row {row} column {column!r}: missing value in target column")
    return value


def load_csv(path, target_column: str) -> Dataset:
    """Read a CSV file into a Dataset; every non-target column is a feature."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names in header")
        if target_column not in header:
            raise DataError(f"{path}: target column {target_column!r} not found in header")
        target_idx = header.index(target_column)
        feature_names = tuple(h for i, h in enumerate(header) if i != target_idx)
        rows = []
        target = []
        for line_no, record in enumerate(reader, start=1):
            if len(record) != len(header):
                raise DataError(
                    f"{path}: row {line_no} has {len(record)} cells, expected {len(header)}"
                )
            rows.append(
                [
                    _parse_cell(cell, line_no, header[i], allow_missing=True)
                    for i, cell in enumerate(record)
                    if i != target_idx
                ]
            )
            target.append(_parse_cell(record[target_idx], line_no, target_column, allow_missing=False))
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(
        feature_names=feature_names,
        features=np.asarray(rows, dtype=np.float64),
        target=np.asarray(target, dtype=np.float64),
        target_name=target_column,
    )


def save_csv(dataset: Dataset, path) -> None:
    """Write a Dataset in the same dialect ``load_csv`` reads."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(dataset.feature_names) + [dataset.target_name])
        for i in range(dataset.n_rows):
            cells = [
                "NaN" if np.isnan(v) else format(v, ".17g") for v in dataset.features[i]
            ]
            cells.append(format(dataset.target[i], ".17g"))
            writer.writerow(cells)
