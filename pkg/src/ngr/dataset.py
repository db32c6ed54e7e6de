"""Tabular data container, z-score standardization and CSV reading/writing."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Dataset:
    """M x D sample matrix with feature names and recorded standardization.

    ``mean`` and ``std`` describe the transform already applied to ``values``
    (raw = values * std + mean). An untransformed dataset carries zeros/ones.
    """

    values: np.ndarray
    feature_names: list[str] | None = None
    mean: np.ndarray = field(default=None)  # type: ignore[assignment]
    std: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError(f"dataset values must be 2-D, got shape {values.shape}")
        m, d = values.shape
        if self.feature_names is None:
            object.__setattr__(self, "feature_names", default_names(d))
        if len(self.feature_names) != d:
            raise DataError(f"{len(self.feature_names)} feature names for {d} columns")
        if not np.all(np.isfinite(values)):
            raise DataError("dataset contains missing or non-finite values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", list(self.feature_names))
        mean = np.zeros(d) if self.mean is None else np.asarray(self.mean, dtype=float)
        std = np.ones(d) if self.std is None else np.asarray(self.std, dtype=float)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.values[rows], self.feature_names, self.mean, self.std)


def default_names(d: int) -> list[str]:
    return [f"x{i}" for i in range(d)]


def standardize(data: Dataset, columns=None) -> Dataset:
    """Z-score the selected columns (all by default) using population std.

    Constant columns keep std 1 and trigger a warning. Columns outside
    ``columns`` are left untouched and record an identity transform.
    """
    x = data.values
    if x.shape[0] < 2 or x.shape[1] < 2:
        raise DataError(f"need at least 2 samples and 2 features, got {x.shape}")
    d = x.shape[1]
    cols = np.arange(d) if columns is None else np.asarray(list(columns), dtype=int)
    mean = np.zeros(d)
    std = np.ones(d)
    mean[cols] = x[:, cols].mean(axis=0)
    sd = x[:, cols].std(axis=0)
    const = sd == 0.0
    if np.any(const):
        names = [data.feature_names[c] for c in cols[const]]
        logger.warning("constant columns left unscaled: %s", ", ".join(names))
        sd = np.where(const, 1.0, sd)
    std[cols] = sd
    z = (x - mean) / std
    # compose with whatever transform the input already carried
    return Dataset(z, data.feature_names, data.mean + data.std * mean, data.std * std)


def read_table(path: str | Path) -> tuple[list[str], list[list[str]]]:
    """Read a header + rows CSV as strings, validating rectangular shape."""
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        rows = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}"
                )
            rows.append([c.strip() for c in row])
    if not rows:
        raise DataError(f"{path}: no data rows")
    return header, rows


def read_numeric_csv(path: str | Path) -> Dataset:
    header, rows = read_table(path)
    values = np.empty((len(rows), len(header)))
    for r, row in enumerate(rows):
        for c, cell in enumerate(row):
            if cell == "":
                raise DataError(f"{path}:{r + 2}: missing value in column '{header[c]}'")
            try:
                values[r, c] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}:{r + 2}: non-numeric value {cell!r} in column '{header[c]}'"
                ) from None
    return Dataset(values, header)


def write_csv(path: str | Path, data: Dataset) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(data.feature_names)
        for row in data.values:
            writer.writerow([repr(float(v)) for v in row])
