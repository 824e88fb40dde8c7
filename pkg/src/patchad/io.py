"""Loading, validating, splitting and persisting time-series data.

CSV conventions: UTF-8, comma separated, LF or CRLF line endings, an
optional single header row. With a header, a column literally named
``label`` is treated as per-step binary labels; without a header every
column is data and labels must come from a separate file. Rows are
implicitly equispaced in time.

All internal numeric storage is float64; model arithmetic downcasts
separately where it needs to.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InputError


@dataclass
class TimeSeries:
    """An N x d series with optional per-step labels and train/eval split.

    ``split_point`` is the number of leading rows that form the training
    prefix; the remaining rows are the evaluation suffix.
    """

    values: np.ndarray
    labels: Optional[np.ndarray] = None
    split_point: Optional[int] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise InputError(f"series must be a non-empty 2-D matrix, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            t, c = np.argwhere(~np.isfinite(self.values))[0]
            raise InputError(f"non-finite value at row {t + 1}, column {c + 1}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape != (self.n_steps,):
                raise InputError(
                    f"labels length {self.labels.shape} does not match series length {self.n_steps}"
                )
            if not np.isin(self.labels, (0, 1)).all():
                bad = int(np.argwhere(~np.isin(self.labels, (0, 1)))[0, 0])
                raise InputError(f"label at row {bad + 1} is not 0 or 1")
            self.labels = self.labels.astype(np.int64)
        if self.split_point is not None:
            if not 1 <= self.split_point <= self.n_steps:
                raise InputError(
                    f"split_point {self.split_point} outside [1, {self.n_steps}]"
                )

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


@dataclass
class ScoreSeries:
    """Per-time-step anomaly scores; higher means more anomalous."""

    scores: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.scores)):
            bad = int(np.argwhere(~np.isfinite(self.scores))[0, 0])
            raise InputError(f"non-finite score at position {bad + 1}")

    def __len__(self) -> int:
        return len(self.scores)


def _parse_cell(text: str, row: int, col: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise InputError(f"non-numeric cell {text!r} at row {row}, column {col}") from None
    if not math.isfinite(value):
        raise InputError(f"non-finite cell {text!r} at row {row}, column {col}")
    return value


def load_csv(path, has_header: bool = False, split_point: Optional[int] = None) -> TimeSeries:
    """Load a series from CSV.

    With ``has_header``, a column named ``label`` (case-sensitive) is split
    off as the label vector; label cells must be 0 or 1. Errors carry the
    1-based row/column location of the offending cell.
    """
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]

    label_col = None
    if has_header:
        if not rows:
            raise InputError(f"{path}: empty file")
        header = [cell.strip() for cell in rows[0]]
        rows = rows[1:]
        if "label" in header:
            label_col = header.index("label")
    if not rows:
        raise InputError(f"{path}: no data rows")

    ncols = len(rows[0])
    values = np.empty((len(rows), ncols - (label_col is not None)), dtype=np.float64)
    labels = np.empty(len(rows), dtype=np.int64) if label_col is not None else None
    for i, row in enumerate(rows):
        rowno = i + (2 if has_header else 1)
        if len(row) != ncols:
            raise InputError(f"ragged row {rowno}: expected {ncols} columns, got {len(row)}")
        j = 0
        for c, cell in enumerate(row):
            v = _parse_cell(cell.strip(), rowno, c + 1)
            if c == label_col:
                if v not in (0.0, 1.0):
                    raise InputError(f"non-binary label {cell!r} at row {rowno}, column {c + 1}")
                labels[i] = int(v)
            else:
                values[i, j] = v
                j += 1
    return TimeSeries(values=values, labels=labels, split_point=split_point)


def split(series: TimeSeries) -> tuple[TimeSeries, TimeSeries]:
    """Split into (training prefix, evaluation suffix) at ``split_point``.

    Labels are carried to the evaluation suffix only; the training prefix is
    trusted to be anomaly-free.
    """
    sp = series.split_point
    if sp is None:
        raise InputError("series has no split_point")
    if sp >= series.n_steps:
        raise InputError(f"split_point {sp} leaves an empty evaluation suffix")
    train = TimeSeries(values=series.values[:sp].copy())
    labels = series.labels[sp:].copy() if series.labels is not None else None
    evaluation = TimeSeries(values=series.values[sp:].copy(), labels=labels)
    return train, evaluation


def write_scores(scores: ScoreSeries, path) -> None:
    """Write scores as ``t,score`` CSV, t starting at 1, 9 decimal places."""
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("t,score\n")
            for t, s in enumerate(scores.scores, start=1):
                fh.write(f"{t},{s:.9f}\n")
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from exc


def load_scores(path) -> ScoreSeries:
    """Read a ``t,score`` CSV back into a ScoreSeries."""
    series = load_csv(path, has_header=True)
    if series.n_channels != 2:
        raise InputError(f"{path}: expected two columns 't,score'")
    return ScoreSeries(scores=series.values[:, 1])
