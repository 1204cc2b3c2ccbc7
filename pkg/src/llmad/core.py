"""Shared data model: batches, scores, naming and detector configuration."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

DEFAULT_TASK_DESCRIPTION = (
    "Abnormal data are different from the majority. Which data are abnormal?"
)


class BatchError(ValueError):
    """Raised when a table violates the batch invariants."""


class Naming(str, enum.Enum):
    DATA = "Data"
    ROW = "Row"

    @property
    def noun(self) -> str:
        return self.value

    @property
    def system_message(self) -> str:
        if self is Naming.DATA:
            return "Only answer data indices."
        return "Only answer row numbers."

    @property
    def clean_response(self) -> str:
        if self is Naming.DATA:
            return "All data are normal."
        return "All rows are normal."

    @classmethod
    def parse(cls, value: "str | Naming") -> "Naming":
        if isinstance(value, Naming):
            return value
        for member in cls:
            if member.value.lower() == str(value).strip().lower():
                return member
        raise ValueError(f"unknown naming scheme: {value!r} (expected 'data' or 'row')")


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DataBatch:
    """An N x K numeric table, optionally labelled (1 = anomaly).

    Arrays are copied and made read-only on construction, so a batch can be
    shared freely between threads.
    """

    values: np.ndarray
    labels: np.ndarray | None = None
    row_ids: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        object.__setattr__(self, "values", _frozen_array(values, float))
        if self.labels is not None:
            object.__setattr__(self, "labels", _frozen_array(np.ravel(self.labels), int))
        if self.row_ids is None:
            ids = np.arange(1, values.shape[0] + 1)
        else:
            ids = np.ravel(self.row_ids)
        object.__setattr__(self, "row_ids", _frozen_array(ids, int))

    @property
    def n_rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_cols(self) -> int:
        return int(self.values.shape[1]) if self.values.ndim == 2 else 0

    def column(self, k: int) -> np.ndarray:
        return self.values[:, k]


@dataclass(frozen=True)
class AnomalyScores:
    """Per-row count of columns that flagged the row."""

    scores: tuple[int, ...]
    n_columns: int

    def __post_init__(self):
        for s in self.scores:
            if s < 0 or s > self.n_columns:
                raise ValueError(f"score {s} outside [0, {self.n_columns}]")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.scores, dtype=int)


@dataclass(frozen=True)
class DetectorConfig:
    naming: Naming = Naming.DATA
    max_parallel_columns: int = 4
    prompt_text: str = DEFAULT_TASK_DESCRIPTION
    decimal_places: int = 2

    def __post_init__(self):
        object.__setattr__(self, "naming", Naming.parse(self.naming))
        if self.decimal_places < 1:
            raise ValueError("decimal_places must be >= 1")
        if self.max_parallel_columns < 1:
            raise ValueError("max_parallel_columns must be >= 1")


def validate_batch(batch: DataBatch) -> DataBatch:
    """Return ``batch`` unchanged if it is a well-formed table, else raise BatchError."""
    values = batch.values
    if values.ndim != 2 or values.shape[0] == 0 or values.shape[1] == 0:
        raise BatchError(f"empty table: shape {values.shape}")
    if not np.all(np.isfinite(values)):
        rows, cols = np.nonzero(~np.isfinite(values))
        raise BatchError(
            f"non-finite value at row {int(rows[0]) + 1}, column {int(cols[0]) + 1}; "
            "clean the data before detection"
        )
    n = values.shape[0]
    if batch.labels is not None:
        if batch.labels.shape[0] != n:
            raise BatchError(f"label length {batch.labels.shape[0]} != number of rows {n}")
        if not np.all(np.isin(batch.labels, (0, 1))):
            raise BatchError("labels must be 0/1")
    if batch.row_ids.shape[0] != n:
        raise BatchError(f"row_ids length {batch.row_ids.shape[0]} != number of rows {n}")
    if len(set(batch.row_ids.tolist())) != n or np.any(batch.row_ids < 1):
        raise BatchError("row_ids must be unique positive integers")
    return batch
