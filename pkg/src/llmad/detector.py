"""Per-column prompting and score aggregation over a whole table."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from llmad.backends import Backend, ChatMessage
from llmad.core import AnomalyScores, DataBatch, DetectorConfig, validate_batch
from llmad.parser import ParsedPrediction, parse_response
from llmad.serializer import build_prompt

logger = logging.getLogger(__name__)


class ColumnError(RuntimeError):
    def __init__(self, column_index: int, cause: Exception):
        super().__init__(f"column {column_index}: {cause}")
        self.column_index = column_index
        self.cause = cause


class DetectionError(RuntimeError):
    """Every column of the batch failed."""


@dataclass(frozen=True)
class ColumnResult:
    column_index: int
    prediction: ParsedPrediction
    response: str


@dataclass(frozen=True)
class DetectionReport:
    scores: AnomalyScores
    per_column: tuple  # ColumnResult for each successful column, in column order
    failures: tuple = ()  # (column_index, message)

    @property
    def n_successful(self) -> int:
        return len(self.per_column)


def _query(column, config: DetectorConfig, backend: Backend, column_index: int) -> ColumnResult:
    prompt = build_prompt(column, config, column_index=column_index)
    messages = [ChatMessage("system", prompt.system), ChatMessage("user", prompt.user)]
    try:
        text = backend.complete(messages)
    except Exception as exc:
        raise ColumnError(column_index, exc) from exc
    return ColumnResult(column_index, parse_response(text, max_index=len(column)), text)


def detect_column(
    column: Sequence[float],
    config: DetectorConfig,
    backend: Backend,
    column_index: int = 0,
) -> ParsedPrediction:
    return _query(column, config, backend, column_index).prediction


def aggregate(predictions: Sequence[ParsedPrediction], n_rows: int) -> AnomalyScores:
    """Score of row i = number of predictions containing i."""
    scores = np.zeros(n_rows, dtype=int)
    for pred in predictions:
        for i in pred.indices:
            scores[i - 1] += 1
    return AnomalyScores(tuple(int(s) for s in scores), n_columns=len(predictions))


def detect_batch(batch: DataBatch, config: DetectorConfig, backend: Backend) -> DetectionReport:
    validate_batch(batch)
    n, k = batch.n_rows, batch.n_cols

    def run(col: int):
        try:
            return _query(batch.column(col), config, backend, col)
        except ColumnError as exc:
            logger.warning("%s", exc)
            return exc

    workers = min(config.max_parallel_columns, k)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, range(k)))
    else:
        outcomes = [run(col) for col in range(k)]

    results = [o for o in outcomes if isinstance(o, ColumnResult)]
    failures = tuple((o.column_index, str(o.cause)) for o in outcomes if isinstance(o, ColumnError))
    if not results:
        raise DetectionError(f"all {k} columns failed; first error: {failures[0][1]}")
    scores = aggregate([r.prediction for r in results], n)
    return DetectionReport(scores=scores, per_column=tuple(results), failures=failures)
