"""Classical transductive detectors used as reference points.

Both score a whole batch at once; higher means more anomalous.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import skew

from llmad.core import DataBatch

DEFAULT_K = 5


@dataclass(frozen=True, eq=False)
class BaselineScores:
    scores: np.ndarray
    method: str
    params: dict = field(default_factory=dict)
    components: dict = field(default_factory=dict)


def _values(batch) -> np.ndarray:
    x = batch.values if isinstance(batch, DataBatch) else np.asarray(batch, dtype=float)
    return x.reshape(-1, 1) if x.ndim == 1 else x


def knn_scores(batch: DataBatch, k: int = DEFAULT_K) -> BaselineScores:
    """Euclidean distance from each row to its k-th nearest other row."""
    x = _values(batch)
    n = x.shape[0]
    if k < 1 or k >= n:
        raise ValueError(f"k must satisfy 1 <= k < N (k={k}, N={n})")
    dist = cdist(x, x)
    np.fill_diagonal(dist, np.inf)
    # k-th smallest among the n-1 other rows; partition keeps this O(N^2)
    kth = np.partition(dist, k - 1, axis=1)[:, k - 1]
    return BaselineScores(kth, "knn", {"k": k})


def ecod_scores(batch: DataBatch) -> BaselineScores:
    """Empirical-CDF outlier scores (left, right and skew-chosen tails, max taken)."""
    x = _values(batch)
    n, d = x.shape
    if n < 2:
        raise ValueError("ECOD needs at least 2 rows")
    # F(x_ij) = #{x_lj <= x_ij} / n and G(x_ij) = #{x_lj >= x_ij} / n, self included
    sorted_cols = np.sort(x, axis=0)
    left = np.empty_like(x)
    right = np.empty_like(x)
    for j in range(d):
        col = sorted_cols[:, j]
        left[:, j] = np.searchsorted(col, x[:, j], side="right") / n
        right[:, j] = (n - np.searchsorted(col, x[:, j], side="left")) / n
    log_left = -np.log(left)
    log_right = -np.log(right)

    with warnings.catch_warnings(), np.errstate(invalid="ignore", divide="ignore"):
        # near-constant columns trigger a precision warning; their skew is ~0 either way
        warnings.simplefilter("ignore", RuntimeWarning)
        gamma = skew(x, axis=0, bias=False)
    gamma = np.nan_to_num(gamma, nan=0.0)
    auto = np.where(gamma < 0, log_left, log_right)

    o_left = log_left.sum(axis=1)
    o_right = log_right.sum(axis=1)
    o_auto = auto.sum(axis=1)
    scores = np.maximum.reduce([o_left, o_right, o_auto])
    parts = {"left": o_left, "right": o_right, "auto": o_auto}
    return BaselineScores(scores, "ecod", {}, parts)
