"""Benchmark protocol: CSV ingestion, subsampling, AUROC and reporting.

Also hosts the low-density demonstration: pooled predictions on batches
drawn from a two-peak mixture contaminated by a wide uniform.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import integrate
from scipy.stats import rankdata

from llmad.backends import Backend
from llmad.baselines import DEFAULT_K, ecod_scores, knn_scores
from llmad.core import BatchError, DataBatch, DetectorConfig, validate_batch
from llmad.detector import detect_batch, detect_column

logger = logging.getLogger(__name__)

Scorer = Callable[[DataBatch], np.ndarray]


class DatasetError(ValueError):
    pass


# ---------------------------------------------------------------------------
# ingestion and protocol
# ---------------------------------------------------------------------------


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv_dataset(path: str | Path, label_last: bool = False) -> DataBatch:
    """Read a numeric CSV.

    A header row is detected when its first line has a non-numeric cell.  A
    column named ``label`` (any case) becomes the labels; without one,
    ``label_last=True`` takes the last column instead.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = [(i, row) for i, row in enumerate(csv.reader(fh), start=1) if row]
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DatasetError(f"{path}: empty file")

    header = None
    first_line, first = rows[0]
    if not all(_is_number(c) for c in first):
        header = [c.strip() for c in first]
        rows = rows[1:]
    width = len(header) if header else len(first)
    data = []
    for line, row in rows:
        if len(row) != width:
            raise DatasetError(f"{path}:{line}: expected {width} fields, found {len(row)}")
        try:
            data.append([float(c) for c in row])
        except ValueError:
            bad = next(c for c in row if not _is_number(c))
            raise DatasetError(f"{path}:{line}: non-numeric cell {bad!r}") from None
    if not data:
        raise DatasetError(f"{path}: no data rows")
    table = np.asarray(data, dtype=float)

    label_col = None
    if header:
        lowered = [h.lower() for h in header]
        if "label" in lowered:
            label_col = lowered.index("label")
    if label_col is None and label_last:
        label_col = width - 1
    labels = None
    if label_col is not None:
        labels = table[:, label_col]
        if not np.all(np.isin(labels, (0, 1))):
            raise DatasetError(f"{path}: label column must hold 0/1 values")
        table = np.delete(table, label_col, axis=1)
    if table.shape[1] == 0:
        raise DatasetError(f"{path}: no feature columns")
    return DataBatch(table, None if labels is None else labels.astype(int))


def subsample(batch: DataBatch, max_rows: int = 150, max_cols: int = 10, seed: int = 0) -> DataBatch:
    """Uniform row sample without replacement, first ``max_cols`` columns kept.

    Rows keep their original order; row ids are renumbered 1..n.
    """
    n, k = batch.n_rows, batch.n_cols
    keep_cols = min(k, max_cols)
    if n <= max_rows:
        rows = np.arange(n)
    else:
        rng = np.random.default_rng(seed)
        rows = np.sort(rng.choice(n, size=max_rows, replace=False))
    labels = None if batch.labels is None else batch.labels[rows]
    return DataBatch(batch.values[rows, :keep_cols], labels)


def auroc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUROC; tied (positive, negative) pairs count one half."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise ValueError(f"scores and labels differ in length ({s.size} vs {y.size})")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int((y == 0).sum())
    if n_pos + n_neg != y.size:
        raise ValueError("labels must be 0/1")
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both classes in the labels")
    ranks = rankdata(s)  # average ranks handle ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


# ---------------------------------------------------------------------------
# scorers
# ---------------------------------------------------------------------------


def llm_scorer(backend: Backend, config: DetectorConfig | None = None) -> Scorer:
    config = config or DetectorConfig()

    def score(batch: DataBatch) -> np.ndarray:
        return detect_batch(batch, config, backend).scores.as_array()

    return score


def knn_scorer(k: int = DEFAULT_K) -> Scorer:
    def score(batch: DataBatch) -> np.ndarray:
        return knn_scores(batch, min(k, batch.n_rows - 1)).scores

    return score


def ecod_scorer() -> Scorer:
    return lambda batch: ecod_scores(batch).scores


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------


@dataclass
class BenchmarkConfig:
    scorer: Scorer
    datasets: Mapping[str, str | Path | DataBatch]
    max_rows: int = 150
    max_cols: int = 10
    seeds: Sequence[int] = (0, 1, 2)
    label_last: bool = False

    def __post_init__(self):
        if self.max_rows < 2:
            raise ValueError("max_rows must be >= 2")
        if self.max_cols < 1:
            raise ValueError("max_cols must be >= 1")
        if not self.seeds:
            raise ValueError("at least one seed is required")


@dataclass
class DatasetResult:
    name: str
    aurocs: dict = field(default_factory=dict)  # seed -> AUROC
    skipped: dict = field(default_factory=dict)  # seed -> reason
    error: str | None = None

    @property
    def values(self) -> list[float]:
        return [self.aurocs[s] for s in sorted(self.aurocs)]

    @property
    def mean(self) -> float:
        return float(np.mean(self.values)) if self.aurocs else math.nan

    @property
    def std(self) -> float:
        return float(np.std(self.values)) if self.aurocs else math.nan


@dataclass
class BenchmarkResult:
    datasets: list
    seeds: list
    runtime_s: float = 0.0

    def average_by_seed(self) -> dict:
        out = {}
        for seed in self.seeds:
            vals = [d.aurocs[seed] for d in self.datasets if seed in d.aurocs]
            if vals:
                out[seed] = float(np.mean(vals))
        return out

    @property
    def average_mean(self) -> float:
        vals = list(self.average_by_seed().values())
        return float(np.mean(vals)) if vals else math.nan

    @property
    def average_std(self) -> float:
        vals = list(self.average_by_seed().values())
        return float(np.std(vals)) if vals else math.nan

    def rows(self) -> list[tuple[str, float, float, int]]:
        out = [(d.name, d.mean, d.std, len(d.aurocs)) for d in self.datasets]
        out.append(("average", self.average_mean, self.average_std, len(self.average_by_seed())))
        return out

    def to_csv(self, path: str | Path | None = None) -> str:
        lines = ["dataset,mean_auroc,std_auroc,n_seeds," + ",".join(f"seed_{s}" for s in self.seeds)]
        per_seed = {d.name: d.aurocs for d in self.datasets}
        per_seed["average"] = self.average_by_seed()
        for name, mean, std, count in self.rows():
            cells = [_fmt(per_seed[name].get(s)) for s in self.seeds]
            lines.append(",".join([name, _fmt(mean), _fmt(std), str(count)] + cells))
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    def to_table(self) -> str:
        """Plain-text table in percent, ``mean±std`` with one decimal."""
        rows = [("dataset", "AUROC")]
        for name, mean, std, count in self.rows():
            cell = "n/a" if count == 0 else f"{100 * mean:.1f}±{100 * std:.1f}"
            rows.append((name, cell))
        width = max(len(r[0]) for r in rows)
        cell_w = max(len(r[1]) for r in rows)
        body = [f"{a:<{width}}  {b:>{cell_w}}" for a, b in rows]
        body.insert(1, "-" * (width + 2 + cell_w))
        body.insert(len(body) - 1, "-" * (width + 2 + cell_w))
        notes = [
            f"# {d.name}: seed {s} skipped ({why})" for d in self.datasets for s, why in d.skipped.items()
        ] + [f"# {d.name}: failed ({d.error})" for d in self.datasets if d.error]
        return "\n".join(body + notes) + "\n"


def _fmt(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


def run_benchmark(config: BenchmarkConfig) -> BenchmarkResult:
    started = time.perf_counter()
    results = []
    for name, source in config.datasets.items():
        res = DatasetResult(name)
        results.append(res)
        try:
            batch = source if isinstance(source, DataBatch) else load_csv_dataset(source, config.label_last)
            validate_batch(batch)
            if batch.labels is None:
                raise DatasetError("dataset has no labels")
        except (DatasetError, BatchError) as exc:
            res.error = str(exc)
            logger.warning("dataset %s failed: %s", name, exc)
            continue
        for seed in config.seeds:
            sub = subsample(batch, config.max_rows, config.max_cols, seed)
            if sub.labels.min() == sub.labels.max():
                res.skipped[seed] = "single-class subsample"
                continue
            try:
                scores = config.scorer(sub)
            except Exception as exc:  # detector failures are recorded per cell
                res.skipped[seed] = f"detector error: {exc}"
                logger.warning("dataset %s seed %s: %s", name, seed, exc)
                continue
            res.aurocs[seed] = auroc(scores, sub.labels)
    if results and all(r.error or not r.aurocs for r in results):
        raise DatasetError("every dataset failed or was skipped")
    return BenchmarkResult(results, list(config.seeds), time.perf_counter() - started)


def bundled_datasets() -> dict[str, Path]:
    """Small labelled synthetic tables shipped with the package."""
    root = resources.files("llmad") / "data"
    return {
        Path(p.name).stem: Path(str(p))
        for p in sorted(root.iterdir(), key=lambda p: p.name)
        if p.name.startswith("synth_") and p.name.endswith(".csv")
    }


def toy_dataset() -> Path:
    return Path(str(resources.files("llmad") / "data" / "toy.csv"))


# ---------------------------------------------------------------------------
# low-density demonstration
# ---------------------------------------------------------------------------

DEMO_MEANS = (-25.0, 25.0)
DEMO_SD = 2.5
DEMO_WEIGHTS = (0.45, 0.45, 0.1)
DEMO_UNIFORM = (-100.0, 100.0)
DEMO_BANDWIDTH = 5.0
DEMO_GRID = (-120.0, 120.0, 801)
LOW_DENSITY_GAP = 3 * DEMO_SD


def demo_density(x) -> np.ndarray:
    """p(x) = 0.45 N(-25, 2.5^2) + 0.45 N(25, 2.5^2) + 0.1 U(-100, 100)."""
    x = np.asarray(x, dtype=float)
    gauss = sum(
        w * np.exp(-0.5 * ((x - m) / DEMO_SD) ** 2) / (DEMO_SD * math.sqrt(2 * math.pi))
        for w, m in zip(DEMO_WEIGHTS[:2], DEMO_MEANS)
    )
    lo, hi = DEMO_UNIFORM
    unif = np.where((x >= lo) & (x <= hi), DEMO_WEIGHTS[2] / (hi - lo), 0.0)
    return gauss + unif


def sample_demo(n: int, rng: np.random.Generator) -> np.ndarray:
    comp = rng.choice(3, size=n, p=DEMO_WEIGHTS)
    gauss = rng.normal(np.take(DEMO_MEANS, np.minimum(comp, 1)), DEMO_SD)
    unif = rng.uniform(*DEMO_UNIFORM, size=n)
    return np.where(comp == 2, unif, gauss)


def gaussian_kde(points: np.ndarray, grid: np.ndarray, bandwidth: float) -> np.ndarray:
    """Fixed-bandwidth Gaussian kernel density evaluated on ``grid``."""
    points = np.asarray(points, dtype=float)
    if points.size == 0:
        return np.zeros_like(grid)
    z = (grid[:, None] - points[None, :]) / bandwidth
    return np.exp(-0.5 * z * z).sum(axis=1) / (points.size * bandwidth * math.sqrt(2 * math.pi))


@dataclass
class DemoReport:
    n_batches: int
    batch_size: int
    predictions: np.ndarray
    grid: np.ndarray
    density: np.ndarray
    low_density_fraction: float
    kde_integral: float
    failures: int = 0
    files: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "n_batches": self.n_batches,
            "batch_size": self.batch_size,
            "n_predictions": int(self.predictions.size),
            "failed_batches": self.failures,
            "bandwidth": DEMO_BANDWIDTH,
            "low_density_gap": LOW_DENSITY_GAP,
            "low_density_fraction": self.low_density_fraction,
            "kde_integral": self.kde_integral,
            # reference values from p(x) itself
            "true_density_at_peak": float(demo_density(DEMO_MEANS[1])),
            "true_density_at_gap": float(demo_density(DEMO_MEANS[1] + LOW_DENSITY_GAP)),
            "true_uniform_mass_in_low_density_region": uniform_mass_outside_gap(),
        }


def uniform_mass_outside_gap() -> float:
    """Share of the uniform component lying at least the gap away from both peaks."""
    lo, hi = DEMO_UNIFORM
    excluded = sum(min(m + LOW_DENSITY_GAP, hi) - max(m - LOW_DENSITY_GAP, lo) for m in DEMO_MEANS)
    return (hi - lo - excluded) / (hi - lo)


def low_density_fraction(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return math.nan
    dist = np.min(np.abs(values[:, None] - np.asarray(DEMO_MEANS)[None, :]), axis=1)
    return float(np.mean(dist >= LOW_DENSITY_GAP))


def density_demo(
    backend: Backend,
    out_dir: str | Path | None = None,
    n_batches: int = 500,
    batch_size: int = 50,
    seed: int = 0,
    config: DetectorConfig | None = None,
) -> DemoReport:
    config = config or DetectorConfig()
    rng = np.random.default_rng(seed)
    pooled = []
    rows = []
    failures = 0
    for b in range(n_batches):
        column = sample_demo(batch_size, rng)
        try:
            pred = detect_column(column, config, backend)
        except Exception as exc:
            failures += 1
            logger.warning("demo batch %d failed: %s", b, exc)
            continue
        for i in pred.sorted():
            pooled.append(column[i - 1])
            rows.append((b, i, column[i - 1]))
    if failures == n_batches:
        raise RuntimeError(f"all {n_batches} demo batches failed")
    predictions = np.asarray(pooled, dtype=float)
    lo, hi, count = DEMO_GRID
    grid = np.linspace(lo, hi, count)
    density = gaussian_kde(predictions, grid, DEMO_BANDWIDTH)
    report = DemoReport(
        n_batches=n_batches,
        batch_size=batch_size,
        predictions=predictions,
        grid=grid,
        density=density,
        low_density_fraction=low_density_fraction(predictions),
        kde_integral=float(integrate.trapezoid(density, grid)),
        failures=failures,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with (out / "density_grid.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "density", "true_density"])
            for x, d, p in zip(grid, density, demo_density(grid)):
                w.writerow([repr(float(x)), repr(float(d)), repr(float(p))])
        with (out / "predictions.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["batch", "row", "value"])
            for b, i, v in rows:
                w.writerow([b, i, repr(float(v))])
        (out / "summary.json").write_text(json.dumps(report.summary(), indent=2) + "\n")
        report.files = {
            "grid": out / "density_grid.csv",
            "predictions": out / "predictions.csv",
            "summary": out / "summary.json",
        }
    return report
