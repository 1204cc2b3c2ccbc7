"""Synthetic contaminated batches and the chat-format fine-tuning corpus.

Continuous batches follow the clutter setup: a narrow normal Gaussian and a
ten times wider anomalous one.  Discrete batches mix two categorical
distributions drawn from a symmetric Dirichlet; normal categories are
``0..M_n-1`` and anomalous ones ``M_n..M_n+M_a-1``.

Randomness comes from numpy's PCG64 (``np.random.default_rng``).  Every
batch gets its own stream derived from ``SeedSequence([seed, split, index])``
so corpora are reproducible and batches can be generated independently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from llmad.core import DEFAULT_TASK_DESCRIPTION, DetectorConfig, Naming
from llmad.parser import render_response
from llmad.serializer import build_prompt

CONTINUOUS = "continuous"
DISCRETE = "discrete"
TRAIN_SPLIT = 0
VAL_SPLIT = 1


@dataclass(frozen=True)
class GeneratorParams:
    n_low: int = 20
    n_high: int = 100
    pi_low: float = 0.01
    pi_high: float = 0.2
    mu_low: float = -100.0
    mu_high: float = 100.0
    sigma_low: float = 0.5
    sigma_high: float = 5.0
    m_low: int = 1
    m_high: int = 4
    alpha: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_low <= self.n_high:
            raise ValueError("need 1 <= n_low <= n_high")
        if not 0 <= self.pi_low <= self.pi_high <= 1:
            raise ValueError("need 0 <= pi_low <= pi_high <= 1")
        if self.mu_low > self.mu_high:
            raise ValueError("need mu_low <= mu_high")
        if not 0 < self.sigma_low <= self.sigma_high:
            raise ValueError("need 0 < sigma_low <= sigma_high")
        if not 1 <= self.m_low <= self.m_high:
            raise ValueError("need 1 <= m_low <= m_high")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


@dataclass(frozen=True, eq=False)
class SyntheticBatch:
    values: np.ndarray
    labels: np.ndarray
    kind: str
    params_used: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return int(self.values.shape[0])

    def anomaly_indices(self) -> list[int]:
        return [int(i) + 1 for i in np.flatnonzero(self.labels)]


def batch_rng(seed: int, split: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, split, index]))


def _draw_size_and_ratio(params: GeneratorParams, rng: np.random.Generator):
    n = int(rng.integers(params.n_low, params.n_high + 1))
    pi = float(rng.uniform(params.pi_low, params.pi_high))
    return n, pi


def gen_continuous_batch(params: GeneratorParams, rng: np.random.Generator) -> SyntheticBatch:
    n, pi = _draw_size_and_ratio(params, rng)
    mu_n, mu_a = (float(v) for v in rng.uniform(params.mu_low, params.mu_high, size=2))
    sigma_n = float(rng.uniform(params.sigma_low, params.sigma_high))
    sigma_a = 10.0 * sigma_n
    labels = (rng.random(n) < pi).astype(int)
    normal = rng.normal(mu_n, sigma_n, size=n)
    abnormal = rng.normal(mu_a, sigma_a, size=n)
    values = np.where(labels == 1, abnormal, normal)
    used = dict(n=n, pi=pi, mu_n=mu_n, mu_a=mu_a, sigma_n=sigma_n, sigma_a=sigma_a)
    return SyntheticBatch(values, labels, CONTINUOUS, used)


def gen_discrete_batch(params: GeneratorParams, rng: np.random.Generator) -> SyntheticBatch:
    n, pi = _draw_size_and_ratio(params, rng)
    m_n = int(rng.integers(params.m_low, params.m_high + 1))
    m_a = int(rng.integers(params.m_low, params.m_high + 1))
    p_n = rng.dirichlet(np.full(m_n, params.alpha))
    p_a = rng.dirichlet(np.full(m_a, params.alpha))
    labels = (rng.random(n) < pi).astype(int)
    normal = rng.choice(m_n, size=n, p=p_n)
    abnormal = m_n + rng.choice(m_a, size=n, p=p_a)
    values = np.where(labels == 1, abnormal, normal).astype(int)
    used = dict(n=n, pi=pi, m_n=m_n, m_a=m_a, p_n=p_n.tolist(), p_a=p_a.tolist())
    return SyntheticBatch(values, labels, DISCRETE, used)


def render_finetune_example(
    batch: SyntheticBatch,
    naming: Naming | str = Naming.DATA,
    prompt_text: str = DEFAULT_TASK_DESCRIPTION,
    decimal_places: int = 2,
    discrete_decimal_places: int = 0,
) -> dict:
    """Chat record (system, user, assistant) plus kind/labels metadata."""
    config = DetectorConfig(naming=Naming.parse(naming), prompt_text=prompt_text)
    places = discrete_decimal_places if batch.kind == DISCRETE else decimal_places
    prompt = build_prompt(batch.values, config, decimal_places=places)
    return {
        "system": prompt.system,
        "user": prompt.user,
        "assistant": render_response(batch.anomaly_indices(), config.naming),
        "kind": batch.kind,
        "labels": [int(v) for v in batch.labels],
    }


def generate_split(params: GeneratorParams, count: int, split: int) -> list[SyntheticBatch]:
    """First half continuous, second half discrete."""
    if count % 2:
        raise ValueError(f"batch count must be even (half continuous, half discrete), got {count}")
    half = count // 2
    out = [gen_continuous_batch(params, batch_rng(params.seed, split, i)) for i in range(half)]
    out += [gen_discrete_batch(params, batch_rng(params.seed, split, half + i)) for i in range(half)]
    return out


def build_corpus(
    train_batches: int = 5000,
    val_batches: int = 400,
    params: GeneratorParams | None = None,
    seed: int | None = None,
) -> tuple[list[SyntheticBatch], list[SyntheticBatch]]:
    params = params or GeneratorParams()
    if seed is not None:
        params = replace(params, seed=seed)
    for name, count in (("train_batches", train_batches), ("val_batches", val_batches)):
        if count < 0 or count % 2:
            raise ValueError(f"{name} must be a non-negative even number, got {count}")
    return (
        generate_split(params, train_batches, TRAIN_SPLIT),
        generate_split(params, val_batches, VAL_SPLIT),
    )


def write_jsonl(records: Iterable[dict], path: str | Path) -> int:
    path = Path(path)
    n = 0
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False))
            fh.write("\n")
            n += 1
    return n


def read_jsonl(path: str | Path) -> list[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def export_corpus(
    out_dir: str | Path,
    train_batches: int = 5000,
    val_batches: int = 400,
    params: GeneratorParams | None = None,
    naming: Naming | str = Naming.DATA,
) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train, val = build_corpus(train_batches, val_batches, params)
    counts = {}
    for name, batches in (("train", train), ("val", val)):
        counts[name] = write_jsonl(
            (render_finetune_example(b, naming) for b in batches), out_dir / f"{name}.jsonl"
        )
    return counts
