import json
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import binom

from llmad.constrain import ANSWER_PATTERN, compile_pattern
from llmad.core import Naming
from llmad.parser import parse_response
from llmad.synth import (
    CONTINUOUS,
    DISCRETE,
    GeneratorParams,
    SyntheticBatch,
    batch_rng,
    build_corpus,
    export_corpus,
    gen_continuous_batch,
    gen_discrete_batch,
    read_jsonl,
    render_finetune_example,
)

DEFAULTS = GeneratorParams()


def test_default_hyperparameters():
    p = DEFAULTS
    assert (p.n_low, p.n_high, p.pi_low, p.pi_high) == (20, 100, 0.01, 0.2)
    assert (p.mu_low, p.mu_high, p.sigma_low, p.sigma_high) == (-100, 100, 0.5, 5)
    assert (p.m_low, p.m_high, p.alpha) == (1, 4, 20)


@pytest.mark.parametrize("gen", [gen_continuous_batch, gen_discrete_batch])
def test_sizes_and_ratio_in_range(gen):
    for i in range(300):
        b = gen(DEFAULTS, batch_rng(1, 0, i))
        assert 20 <= b.n_rows <= 100
        assert 0.01 <= b.params_used["pi"] <= 0.2
        assert b.labels.shape == b.values.shape


def test_continuous_scale_ratio():
    for i in range(200):
        used = gen_continuous_batch(DEFAULTS, batch_rng(2, 0, i)).params_used
        assert used["sigma_a"] == 10 * used["sigma_n"]
        assert 0.5 <= used["sigma_n"] <= 5 and -100 <= used["mu_n"] <= 100


def test_zero_contamination():
    p = replace(DEFAULTS, pi_low=0.0, pi_high=0.0)
    b = gen_continuous_batch(p, batch_rng(0, 0, 0))
    assert b.labels.sum() == 0
    assert render_finetune_example(b)["assistant"] == "All data are normal."
    d = gen_discrete_batch(p, batch_rng(0, 0, 1))
    assert np.all(d.values < d.params_used["m_n"])


@pytest.mark.parametrize("gen", [gen_continuous_batch, gen_discrete_batch])
def test_reproducible(gen):
    a = gen(DEFAULTS, batch_rng(5, 0, 3))
    b = gen(DEFAULTS, batch_rng(5, 0, 3))
    assert a.values.tobytes() == b.values.tobytes() and a.labels.tobytes() == b.labels.tobytes()
    c = gen(DEFAULTS, batch_rng(5, 0, 4))
    assert a.values.tobytes() != c.values.tobytes()


def test_anomaly_counts_binomial():
    violations = 0
    for i in range(1000):
        b = gen_continuous_batch(DEFAULTS, batch_rng(6, 0, i))
        n, pi = b.n_rows, b.params_used["pi"]
        lo, hi = binom.ppf(0.0005, n, pi), binom.ppf(0.9995, n, pi)
        violations += not (lo <= b.labels.sum() <= hi)
    # about one violation expected at the 99.9% level
    assert violations <= 5


def test_pooled_fraction_near_expected_ratio():
    fracs = np.array([gen_continuous_batch(DEFAULTS, batch_rng(7, 0, i)).labels.mean() for i in range(1000)])
    se = fracs.std(ddof=1) / np.sqrt(fracs.size)
    assert abs(fracs.mean() - 0.105) < 3 * se


def test_dirichlet_concentration():
    p = replace(DEFAULTS, m_low=3, m_high=3)
    inside = 0
    for i in range(10_000):
        p_n = np.array(gen_discrete_batch(p, batch_rng(8, 0, i)).params_used["p_n"])
        inside += bool(np.all((p_n >= 0.1) & (p_n <= 0.7)))
    assert inside / 10_000 >= 0.99


def test_discrete_supports_disjoint():
    for i in range(300):
        b = gen_discrete_batch(DEFAULTS, batch_rng(9, 0, i))
        m_n, m_a = b.params_used["m_n"], b.params_used["m_a"]
        assert np.all(b.values[b.labels == 0] < m_n)
        assert np.all((b.values[b.labels == 1] >= m_n) & (b.values[b.labels == 1] < m_n + m_a))
        assert b.values.dtype.kind == "i"


def test_render_examples():
    clean = SyntheticBatch(np.array([1.0, 2.0, 3.0]), np.zeros(3, int), CONTINUOUS)
    assert render_finetune_example(clean, Naming.ROW)["assistant"] == "All rows are normal."
    labels = np.zeros(10, int)
    labels[[3, 8]] = 1
    rec = render_finetune_example(SyntheticBatch(np.arange(10.0), labels, CONTINUOUS))
    assert rec["assistant"] == "Data 4, 9 are abnormal."
    assert rec["system"] == "Only answer data indices."
    assert rec["user"].startswith("Data 1 is 0.00. Data 2 is 1.00.")
    assert parse_response(rec["assistant"], 10).indices == {4, 9}
    assert rec["labels"] == labels.tolist() and rec["kind"] == "continuous"


def test_discrete_serialized_as_integers():
    b = SyntheticBatch(np.array([0, 2, 1]), np.array([0, 1, 0]), DISCRETE)
    rec = render_finetune_example(b)
    assert rec["user"].startswith("Data 1 is 0. Data 2 is 2. Data 3 is 1. Abnormal")


def test_corpus_split_sizes_and_kinds():
    train, val = build_corpus(2, 4)
    assert [b.kind for b in train] == [CONTINUOUS, DISCRETE]
    assert [b.kind for b in val] == [CONTINUOUS, CONTINUOUS, DISCRETE, DISCRETE]
    # disjoint streams between splits
    assert train[0].values.tobytes() != val[0].values.tobytes()


def test_corpus_deterministic():
    a, _ = build_corpus(6, 2, seed=3)
    b, _ = build_corpus(6, 2, seed=3)
    assert all(x.values.tobytes() == y.values.tobytes() for x, y in zip(a, b))


@pytest.mark.parametrize("counts", [(3, 2), (2, 1)])
def test_corpus_odd_counts(counts):
    with pytest.raises(ValueError):
        build_corpus(*counts)


def test_assistant_strings_match_answer_pattern():
    auto = compile_pattern(ANSWER_PATTERN)
    train, val = build_corpus(200, 20, seed=4)
    for b in train + val:
        assert auto.matches(render_finetune_example(b)["assistant"])


def test_jsonl_export(tmp_path):
    counts = export_corpus(tmp_path / "a", 4, 2)
    assert counts == {"train": 4, "val": 2}
    recs = read_jsonl(tmp_path / "a" / "train.jsonl")
    assert set(recs[0]) == {"system", "user", "assistant", "kind", "labels"}
    assert [r["kind"] for r in recs] == ["continuous", "continuous", "discrete", "discrete"]
    for r in recs:
        assert len(r["labels"]) == r["user"].count(" is ")
        assert set(parse_response(r["assistant"], len(r["labels"])).indices) == {
            i + 1 for i, v in enumerate(r["labels"]) if v
        }
    export_corpus(tmp_path / "b", 4, 2)
    for name in ("train.jsonl", "val.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    first = (tmp_path / "a" / "train.jsonl").read_text().splitlines()[0]
    assert json.loads(first) == recs[0]


@pytest.mark.parametrize(
    "kwargs", [{"n_low": 0}, {"n_low": 50, "n_high": 40}, {"pi_high": 1.5}, {"sigma_low": 0}, {"m_low": 0}, {"alpha": 0}]
)
def test_params_validation(kwargs):
    with pytest.raises(ValueError):
        GeneratorParams(**kwargs)
