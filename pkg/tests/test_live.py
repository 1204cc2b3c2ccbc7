"""Checks against a real chat-completions endpoint.

Deselected by default.  Run with::

    LLMAD_API_KEY=... LLMAD_BASE_URL=https://host/v1 LLMAD_MODEL=name \
        pytest -m live tests/test_live.py -s
"""

import os

import pytest

from llmad.backends import API_KEY_ENV, BackendConfig, ChatBackend, ChatMessage
from llmad.core import DetectorConfig
from llmad.eval import bundled_datasets, load_csv_dataset, subsample
from llmad.parser import parse_response
from llmad.serializer import build_prompt

pytestmark = [
    pytest.mark.live,
    pytest.mark.skipif(
        not (os.environ.get(API_KEY_ENV) and os.environ.get("LLMAD_BASE_URL") and os.environ.get("LLMAD_MODEL")),
        reason=f"needs {API_KEY_ENV}, LLMAD_BASE_URL and LLMAD_MODEL",
    ),
]


def test_c11_responses_parse():
    backend = ChatBackend(
        BackendConfig(
            base_url=os.environ["LLMAD_BASE_URL"],
            model_name=os.environ["LLMAD_MODEL"],
        )
    )
    config = DetectorConfig()
    datasets = bundled_datasets()
    total = parsed = 0
    for name in ("synth_small", "synth_clutter"):
        batch = subsample(load_csv_dataset(datasets[name]), max_rows=40, max_cols=3)
        for k in range(batch.n_cols):
            prompt = build_prompt(batch.column(k), config, column_index=k)
            text = backend.complete([ChatMessage("system", prompt.system), ChatMessage("user", prompt.user)])
            pred = parse_response(text, batch.n_rows)
            total += 1
            parsed += bool(pred.indices) or pred.abstained
    rate = parsed / total
    print(f"\ncriterion 11: {'PASS' if rate >= 0.95 else 'FAIL'}  {parsed}/{total} responses parsed")
    assert rate >= 0.95
