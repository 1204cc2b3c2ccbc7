import json
import math

import httpx
import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from llmad.backends import (
    DIAGNOSTIC_HEADER,
    AuthenticationError,
    BackendConfig,
    BackendError,
    ChatBackend,
    ChatMessage,
    MockOracleBackend,
    ResponseFormatError,
    complete_chat,
    extract_column,
    mock_oracle_detect,
    serve_mock,
)
from llmad.core import DetectorConfig, Naming
from llmad.parser import parse_response
from llmad.serializer import build_prompt

C = "Abnormal data are different from the majority. Which data are abnormal?"


def two_sigma_direct(xs):
    n = len(xs)
    mean = sum(xs) / n
    sd = math.sqrt(sum((x - mean) ** 2 for x in xs) / n)
    return [i + 1 for i, x in enumerate(xs) if sd > 0 and abs(x - mean) > 2 * sd]


def test_oracle_examples():
    assert mock_oracle_detect([5, 5, 5, 5]) == []
    assert mock_oracle_detect([-1, 1]) == []
    col = [0, 0, 0, 0, 0, 50]
    mean = 50 / 6
    sd = math.sqrt((5 * mean**2 + (50 - mean) ** 2) / 6)
    assert mean == pytest.approx(8.333, abs=1e-3) and sd == pytest.approx(18.63, abs=1e-2)
    assert 50 - mean > 2 * sd
    assert mock_oracle_detect(col) == two_sigma_direct(col) == [6]
    assert mock_oracle_detect([0, 0, 99]) == []  # N=3 can never exceed two SDs
    assert mock_oracle_detect([0, 0, 0, 0, 0, 0, 99]) == [7]


def _margin_ok(xs):
    x = np.asarray(xs, dtype=float)
    sd = x.std()
    if sd == 0:
        return True
    dev = np.abs(x - x.mean())
    return bool(np.all(np.abs(dev - 2 * sd) > 1e-6 * (sd + 1)))


values = st.lists(st.integers(-1000, 1000), min_size=1, max_size=40)


@given(values)
def test_oracle_matches_direct_formula(xs):
    assume(_margin_ok(xs))
    assert mock_oracle_detect(xs) == two_sigma_direct(xs)


@given(values, st.sampled_from([2.0, -3.0, 0.5, 10.0, -0.25]), st.integers(-500, 500))
def test_oracle_affine_equivariant(xs, a, b):
    assume(_margin_ok(xs))
    moved = [a * x + b for x in xs]
    assert mock_oracle_detect(moved) == mock_oracle_detect(xs)


@given(values, st.randoms())
def test_oracle_permutation_equivariant(xs, rnd):
    assume(_margin_ok(xs))
    perm = list(range(len(xs)))
    rnd.shuffle(perm)
    shuffled = [xs[p] for p in perm]
    flagged = sorted(xs[i - 1] for i in mock_oracle_detect(xs))
    assert sorted(shuffled[i - 1] for i in mock_oracle_detect(shuffled)) == flagged


def test_extract_column_inverts_serialization():
    p = build_prompt([1.5, -2.25, 3.0], DetectorConfig(naming=Naming.ROW))
    assert extract_column(p.user) == [1.5, -2.25, 3.0]
    assert extract_column("Data 1 is 3. Data 2 is 4. Hello") == [3.0, 4.0]
    assert extract_column("hello there") is None
    assert extract_column("Data 2 is 3.00.") is None


# ---------------------------------------------------------------------------
# HTTP client
# ---------------------------------------------------------------------------


def _ok(content="Data 1 are abnormal."):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


def _client(responses, seen=None):
    it = iter(responses)

    def handler(request):
        if seen is not None:
            seen.append(request)
        r = next(it)
        if isinstance(r, Exception):
            raise r
        return r

    return httpx.Client(transport=httpx.MockTransport(handler))


MSGS = [ChatMessage("system", "Only answer data indices."), ChatMessage("user", "Data 1 is 1.00. " + C)]


def test_request_shape():
    seen = []
    cfg = BackendConfig(base_url="http://x/v1/", model_name="m", api_key="sk-test")
    assert complete_chat(cfg, MSGS, client=_client([_ok("hi")], seen)) == "hi"
    req = seen[0]
    assert str(req.url) == "http://x/v1/chat/completions"
    assert req.headers["Authorization"] == "Bearer sk-test"
    body = json.loads(req.content)
    assert body == {
        "model": "m",
        "messages": [m.to_dict() for m in MSGS],
        "temperature": 0.75,
        "top_p": 0.9,
    }


def test_provider_defaults_omit_sampling_fields(monkeypatch):
    monkeypatch.delenv("LLMAD_API_KEY", raising=False)
    seen = []
    cfg = BackendConfig(base_url="http://x", provider_defaults=True)
    complete_chat(cfg, MSGS, client=_client([_ok()], seen))
    body = json.loads(seen[0].content)
    assert "temperature" not in body and "top_p" not in body
    assert "Authorization" not in seen[0].headers


def test_api_key_from_environment(monkeypatch):
    monkeypatch.setenv("LLMAD_API_KEY", "env-key")
    seen = []
    complete_chat(BackendConfig(base_url="http://x"), MSGS, client=_client([_ok()], seen))
    assert seen[0].headers["Authorization"] == "Bearer env-key"


def test_retry_429_then_success():
    seen, sleeps = [], []
    client = _client([httpx.Response(429), httpx.Response(429), _ok("done")], seen)
    out = complete_chat(BackendConfig(base_url="http://x"), MSGS, client=client, sleep=sleeps.append)
    assert out == "done"
    assert len(seen) == 3
    assert len(sleeps) == 2 and 1.0 <= sleeps[0] <= 1.1 and 2.0 <= sleeps[1] <= 2.2


def test_401_is_fatal_without_retry():
    seen = []
    with pytest.raises(AuthenticationError):
        complete_chat(BackendConfig(base_url="http://x"), MSGS, client=_client([httpx.Response(401)], seen), sleep=lambda s: None)
    assert len(seen) == 1


def test_400_is_fatal():
    with pytest.raises(BackendError):
        complete_chat(BackendConfig(base_url="http://x"), MSGS, client=_client([httpx.Response(400)]), sleep=lambda s: None)


def test_5xx_and_transport_errors_exhaust_retries():
    seen = []
    responses = [httpx.Response(503), httpx.ConnectError("boom"), httpx.Response(500)]
    cfg = BackendConfig(base_url="http://x", max_retries=2)
    with pytest.raises(BackendError, match="after 3 attempts"):
        complete_chat(cfg, MSGS, client=_client(responses, seen), sleep=lambda s: None)
    assert len(seen) == 3


@pytest.mark.parametrize("body", [{"choices": []}, {"nope": 1}, {"choices": [{"message": {"content": 3}}]}])
def test_malformed_body(body):
    with pytest.raises(ResponseFormatError):
        complete_chat(BackendConfig(base_url="http://x"), MSGS, client=_client([httpx.Response(200, json=body)]))


def test_needs_user_message():
    with pytest.raises(ValueError):
        complete_chat(BackendConfig(), [ChatMessage("system", "x")])


@pytest.mark.parametrize("kwargs", [{"temperature": -1}, {"top_p": 0}, {"top_p": 1.5}, {"max_retries": -1}])
def test_backend_config_bounds(kwargs):
    with pytest.raises(ValueError):
        BackendConfig(**kwargs)


# ---------------------------------------------------------------------------
# mock server
# ---------------------------------------------------------------------------


@pytest.fixture
def server():
    with serve_mock(0) as srv:
        yield srv


def _user(values):
    return build_prompt(values).user


def test_server_answers_in_grammar(server):
    cfg = BackendConfig(base_url=server.base_url, max_retries=0)
    col = [0, 0, 0, 0, 0, 0, 99]
    msgs = [ChatMessage("system", "Only answer data indices."), ChatMessage("user", _user(col))]
    assert complete_chat(cfg, msgs) == "Data 7 are abnormal."
    msgs[1] = ChatMessage("user", _user([1, 2, 3]))
    assert complete_chat(cfg, msgs) == "All data are normal."


def test_server_example_from_prompt_text(server):
    text = f"Data 1 is 0.00. Data 2 is 0.00. Data 3 is 99.00. {C}"
    r = httpx.post(server.base_url + "/chat/completions", json={"model": "m", "messages": [{"role": "user", "content": text}]})
    # three points: |99 - 33| = 66 < 2 * 46.67, so the two-sigma rule flags nothing
    assert r.json()["choices"][0]["message"]["content"] == "All data are normal."


def test_server_diagnostic_on_unreadable_prompt(server):
    r = httpx.post(server.base_url + "/chat/completions", json={"model": "m", "messages": [{"role": "user", "content": "hi"}]})
    assert r.status_code == 200
    assert r.json()["choices"][0]["message"]["content"] == "All data are normal."
    assert DIAGNOSTIC_HEADER in r.headers


@pytest.mark.parametrize("payload", [b"not json", b'{"messages": [{"role": "wizard", "content": "x"}]}', b"{}"])
def test_server_malformed_body(server, payload):
    r = httpx.post(server.base_url + "/chat/completions", content=payload, headers={"Content-Type": "application/json"})
    assert r.status_code == 400


def test_server_row_naming():
    with serve_mock(0, Naming.ROW) as srv:
        cfg = BackendConfig(base_url=srv.base_url, max_retries=0)
        assert complete_chat(cfg, [ChatMessage("user", _user([1, 2]))]) == "All rows are normal."


def test_bind_failure(server):
    with pytest.raises(OSError):
        serve_mock(server.port)


@given(st.lists(st.integers(-5000, 5000).map(lambda v: v / 100), min_size=1, max_size=60))
def test_loop_closure(server_url, xs):
    assume(_margin_ok(xs))
    backend = ChatBackend(BackendConfig(base_url=server_url, max_retries=0))
    p = build_prompt(xs)
    text = backend.complete([ChatMessage("system", p.system), ChatMessage("user", p.user)])
    assert parse_response(text, len(xs)).sorted() == mock_oracle_detect(xs)
    assert MockOracleBackend().complete([ChatMessage("user", p.user)]) == text


@pytest.fixture(scope="module")
def server_url():
    with serve_mock(0) as srv:
        yield srv.base_url


def test_mock_backend_counts_calls():
    be = MockOracleBackend()
    be.complete([ChatMessage("user", _user([1.0]))])
    assert be.calls == 1
