"""Answer sources: an OpenAI-compatible chat client and a two-sigma mock oracle.

The mock reads the serialized column back out of the user message, so an
in-process ``MockOracleBackend`` and the HTTP mock server give identical
answers for identical prompts.
"""

from __future__ import annotations

import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Iterable, Protocol, Sequence

import httpx
import numpy as np

from llmad.core import Naming
from llmad.parser import render_response

logger = logging.getLogger(__name__)

API_KEY_ENV = "LLMAD_API_KEY"
DIAGNOSTIC_HEADER = "X-Mock-Diagnostic"
ROLES = ("system", "user", "assistant")


class BackendError(RuntimeError):
    """The answer source could not produce a reply."""


class AuthenticationError(BackendError):
    pass


class ResponseFormatError(BackendError):
    pass


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown chat role {self.role!r}")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class BackendConfig:
    base_url: str = "http://127.0.0.1:8000/v1"
    model_name: str = "mistral-ad"
    temperature: float = 0.75
    top_p: float = 0.9
    max_retries: int = 5
    timeout: float = 60.0
    api_key: str | None = field(default=None, repr=False)
    provider_defaults: bool = False
    backoff_base: float = 1.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    def resolved_api_key(self) -> str | None:
        return self.api_key if self.api_key else os.environ.get(API_KEY_ENV)


class Backend(Protocol):
    def complete(self, messages: Sequence[ChatMessage]) -> str: ...


def _as_messages(messages: Iterable) -> list[ChatMessage]:
    out = []
    for m in messages:
        out.append(m if isinstance(m, ChatMessage) else ChatMessage(m["role"], m["content"]))
    return out


def _retryable(status: int) -> bool:
    return status == 429 or 500 <= status < 600


def complete_chat(
    config: BackendConfig,
    messages: Sequence[ChatMessage],
    client: httpx.Client | None = None,
    sleep=time.sleep,
) -> str:
    """POST a chat-completions request and return the first choice's content.

    429 and 5xx replies and transport errors are retried with exponential
    backoff (base ``config.backoff_base`` seconds, factor 2, plus jitter);
    other 4xx replies fail at once.
    """
    messages = _as_messages(messages)
    if not any(m.role == "user" for m in messages):
        raise ValueError("at least one user message is required")
    body: dict = {
        "model": config.model_name,
        "messages": [m.to_dict() for m in messages],
    }
    if not config.provider_defaults:
        body["temperature"] = config.temperature
        body["top_p"] = config.top_p
    headers = {"Content-Type": "application/json"}
    key = config.resolved_api_key()
    if key:
        headers["Authorization"] = f"Bearer {key}"
    url = config.base_url.rstrip("/") + "/chat/completions"

    own_client = client is None
    if own_client:
        client = httpx.Client(timeout=config.timeout)
    try:
        last_error: Exception | None = None
        for attempt in range(config.max_retries + 1):
            if attempt:
                delay = config.backoff_base * 2 ** (attempt - 1)
                sleep(delay + random.uniform(0, 0.1 * delay))
            try:
                resp = client.post(url, json=body, headers=headers)
            except httpx.TransportError as exc:
                last_error = exc
                logger.warning("transport error on attempt %d: %s", attempt + 1, exc)
                continue
            if resp.status_code in (401, 403):
                raise AuthenticationError(f"{resp.status_code} from {url}: {resp.text[:200]}")
            if _retryable(resp.status_code):
                last_error = BackendError(f"HTTP {resp.status_code} from {url}")
                logger.warning("HTTP %d on attempt %d, retrying", resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise BackendError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise ResponseFormatError(f"malformed completion body: {resp.text[:200]}") from exc
            if not isinstance(content, str):
                raise ResponseFormatError("choices[0].message.content is not a string")
            return content
        raise BackendError(
            f"giving up on {url} after {config.max_retries + 1} attempts: {last_error}"
        )
    finally:
        if own_client:
            client.close()


class ChatBackend:
    """Backend speaking the chat-completions wire protocol."""

    def __init__(self, config: BackendConfig, client: httpx.Client | None = None):
        self.config = config
        self._client = client

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        return complete_chat(self.config, messages, client=self._client)


# ---------------------------------------------------------------------------
# mock oracle
# ---------------------------------------------------------------------------


def mock_oracle_detect(column: Sequence[float]) -> list[int]:
    """1-based indices lying strictly more than two population SDs from the mean."""
    x = np.asarray(column, dtype=float)
    if x.size == 0:
        return []
    mean = x.mean()
    sigma = x.std()
    if sigma == 0:
        return []
    return [int(i) + 1 for i in np.flatnonzero(np.abs(x - mean) > 2 * sigma)]


_SENTENCE = re.compile(r"(Data|Row) (\d+) is (-?\d+(?:\.\d+)?)\.(?: |$)")


def extract_column(user_text: str) -> list[float] | None:
    """Invert the serialization template; None if the text does not follow it."""
    values = []
    pos = 0
    noun = None
    for expected, m in enumerate(_SENTENCE.finditer(user_text), start=1):
        if m.start() != pos or int(m.group(2)) != expected:
            break
        if noun is None:
            noun = m.group(1)
        elif m.group(1) != noun:
            return None
        values.append(float(m.group(3)))
        pos = m.end()
    return values or None


def mock_answer(messages: Sequence[ChatMessage], naming: Naming | str = Naming.DATA) -> tuple[str, str | None]:
    """Answer for a prompt and an optional diagnostic when the prompt was unreadable."""
    naming = Naming.parse(naming)
    users = [m for m in _as_messages(messages) if m.role == "user"]
    if not users:
        return naming.clean_response, "no user message"
    column = extract_column(users[-1].content)
    if column is None:
        return naming.clean_response, "user message does not follow the serialization template"
    return render_response(mock_oracle_detect(column), naming), None


class MockOracleBackend:
    """In-process stand-in for a fine-tuned detector."""

    def __init__(self, naming: Naming | str = Naming.DATA):
        self.naming = Naming.parse(naming)
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        with self._lock:
            self.calls += 1
        return mock_answer(messages, self.naming)[0]


class _MockHandler(BaseHTTPRequestHandler):
    naming: Naming = Naming.DATA
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        logger.debug("mock server: " + fmt, *args)

    def _send(self, status: int, payload: dict, extra: dict | None = None):
        data = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        for k, v in (extra or {}).items():
            self.send_header(k, v)
        self.end_headers()
        self.wfile.write(data)

    def do_POST(self):
        if not self.path.rstrip("/").endswith("/chat/completions"):
            self._send(404, {"error": {"message": f"no route {self.path}"}})
            return
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length)
        try:
            body = json.loads(raw)
            messages = [ChatMessage(m["role"], m["content"]) for m in body["messages"]]
            if not isinstance(body.get("model", ""), str):
                raise TypeError("model must be a string")
        except (ValueError, KeyError, TypeError) as exc:
            self._send(400, {"error": {"message": f"malformed request: {exc}"}})
            return
        answer, diagnostic = mock_answer(messages, self.naming)
        payload = {
            "id": "mock-0",
            "object": "chat.completion",
            "model": body.get("model", "mock"),
            "choices": [
                {
                    "index": 0,
                    "message": {"role": "assistant", "content": answer},
                    "finish_reason": "stop",
                }
            ],
        }
        self._send(200, payload, {DIAGNOSTIC_HEADER: diagnostic} if diagnostic else None)


@dataclass
class MockServer:
    server: ThreadingHTTPServer
    thread: threading.Thread

    @property
    def port(self) -> int:
        return self.server.server_address[1]

    @property
    def base_url(self) -> str:
        host = self.server.server_address[0]
        return f"http://{host}:{self.port}/v1"

    def shutdown(self):
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()


def serve_mock(port: int = 0, naming: Naming | str = Naming.DATA, host: str = "127.0.0.1") -> MockServer:
    """Start the mock chat-completions server on a background thread.

    ``port=0`` picks a free port.  Raises OSError if the port is taken.
    """
    handler = type("MockHandler", (_MockHandler,), {"naming": Naming.parse(naming)})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    thread = threading.Thread(target=server.serve_forever, name="llmad-mock", daemon=True)
    thread.start()
    return MockServer(server, thread)
