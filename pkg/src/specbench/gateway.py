"""Uniform interface to a text-completion model.

Three interchangeable backends: live HTTP (OpenAI-style chat completions),
deterministic replay from a digest-keyed fixture log, and scripted
responses for tests. Every request is canonicalized and hashed; that
digest keys the fixture log, which is what makes a recorded pipeline run
replayable bit-for-bit and a killed run resumable without re-spending
model calls.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

from .errors import (
    AuthMissing,
    FixtureMiss,
    GatewayFailure,
    TransportFailure,
    TruncatedResponse,
)

DEFAULT_TEMPERATURE = 0.7
DEFAULT_MODEL_ID = "gpt-4"
DEFAULT_MAX_OUTPUT = 4096
DEFAULT_DEADLINE = 120.0

API_KEY_ENV = "MODEL_API_KEY"
API_URL_ENV = "MODEL_API_URL"


class BackendKind(str, Enum):
    LIVE = "live"
    REPLAY = "replay"
    SCRIPTED = "scripted"


@dataclass(frozen=True)
class ChatRequest:
    prompt_text: str
    temperature: float = DEFAULT_TEMPERATURE
    model_id: str = DEFAULT_MODEL_ID
    max_output: int = DEFAULT_MAX_OUTPUT

    def __post_init__(self):
        if not self.prompt_text:
            raise ValueError("prompt_text must be non-empty")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 1]")
        if self.max_output <= 0:
            raise ValueError("max_output must be positive")


@dataclass(frozen=True)
class ModelResponse:
    raw_text: str
    backend: BackendKind
    request_digest: str


def fixture_key(request: ChatRequest) -> str:
    """Content hash of the canonicalized request.

    Canonical form fixes field order and number formatting, so the digest
    is stable across process runs and platforms. No semantic normalization:
    any byte difference in the prompt changes the key.
    """
    canonical = json.dumps(
        {
            "max_output": request.max_output,
            "model_id": request.model_id,
            "prompt_text": request.prompt_text,
            "temperature": format(request.temperature, ".6f"),
        },
        sort_keys=True,
        ensure_ascii=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _prompt_sha(prompt_text: str) -> str:
    return hashlib.sha256(prompt_text.encode("utf-8")).hexdigest()


class FixtureStore:
    """Append-only JSON-lines log of (digest -> response), deduplicated.

    One object per line: {digest, model_id, temperature, prompt_sha,
    response_text}. Appends are serialized through a lock and keyed by
    digest, so retries never duplicate entries.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, str] = {}
        if self.path.exists():
            for line_no, line in enumerate(self.path.read_text(encoding="utf-8").splitlines(), 1):
                if not line.strip():
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise GatewayFailure(f"{self.path}:{line_no}: bad fixture line ({exc})") from None
                self._entries[entry["digest"]] = entry["response_text"]

    def __contains__(self, digest: str) -> bool:
        return digest in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, digest: str) -> str | None:
        return self._entries.get(digest)

    def append(self, request: ChatRequest, response_text: str) -> None:
        digest = fixture_key(request)
        with self._lock:
            if digest in self._entries:
                return
            self._entries[digest] = response_text
            entry = {
                "digest": digest,
                "model_id": request.model_id,
                "temperature": request.temperature,
                "prompt_sha": _prompt_sha(request.prompt_text),
                "response_text": response_text,
            }
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def digest_of_file(self) -> str | None:
        """sha256 of the backing file, for run manifests."""
        if not self.path.exists():
            return None
        return hashlib.sha256(self.path.read_bytes()).hexdigest()


class ScriptedBackend:
    """Deterministic canned responses for tests.

    `responses` maps request digests to texts; `script`, when given, is a
    fallback called with the ChatRequest and must return the response text.
    """

    kind = BackendKind.SCRIPTED

    def __init__(
        self,
        responses: dict[str, str] | None = None,
        script: Callable[[ChatRequest], str] | None = None,
    ):
        self.responses = dict(responses or {})
        self.script = script
        self.calls: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> ModelResponse:
        self.calls.append(request)
        digest = fixture_key(request)
        if digest in self.responses:
            text = self.responses[digest]
        elif self.script is not None:
            text = self.script(request)
        else:
            raise FixtureMiss(digest)
        return ModelResponse(raw_text=text, backend=self.kind, request_digest=digest)


class ReplayBackend:
    """Answers only from a recorded fixture log; read-only and concurrent."""

    kind = BackendKind.REPLAY

    def __init__(self, store: FixtureStore):
        self.store = store

    def complete(self, request: ChatRequest) -> ModelResponse:
        digest = fixture_key(request)
        text = self.store.get(digest)
        if text is None:
            raise FixtureMiss(digest)
        return ModelResponse(raw_text=text, backend=self.kind, request_digest=digest)


def _requests_transport(url: str, headers: dict, payload: dict, timeout: float):
    import requests

    try:
        resp = requests.post(url, headers=headers, json=payload, timeout=timeout)
    except requests.RequestException as exc:
        raise TransportFailure(str(exc)) from exc
    if resp.status_code in (429,) or resp.status_code >= 500:
        raise TransportFailure(f"HTTP {resp.status_code}: {resp.text[:200]}")
    if resp.status_code != 200:
        raise TransportFailure(f"HTTP {resp.status_code}: {resp.text[:200]} (not retried)")
    return resp.json()


class LiveBackend:
    """OpenAI-style chat-completions client with bounded retries.

    Every call has a transport deadline; transient failures are retried
    with exponential backoff (3 attempts by default). A response the
    provider cut at the token budget raises TruncatedResponse rather than
    being silently used.
    """

    kind = BackendKind.LIVE

    def __init__(
        self,
        api_url: str | None = None,
        api_key: str | None = None,
        deadline: float = DEFAULT_DEADLINE,
        max_attempts: int = 3,
        backoff: float = 1.0,
        transport: Callable | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.api_url = api_url or os.environ.get(API_URL_ENV, "")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.deadline = deadline
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.transport = transport or _requests_transport
        self.sleeper = sleeper

    def complete(self, request: ChatRequest) -> ModelResponse:
        if not self.api_key:
            raise AuthMissing(f"{API_KEY_ENV} is not set")
        if not self.api_url:
            raise AuthMissing(f"{API_URL_ENV} is not set")
        payload = {
            "model": request.model_id,
            "messages": [{"role": "user", "content": request.prompt_text}],
            "temperature": request.temperature,
            "max_tokens": request.max_output,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"}
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                body = self.transport(self.api_url, headers, payload, self.deadline)
                break
            except TransportFailure as exc:
                last_error = exc
                if "(not retried)" in str(exc) or attempt == self.max_attempts - 1:
                    raise TransportFailure(
                        f"giving up after {attempt + 1} attempt(s): {exc}"
                    ) from exc
                self.sleeper(self.backoff * (2**attempt))
        else:  # pragma: no cover - loop always breaks or raises
            raise TransportFailure(str(last_error))

        try:
            choice = body["choices"][0]
            text = choice["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportFailure(f"malformed provider response: {exc}") from exc
        digest = fixture_key(request)
        if choice.get("finish_reason") == "length":
            raise TruncatedResponse(f"response for digest {digest} hit the token budget")
        return ModelResponse(raw_text=text, backend=self.kind, request_digest=digest)


@dataclass
class Gateway:
    """Backend plus optional record store.

    With a record store attached, a request whose digest is already on file
    is answered from the log (zero backend calls); fresh responses are
    appended. That gives record-once/replay-forever semantics on top of any
    backend.
    """

    backend: object
    record_store: FixtureStore | None = None
    defaults: dict = field(default_factory=dict)

    def request(self, prompt_text: str) -> ChatRequest:
        return ChatRequest(prompt_text=prompt_text, **self.defaults)

    def complete(self, request: ChatRequest) -> ModelResponse:
        if self.record_store is not None:
            digest = fixture_key(request)
            recorded = self.record_store.get(digest)
            if recorded is not None:
                return ModelResponse(
                    raw_text=recorded, backend=BackendKind.REPLAY, request_digest=digest
                )
        response = self.backend.complete(request)
        if self.record_store is not None:
            self.record_store.append(request, response.raw_text)
        return response
