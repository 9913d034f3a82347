"""Text-generation clients.

All pipeline stages that need a language model go through ``complete``:

* ``HttpClient`` POSTs ``{"prompt","max_tokens","temperature","stop"}`` to
  ``{endpoint}/complete`` and expects ``{"text","model_tag"}`` back.
* ``MockClient`` replays canned responses stored as ``<hash>.json`` files,
  where ``<hash>`` is the first 16 hex chars of SHA-256 over the prompt.
* ``RecordingClient`` wraps a live client and writes those files.
* ``EchoClient`` returns the first ``Attributes:`` block found in the prompt.
"""

import hashlib
import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import httpx

log = logging.getLogger(__name__)

ENV_ENDPOINT = "GEN_ENDPOINT"
ENV_API_KEY = "GEN_API_KEY"
ENV_MOCK_DIR = "GEN_MOCK_DIR"


class GenerationError(RuntimeError):
    """Any failure to obtain a completion."""


class TransportError(GenerationError):
    def __init__(self, message: str, status: Optional[int] = None):
        super().__init__(message)
        self.status = status


class ProtocolError(GenerationError):
    pass


class MockNotFoundError(GenerationError):
    def __init__(self, prompt_hash: str, mock_dir):
        super().__init__(f"no canned response for prompt hash {prompt_hash} in {mock_dir}")
        self.prompt_hash = prompt_hash


@dataclass(frozen=True)
class GenRequest:
    prompt: str
    max_tokens: int = 512
    temperature: float = 0.0
    stop: Optional[tuple] = None

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.stop is not None:
            object.__setattr__(self, "stop", tuple(self.stop))

    def to_json(self) -> dict:
        return {
            "prompt": self.prompt,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
            "stop": list(self.stop) if self.stop else None,
        }


@dataclass(frozen=True)
class GenResponse:
    text: str
    model_tag: str = ""
    latency_ms: float = 0.0


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


def apply_stop(text: str, stop) -> str:
    if not stop:
        return text
    cut = len(text)
    for s in stop:
        if s:
            pos = text.find(s)
            if pos != -1:
                cut = min(cut, pos)
    return text[:cut]


class GeneratorClient:
    """Base class; subclasses implement ``_complete``."""

    def complete(self, req: GenRequest) -> GenResponse:
        start = time.perf_counter()
        resp = self._complete(req)
        latency = resp.latency_ms or (time.perf_counter() - start) * 1000
        return GenResponse(apply_stop(resp.text, req.stop), resp.model_tag, latency)

    def _complete(self, req: GenRequest) -> GenResponse:
        raise NotImplementedError

    def __call__(self, prompt: str, **kwargs) -> str:
        return self.complete(GenRequest(prompt, **kwargs)).text


class HttpClient(GeneratorClient):
    def __init__(
        self,
        endpoint: str,
        api_key: Optional[str] = None,
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        max_in_flight: int = 4,
        transport: Optional[httpx.BaseTransport] = None,
        sleep=time.sleep,
    ):
        self.url = endpoint.rstrip("/") + "/complete"
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._slots = threading.Semaphore(max_in_flight)
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._http = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def _complete(self, req: GenRequest) -> GenResponse:
        last_error: Optional[Exception] = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                delay = self.backoff_base * 2 ** (attempt - 1)
                self._sleep(delay + random.uniform(0, delay / 2))
            try:
                with self._slots:
                    resp = self._http.post(self.url, json=req.to_json())
            except httpx.TransportError as exc:
                last_error = TransportError(f"request to {self.url} failed: {exc}")
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last_error = TransportError(f"{self.url} returned {resp.status_code}", resp.status_code)
                continue
            if resp.status_code >= 300:
                raise TransportError(f"{self.url} returned {resp.status_code}", resp.status_code)
            try:
                body = resp.json()
                text = body["text"]
            except (ValueError, KeyError, TypeError):
                raise ProtocolError(f"malformed response body from {self.url}") from None
            if not isinstance(text, str):
                raise ProtocolError(f"'text' field from {self.url} is not a string")
            return GenResponse(text, str(body.get("model_tag", "")))
        raise last_error


class MockClient(GeneratorClient):
    """Offline replay of recorded completions."""

    def __init__(self, mock_dir):
        self.mock_dir = Path(mock_dir)

    def _complete(self, req: GenRequest) -> GenResponse:
        h = prompt_hash(req.prompt)
        path = self.mock_dir / f"{h}.json"
        if not path.exists():
            raise MockNotFoundError(h, self.mock_dir)
        body = json.loads(path.read_text(encoding="utf-8"))
        return GenResponse(body["text"], body.get("model_tag", "mock"), 0.0)


def record_response(mock_dir, req: GenRequest, response: GenResponse) -> Path:
    """Persist ``response`` so a ``MockClient`` over ``mock_dir`` replays it."""
    mock_dir = Path(mock_dir)
    mock_dir.mkdir(parents=True, exist_ok=True)
    path = mock_dir / f"{prompt_hash(req.prompt)}.json"
    payload = {"prompt": req.prompt, "text": response.text, "model_tag": response.model_tag}
    path.write_text(json.dumps(payload, ensure_ascii=False, indent=1), encoding="utf-8")
    return path


class RecordingClient(GeneratorClient):
    def __init__(self, inner: GeneratorClient, mock_dir):
        self.inner = inner
        self.mock_dir = Path(mock_dir)

    def _complete(self, req: GenRequest) -> GenResponse:
        resp = self.inner._complete(req)
        record_response(self.mock_dir, req, resp)
        return resp


class EchoClient(GeneratorClient):
    """Answers with the first ``Attributes:`` block of the prompt.

    With a few-shot prompt whose top-ranked example is the target itself, this
    reproduces the gold annotation, which makes it a self-consistency oracle for
    the extraction harness. Prompts without such a block get an empty answer.
    """

    def _complete(self, req: GenRequest) -> GenResponse:
        marker = "\nAttributes:"
        pos = req.prompt.find(marker)
        if pos == -1:
            return GenResponse("", "echo")
        block = req.prompt[pos + len(marker) :]
        end = block.find("\n\n")
        if end != -1:
            block = block[:end]
        return GenResponse(block.strip(), "echo")


class StaticClient(GeneratorClient):
    """Always returns the same text."""

    def __init__(self, text: str):
        self.text = text

    def _complete(self, req: GenRequest) -> GenResponse:
        return GenResponse(self.text, "static")


def client_from_env(mode: Optional[str] = None, mock_dir=None) -> Optional[GeneratorClient]:
    """Build a client for ``mode`` in {http, mock, record, echo, none}.

    Endpoint and key come from the environment; ``mock_dir`` falls back to
    ``GEN_MOCK_DIR``. Without a mode, mock is used when a mock directory is
    known and no client otherwise.
    """
    mock_dir = mock_dir or os.environ.get(ENV_MOCK_DIR)
    mode = (mode or ("mock" if mock_dir else "none")).lower()
    if mode == "none":
        return None
    if mode == "echo":
        return EchoClient()
    if mode == "mock":
        if not mock_dir:
            raise GenerationError(f"mock mode needs a mock directory ({ENV_MOCK_DIR})")
        return MockClient(mock_dir)
    if mode in ("http", "record"):
        endpoint = os.environ.get(ENV_ENDPOINT)
        if not endpoint:
            raise GenerationError(f"{mode} mode needs {ENV_ENDPOINT}")
        client = HttpClient(endpoint, os.environ.get(ENV_API_KEY))
        if mode == "record":
            if not mock_dir:
                raise GenerationError(f"record mode needs a mock directory ({ENV_MOCK_DIR})")
            return RecordingClient(client, mock_dir)
        return client
    raise ValueError(f"unknown client mode {mode!r}")
