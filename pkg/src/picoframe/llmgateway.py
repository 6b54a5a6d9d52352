"""Chat-completion gateway with a disk cache and a deterministic mock backend.

The wire protocol is the ubiquitous chat-completions HTTP contract (single
user message), so any locally served or hosted model plugs in unchanged.
Responses are cached on disk keyed by a digest of the request; a warmed
cache replays a full run offline byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Protocol

import requests

from .corpus import LabeledSentence, bio_to_spans, detokenize
from .instructgen import NO_ENTITIES, serialize_extractions

FINISH_STOP = "stop"
FINISH_LENGTH = "length"
FINISH_ERROR = "error"

_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    model: str
    temperature: float = 0.0
    max_tokens: int = 512
    seed: int | None = None

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class GenerationResponse:
    text: str
    finish_reason: str
    latency_ms: int = 0

    @property
    def ok(self) -> bool:
        return self.finish_reason != FINISH_ERROR


def cache_key(req: GenerationRequest) -> str:
    """Digest over the response-determining request fields."""
    payload = json.dumps(
        {
            "model": req.model,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "prompt": req.prompt,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Backend(Protocol):
    def generate(self, req: GenerationRequest) -> GenerationResponse: ...


class MockOracleBackend:
    """Answers with the gold serialization of the sentence named in the prompt.

    The input sentence is read from the text after the final ``input: ``
    marker; unknown sentences get the empty-extraction sentinel. Output
    longer than ``max_tokens`` whitespace tokens is truncated with finish
    reason ``length``. Demonstrations are ignored entirely, which makes this
    backend a lossless stand-in for pipeline tests.
    """

    def __init__(self, sentences: Iterable[LabeledSentence]):
        self._gold = {
            detokenize(s.tokens): serialize_extractions(bio_to_spans(s)) for s in sentences
        }

    def generate(self, req: GenerationRequest) -> GenerationResponse:
        marker = "input: "
        pos = req.prompt.rfind("\n" + marker)
        if pos >= 0:
            start = pos + 1 + len(marker)
        elif req.prompt.startswith(marker):
            start = len(marker)
        else:
            return GenerationResponse(text=NO_ENTITIES, finish_reason=FINISH_STOP)
        end = req.prompt.find("\n", start)
        text = req.prompt[start:] if end < 0 else req.prompt[start:end]
        answer = self._gold.get(text, NO_ENTITIES)
        words = answer.split()
        if len(words) > req.max_tokens:
            return GenerationResponse(
                text=" ".join(words[: req.max_tokens]), finish_reason=FINISH_LENGTH
            )
        return GenerationResponse(text=answer, finish_reason=FINISH_STOP)


class HttpChatBackend:
    """POSTs to ``{base_url}/chat/completions`` with retry on transient failures."""

    def __init__(
        self,
        base_url: str,
        *,
        api_key_env: str = "OPENAI_API_KEY",
        timeout_s: float = 60.0,
        retries: int = 3,
        backoff_s: float = 0.5,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s
        self.retries = max(1, retries)
        self.backoff_s = backoff_s
        self._session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def generate(self, req: GenerationRequest) -> GenerationResponse:
        body = {
            "model": req.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        if req.seed is not None:
            body["seed"] = req.seed

        started = time.monotonic()
        for attempt in range(self.retries):
            try:
                resp = self._session.post(
                    f"{self.base_url}/chat/completions",
                    json=body,
                    headers=self._headers(),
                    timeout=self.timeout_s,
                )
            except requests.RequestException:
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff_s * (2**attempt))
                continue
            if resp.status_code in _RETRYABLE_STATUS:
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff_s * (2**attempt))
                continue
            latency = int(1000 * (time.monotonic() - started))
            if resp.status_code != 200:
                return GenerationResponse(text="", finish_reason=FINISH_ERROR, latency_ms=latency)
            try:
                choice = resp.json()["choices"][0]
                text = choice["message"]["content"]
                finish = FINISH_LENGTH if choice.get("finish_reason") == "length" else FINISH_STOP
            except (KeyError, IndexError, TypeError, ValueError):
                return GenerationResponse(text="", finish_reason=FINISH_ERROR, latency_ms=latency)
            return GenerationResponse(text=text, finish_reason=finish, latency_ms=latency)
        latency = int(1000 * (time.monotonic() - started))
        return GenerationResponse(text="", finish_reason=FINISH_ERROR, latency_ms=latency)


class Gateway:
    """Completion front door: counts backend calls and replays from the disk cache.

    Error responses are never cached, so a failed sentence is retried on the
    next run instead of poisoning replays. Cache writes go through a
    temp-file rename and tolerate concurrent writers.
    """

    def __init__(self, backend: Backend, cache_dir: str | Path | None = None):
        self.backend = backend
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self.stats = {"backend_calls": 0, "cache_hits": 0, "cache_misses": 0, "cache_corrupt": 0}
        self._lock = threading.Lock()

    def _bump(self, name: str) -> None:
        with self._lock:
            self.stats[name] += 1

    def complete(self, req: GenerationRequest) -> GenerationResponse:
        self._bump("backend_calls")
        return self.backend.generate(req)

    def cached_complete(self, req: GenerationRequest) -> GenerationResponse:
        if self.cache_dir is None:
            return self.complete(req)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        path = self.cache_dir / f"{cache_key(req)}.json"
        if path.exists():
            try:
                stored = json.loads(path.read_text(encoding="utf-8"))
                resp = GenerationResponse(**stored["response"])
            except (KeyError, TypeError, ValueError):
                self._bump("cache_corrupt")
            else:
                self._bump("cache_hits")
                return resp
        self._bump("cache_misses")
        resp = self.complete(req)
        if resp.ok:
            entry = {"request": asdict(req), "response": asdict(resp)}
            tmp = path.with_suffix(f".tmp{os.getpid()}.{threading.get_ident()}")
            tmp.write_text(
                json.dumps(entry, sort_keys=True, ensure_ascii=False, indent=1),
                encoding="utf-8",
            )
            os.replace(tmp, path)
        return resp
