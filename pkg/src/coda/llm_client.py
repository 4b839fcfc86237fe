"""Provider-agnostic chat-completion transport.

Responses are cached on disk, content-addressed by a digest of the full
request, so re-running an experiment against a warm cache costs nothing and
reproduces identical texts. Transient provider failures (rate limits,
server errors, connection drops) are retried with exponentially growing,
fully jittered backoff; authentication and malformed-response failures are
not. A counting gate bounds simultaneous provider calls, and per-key locks
guarantee one provider invocation per distinct request even under
concurrent identical submissions.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
import time
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Protocol

import httpx

from .prompting import ChatRequest

__all__ = [
    "Completion",
    "ProviderConfig",
    "RequestMeta",
    "ProviderError",
    "TransientProviderError",
    "AuthenticationError",
    "MalformedResponseError",
    "ScriptedMissError",
    "RetriesExhaustedError",
    "cache_key",
    "pair_key",
    "HttpProvider",
    "ScriptedProvider",
    "LLMClient",
]

DEFAULT_API_KEY_ENV = "CODA_API_KEY"
BASE_URL_ENV = "CODA_BASE_URL"
CACHE_DIR_ENV = "CODA_CACHE_DIR"
DEFAULT_CACHE_DIR = ".coda-cache"


class ProviderError(Exception):
    """Base class for provider-side failures."""


class TransientProviderError(ProviderError):
    """Retryable: rate limits, 5xx-equivalent responses, connection drops."""


class AuthenticationError(ProviderError):
    """Non-retryable: missing or rejected credentials."""


class MalformedResponseError(ProviderError):
    """Non-retryable: the provider answered with an unreadable body."""


class ScriptedMissError(ProviderError):
    """The scripted provider has no entry for this request."""


class RetriesExhaustedError(ProviderError):
    def __init__(self, attempts: int, last: ProviderError):
        super().__init__(f"gave up after {attempts} attempts: {last}")
        self.attempts = attempts
        self.last = last


@dataclass(frozen=True)
class Completion:
    text: str
    model: str
    cached: bool
    latency_ms: int
    attempt_count: int


@dataclass(frozen=True)
class ProviderConfig:
    base_url: str = ""
    api_key_env: str = DEFAULT_API_KEY_ENV
    max_in_flight: int = 4
    max_retries: int = 3

    def __post_init__(self) -> None:
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class RequestMeta:
    """Out-of-band request identity, used by scripted providers."""

    passage_id: str
    code_id: str | None = None


def _request_payload(req: ChatRequest) -> dict:
    return {
        "model": req.model,
        "messages": [{"role": m.role.value, "content": m.content} for m in req.messages],
        "temperature": req.temperature,
        "top_p": req.top_p,
    }


def cache_key(req: ChatRequest) -> str:
    """Digest over (model, ordered roled messages, temperature, top_p) only."""
    canon = json.dumps(_request_payload(req), ensure_ascii=False, sort_keys=True)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def pair_key(passage_id: str, code_id: str | None) -> str:
    """Script key addressing a request by its work cell rather than content."""
    return f"{passage_id}::{code_id}" if code_id else passage_id


class Provider(Protocol):
    def complete_text(self, req: ChatRequest, meta: RequestMeta | None) -> str: ...

    def describe(self) -> dict: ...


class ScriptedProvider:
    """Deterministic test double: a script maps request keys to reply text.

    Keys are tried in order: the request's cache key, then
    "{passage_id}::{code_id}", then the bare passage id, then the "*"
    fallback. An unmatched request raises ScriptedMissError.
    """

    def __init__(self, script: Mapping[str, str]):
        self.script = dict(script)
        self._lock = threading.Lock()
        self.calls = 0

    def complete_text(self, req: ChatRequest, meta: RequestMeta | None) -> str:
        with self._lock:
            self.calls += 1
        candidates = [cache_key(req)]
        if meta is not None:
            candidates.append(pair_key(meta.passage_id, meta.code_id))
            candidates.append(meta.passage_id)
        candidates.append("*")
        for key in candidates:
            if key in self.script:
                return self.script[key]
        raise ScriptedMissError(f"no scripted response for keys {candidates[:-1]}")

    def describe(self) -> dict:
        digest = hashlib.sha256(
            json.dumps(self.script, ensure_ascii=False, sort_keys=True).encode("utf-8")
        ).hexdigest()
        return {"kind": "scripted", "script_digest": digest}


class HttpProvider:
    """Chat-completions JSON endpoint: POST {base_url}/chat/completions."""

    def __init__(self, config: ProviderConfig, timeout: float = 60.0):
        base_url = config.base_url or os.environ.get(BASE_URL_ENV, "")
        if not base_url:
            raise ValueError(f"no base URL configured (set {BASE_URL_ENV} or ProviderConfig)")
        self.base_url = base_url.rstrip("/")
        self.api_key_env = config.api_key_env or DEFAULT_API_KEY_ENV
        self.timeout = timeout

    def _api_key(self) -> str:
        key = os.environ.get(self.api_key_env, "")
        if not key:
            raise AuthenticationError(
                f"no API key in environment variable {self.api_key_env}"
            )
        return key

    def complete_text(self, req: ChatRequest, meta: RequestMeta | None) -> str:
        key = self._api_key()  # checked before any network activity
        try:
            response = httpx.post(
                f"{self.base_url}/chat/completions",
                json=_request_payload(req),
                headers={"Authorization": f"Bearer {key}"},
                timeout=self.timeout,
            )
        except httpx.HTTPError as exc:
            raise TransientProviderError(f"connection failure: {exc}") from exc
        if response.status_code in (401, 403):
            raise AuthenticationError(f"provider rejected credentials ({response.status_code})")
        if response.status_code == 429 or response.status_code >= 500:
            raise TransientProviderError(f"provider returned {response.status_code}")
        if response.status_code != 200:
            raise ProviderError(f"provider returned {response.status_code}: {response.text[:200]}")
        try:
            body = response.json()
            content = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(f"unreadable provider response: {exc}") from exc
        if content is None:
            content = ""
        if not isinstance(content, str):
            raise MalformedResponseError("provider message content is not text")
        return content

    def describe(self) -> dict:
        return {"kind": "http", "base_url": self.base_url}


class LLMClient:
    """Caching, retrying, concurrency-bounded front end over a provider."""

    def __init__(
        self,
        provider: Provider,
        cache_dir: str | os.PathLike | None = None,
        *,
        max_in_flight: int = 4,
        max_retries: int = 3,
        backoff_base: float = 1.0,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self.provider = provider
        self.cache_dir = Path(
            cache_dir
            if cache_dir is not None
            else os.environ.get(CACHE_DIR_ENV, DEFAULT_CACHE_DIR)
        )
        self.max_in_flight = max_in_flight
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._gate = threading.Semaphore(max_in_flight)
        self._key_locks: defaultdict[str, threading.Lock] = defaultdict(threading.Lock)
        self._key_locks_guard = threading.Lock()
        self.provider_calls = 0
        self._stats_lock = threading.Lock()

    def _lock_for(self, key: str) -> threading.Lock:
        with self._key_locks_guard:
            return self._key_locks[key]

    def _cache_path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def _cache_read(self, key: str) -> dict | None:
        path = self._cache_path(key)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def _cache_write(self, key: str, req: ChatRequest, text: str, attempts: int) -> None:
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        record = {
            "key": key,
            "request": _request_payload(req),
            "response": {"text": text, "attempt_count": attempts},
        }
        tmp = self._cache_path(key).with_suffix(".tmp")
        tmp.write_text(json.dumps(record, ensure_ascii=False, indent=2), encoding="utf-8")
        tmp.replace(self._cache_path(key))

    def _call_with_retries(self, req: ChatRequest, meta: RequestMeta | None) -> tuple[str, int]:
        attempts = 0
        while True:
            attempts += 1
            with self._stats_lock:
                self.provider_calls += 1
            try:
                with self._gate:
                    return self.provider.complete_text(req, meta), attempts
            except TransientProviderError as exc:
                if attempts > self.max_retries:
                    raise RetriesExhaustedError(attempts, exc) from exc
                # Full jitter: anywhere in [0, base * 2^(attempt-1)].
                self._sleep(self._rng.uniform(0, self.backoff_base * 2 ** (attempts - 1)))

    def complete(self, req: ChatRequest, meta: RequestMeta | None = None) -> Completion:
        started = time.monotonic()
        key = cache_key(req)
        with self._lock_for(key):
            stored = self._cache_read(key)
            if stored is not None:
                return Completion(
                    text=stored["response"]["text"],
                    model=req.model,
                    cached=True,
                    latency_ms=int((time.monotonic() - started) * 1000),
                    attempt_count=int(stored["response"].get("attempt_count", 1)),
                )
            text, attempts = self._call_with_retries(req, meta)
            self._cache_write(key, req, text, attempts)
        return Completion(
            text=text,
            model=req.model,
            cached=False,
            latency_ms=int((time.monotonic() - started) * 1000),
            attempt_count=attempts,
        )
