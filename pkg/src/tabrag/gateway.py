"""Provider abstraction for chat completion and embedding.

Includes a retry wrapper, an on-disk response cache keyed by
(model, prompt hash, params hash), and deterministic mock providers for
tests and offline pipeline runs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

log = logging.getLogger(__name__)


class GatewayError(RuntimeError):
    pass


class ProviderError(GatewayError):
    """A provider call failed; ``transient`` failures are retried."""

    def __init__(self, message: str, transient: bool = True):
        super().__init__(message)
        self.transient = transient


@dataclass(frozen=True)
class CompletionParams:
    temperature: float = 0.0
    max_output_tokens: int = 2048
    stop: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def key(self) -> str:
        stop = list(self.stop) if self.stop else None
        return json.dumps(
            {"temperature": self.temperature, "max_output_tokens": self.max_output_tokens, "stop": stop},
            sort_keys=True,
        )


class ChatProvider(Protocol):
    name: str

    def complete(self, prompt: str, params: CompletionParams) -> str: ...


class EmbeddingProvider(Protocol):
    dimension: int

    def embed(self, texts: Sequence[str]) -> list[list[float]]: ...


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# retry


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_s: float = 1.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


def complete_with_retry(
    provider: ChatProvider,
    prompt: str,
    params: CompletionParams | None = None,
    policy: RetryPolicy | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """First successful completion; transient failures retried with
    exponential backoff."""
    params = params or CompletionParams()
    policy = policy or RetryPolicy()
    phash = prompt_hash(prompt)[:12]
    last: Exception | None = None
    for attempt in range(1, policy.max_attempts + 1):
        try:
            text = provider.complete(prompt, params)
            log.debug("completion ok provider=%s prompt=%s attempt=%d", provider.name, phash, attempt)
            return text
        except ProviderError as exc:
            last = exc
            log.warning("provider=%s prompt=%s attempt=%d failed: %s", provider.name, phash, attempt, exc)
            if not exc.transient:
                break
            if attempt < policy.max_attempts:
                sleep(policy.backoff_s * (2 ** (attempt - 1)))
    raise GatewayError(
        f"provider {provider.name} failed after {policy.max_attempts} attempts "
        f"for prompt {phash}: {last}"
    ) from last


def embed_batch(provider: EmbeddingProvider, texts: Sequence[str], batch_size: int = 16) -> list[list[float]]:
    """Embed in chunks; output order equals input order."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    out: list[list[float]] = []
    for start in range(0, len(texts), batch_size):
        chunk = provider.embed(list(texts[start:start + batch_size]))
        for vec in chunk:
            if len(vec) != provider.dimension:
                raise GatewayError(
                    f"embedding dimension mismatch: got {len(vec)}, declared {provider.dimension}"
                )
        out.extend(chunk)
    return out


# ---------------------------------------------------------------------------
# response cache


@dataclass(frozen=True)
class CacheEntry:
    text: str
    created_at: str
    hit: bool


class ResponseCache:
    """Content-addressed completion cache; one JSON file per entry."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, model: str, prompt: str, params: CompletionParams) -> Path:
        key = hashlib.sha256(
            f"{model}\n{prompt_hash(prompt)}\n{params.key()}".encode("utf-8")
        ).hexdigest()
        return self.directory / key[:2] / f"{key}.json"

    def lookup(self, model: str, prompt: str, params: CompletionParams) -> CacheEntry | None:
        path = self._path(model, prompt, params)
        if not path.exists():
            return None
        rec = json.loads(path.read_text(encoding="utf-8"))
        return CacheEntry(text=rec["text"], created_at=rec["created_at"], hit=True)

    def store(self, model: str, prompt: str, params: CompletionParams, text: str, created_at: str) -> None:
        path = self._path(model, prompt, params)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = json.dumps(
            {"model": model, "prompt_hash": prompt_hash(prompt), "text": text, "created_at": created_at},
            ensure_ascii=False,
        )
        with self._lock:
            tmp = path.with_suffix(".tmp")
            tmp.write_text(payload, encoding="utf-8")
            tmp.replace(path)


class CachedChatProvider:
    """Wraps a provider with the response cache; replays carry the timestamp
    of the original completion so reruns are reproducible."""

    def __init__(self, provider: ChatProvider, cache: ResponseCache,
                 clock: Callable[[], str] | None = None):
        self.inner = provider
        self.cache = cache
        self.name = provider.name
        self._clock = clock or _utc_now

    def complete(self, prompt: str, params: CompletionParams) -> str:
        return self.complete_entry(prompt, params).text

    def complete_entry(self, prompt: str, params: CompletionParams) -> CacheEntry:
        cached = self.cache.lookup(self.name, prompt, params)
        if cached is not None:
            return cached
        text = self.inner.complete(prompt, params)
        created = self._clock()
        self.cache.store(self.name, prompt, params, text, created)
        return CacheEntry(text=text, created_at=created, hit=False)


def _utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


# ---------------------------------------------------------------------------
# mock providers


@dataclass
class ScriptRule:
    contains: tuple[str, ...]
    response: str


class MockChatProvider:
    """Deterministic scripted provider.

    Responses resolve in order: exact prompt-hash matches, substring rules
    (first rule whose substrings all appear), then the sequential script.
    In strict mode an unscripted prompt raises.
    """

    name = "mock"

    def __init__(
        self,
        sequence: Sequence[str] | None = None,
        by_hash: dict[str, str] | None = None,
        rules: Sequence[ScriptRule] | None = None,
        default: str | None = None,
        strict: bool = True,
        fail_first: int = 0,
    ):
        self.sequence = list(sequence or [])
        self.by_hash = dict(by_hash or {})
        self.rules = list(rules or [])
        self.default = default
        self.strict = strict
        self.fail_first = fail_first
        self.transcript: list[str] = []
        self._lock = threading.Lock()
        self._cursor = 0
        self._failures = 0

    def complete(self, prompt: str, params: CompletionParams) -> str:
        with self._lock:
            self.transcript.append(prompt)
            if self._failures < self.fail_first:
                self._failures += 1
                raise ProviderError("scripted transient failure")
            h = prompt_hash(prompt)
            if h in self.by_hash:
                return self.by_hash[h]
            for rule in self.rules:
                if all(s in prompt for s in rule.contains):
                    return rule.response
            if self._cursor < len(self.sequence):
                text = self.sequence[self._cursor]
                self._cursor += 1
                return text
            if self.default is not None:
                return self.default
            if self.strict:
                raise ProviderError(f"unscripted prompt {h}", transient=False)
            return ""


class FailingChatProvider:
    name = "failing-mock"

    def __init__(self):
        self.calls = 0

    def complete(self, prompt: str, params: CompletionParams) -> str:
        self.calls += 1
        raise ProviderError("always fails")


class HashEmbeddingProvider:
    """Deterministic embedding provider: sha256-derived pseudo-random vectors."""

    def __init__(self, dimension: int = 64):
        self.dimension = dimension

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for text in texts:
            vec = []
            counter = 0
            while len(vec) < self.dimension:
                digest = hashlib.sha256(f"{counter}:{text}".encode("utf-8")).digest()
                for i in range(0, len(digest) - 1, 2):
                    if len(vec) >= self.dimension:
                        break
                    raw = int.from_bytes(digest[i:i + 2], "big")
                    vec.append(raw / 65535.0 - 0.5)
                counter += 1
            out.append(vec)
        return out


# ---------------------------------------------------------------------------
# OpenAI-compatible HTTP provider


class OpenAICompatProvider:
    """Chat provider talking to an OpenAI-style /chat/completions endpoint."""

    def __init__(self, model: str, endpoint: str, api_key: str = "", timeout_s: float = 120.0):
        self.name = model
        self.endpoint = endpoint.rstrip("/")
        self.api_key = api_key
        self.timeout_s = timeout_s

    def complete(self, prompt: str, params: CompletionParams) -> str:
        import httpx

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
        }
        if params.stop:
            body["stop"] = list(params.stop)
        try:
            resp = httpx.post(
                f"{self.endpoint}/chat/completions", json=body, headers=headers,
                timeout=self.timeout_s,
            )
        except httpx.HTTPError as exc:
            raise ProviderError(f"request failed: {exc}") from exc
        if resp.status_code >= 500 or resp.status_code == 429:
            raise ProviderError(f"server error {resp.status_code}")
        if resp.status_code != 200:
            raise ProviderError(f"request rejected: {resp.status_code} {resp.text[:200]}", transient=False)
        data = resp.json()
        return data["choices"][0]["message"]["content"]
