"""Provider-agnostic chat-completion client with token/cost accounting.

Three backends share one interface: a deterministic mock (substring rules or
prompt-hash keyed), a transcript replayer, and an HTTP backend speaking the
chat-completions JSON shape. Token counts are trusted only when the provider
reports them; an exchange without usage is excluded from cost and token
aggregates instead of being approximated.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import requests

from .errors import (
    AuthError,
    ConfigError,
    MalformedResponseError,
    ProviderError,
    ProviderTimeout,
    RateLimitError,
    ReplayExhaustedError,
)


@dataclass(frozen=True)
class Usage:
    input_tokens: int
    output_tokens: int

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ConfigError("token counts must be non-negative")

    @property
    def total(self) -> int:
        return self.input_tokens + self.output_tokens


@dataclass(frozen=True)
class CostModel:
    """Prices in USD per single token."""

    input_price: float
    output_price: float

    def __post_init__(self):
        if self.input_price < 0 or self.output_price < 0:
            raise ConfigError("prices must be non-negative")

    @classmethod
    def per_million(cls, input_usd: float, output_usd: float) -> "CostModel":
        return cls(input_usd / 1_000_000, output_usd / 1_000_000)


def cost(usages: list[Usage], model: CostModel) -> float:
    """Total spend: sum over requests of in*P_i + out*P_o."""
    return sum(
        u.input_tokens * model.input_price + u.output_tokens * model.output_price
        for u in usages
    )


@dataclass(frozen=True)
class ProviderConfig:
    endpoint: str = ""
    model_name: str = ""
    api_key_env: str = "DSREPAIR_API_KEY"
    temperature: float = 0.0
    max_output_tokens: int = 2048
    request_timeout_s: float = 60.0
    retries: int = 3

    def api_key(self) -> str:
        key = os.environ.get(self.api_key_env, "")
        if not key:
            raise AuthError(f"environment variable {self.api_key_env} is not set")
        return key


@dataclass
class ChatExchange:
    prompt: str
    response: str
    usage: Usage | None
    latency_s: float
    provider: str

    @property
    def usage_known(self) -> bool:
        return self.usage is not None

    def to_json(self) -> dict:
        return {
            "prompt": self.prompt,
            "response": self.response,
            "usage": None
            if self.usage is None
            else {
                "input_tokens": self.usage.input_tokens,
                "output_tokens": self.usage.output_tokens,
            },
            "latency_s": self.latency_s,
            "provider": self.provider,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ChatExchange":
        usage = obj.get("usage")
        return cls(
            prompt=obj.get("prompt", ""),
            response=obj.get("response", ""),
            usage=None
            if usage is None
            else Usage(usage["input_tokens"], usage["output_tokens"]),
            latency_s=obj.get("latency_s", 0.0),
            provider=obj.get("provider", ""),
        )


class RateLimiter:
    """Token bucket over requests/minute; blocks the caller when drained."""

    def __init__(self, requests_per_minute: int):
        self.capacity = requests_per_minute
        self.tokens = float(requests_per_minute)
        self.refill_per_s = requests_per_minute / 60.0
        self.updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self.tokens = min(
                    self.capacity, self.tokens + (now - self.updated) * self.refill_per_s
                )
                self.updated = now
                if self.tokens >= 1:
                    self.tokens -= 1
                    return
                wait = (1 - self.tokens) / self.refill_per_s
            time.sleep(wait)


class MockProvider:
    """Deterministic canned responses.

    Lookup order: exact sha256(prompt) key, then the first rule whose
    required substrings all occur in the prompt, then the default.
    """

    name = "mock"

    def __init__(
        self,
        by_hash: dict[str, tuple[str, Usage]] | None = None,
        rules: list[tuple[list[str], str, Usage]] | None = None,
        default: tuple[str, Usage] | None = None,
    ):
        self.by_hash = by_hash or {}
        self.rules = rules or []
        self.default = default

    @staticmethod
    def prompt_hash(prompt: str) -> str:
        return hashlib.sha256(prompt.encode("utf-8")).hexdigest()

    @classmethod
    def from_script(cls, path: str | Path) -> "MockProvider":
        """Line-delimited JSON rules:
        {"require": [...], "response": "...", "input_tokens": n, "output_tokens": n}
        """
        rules = []
        default = None
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            usage = Usage(int(obj.get("input_tokens", 0)), int(obj.get("output_tokens", 0)))
            require = obj.get("require", [])
            if require:
                rules.append((list(require), obj["response"], usage))
            else:
                default = (obj["response"], usage)
        return cls(rules=rules, default=default)

    def complete(self, cfg: ProviderConfig, prompt: str) -> ChatExchange:
        key = self.prompt_hash(prompt)
        if key in self.by_hash:
            response, usage = self.by_hash[key]
        else:
            for require, response_text, usage_value in self.rules:
                if all(part in prompt for part in require):
                    response, usage = response_text, usage_value
                    break
            else:
                if self.default is None:
                    raise ProviderError("mock has no response for this prompt")
                response, usage = self.default
        return ChatExchange(
            prompt=prompt, response=response, usage=usage, latency_s=0.0, provider=self.name
        )


class ReplayProvider:
    """Replays a transcript of exchanges, in order; byte-identical output."""

    name = "replay"

    def __init__(self, transcript_path: str | Path):
        self._exchanges = [
            ChatExchange.from_json(json.loads(line))
            for line in Path(transcript_path).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        self._cursor = 0
        self._lock = threading.Lock()

    def complete(self, cfg: ProviderConfig, prompt: str) -> ChatExchange:
        with self._lock:
            if self._cursor >= len(self._exchanges):
                raise ReplayExhaustedError(
                    f"transcript exhausted after {len(self._exchanges)} exchanges"
                )
            exchange = self._exchanges[self._cursor]
            self._cursor += 1
        return exchange


class HttpProvider:
    """Chat-completions-compatible JSON over HTTP(S)."""

    name = "http"

    def __init__(self, session: requests.Session | None = None):
        self.session = session or requests.Session()

    def complete(self, cfg: ProviderConfig, prompt: str) -> ChatExchange:
        if not cfg.endpoint:
            raise ConfigError("provider endpoint is not configured")
        payload = {
            "model": cfg.model_name,
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_output_tokens,
            "messages": [{"role": "user", "content": prompt}],
        }
        started = time.monotonic()
        try:
            http_response = self.session.post(
                cfg.endpoint,
                json=payload,
                headers={"Authorization": f"Bearer {cfg.api_key()}"},
                timeout=cfg.request_timeout_s,
            )
        except requests.Timeout as exc:
            raise ProviderTimeout(f"request timed out after {cfg.request_timeout_s}s") from exc
        except requests.RequestException as exc:
            raise ProviderError(f"transport failure: {exc.__class__.__name__}") from exc
        latency = time.monotonic() - started

        if http_response.status_code in (401, 403):
            raise AuthError(f"provider rejected credentials (HTTP {http_response.status_code})")
        if http_response.status_code == 429:
            raise RateLimitError("provider rate limit (HTTP 429)")
        if http_response.status_code >= 500:
            raise ProviderError(f"provider server error (HTTP {http_response.status_code})")
        if http_response.status_code != 200:
            raise ProviderError(f"unexpected HTTP {http_response.status_code}")

        try:
            body = http_response.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponseError(f"cannot read completion: {exc}") from exc

        usage = None
        usage_obj = body.get("usage") or {}
        if "prompt_tokens" in usage_obj and "completion_tokens" in usage_obj:
            usage = Usage(int(usage_obj["prompt_tokens"]), int(usage_obj["completion_tokens"]))
        return ChatExchange(
            prompt=prompt,
            response=text,
            usage=usage,
            latency_s=latency,
            provider=cfg.model_name or self.name,
        )


class ChatClient:
    """Retry/ratelimit wrapper around a backend; shareable across threads."""

    def __init__(
        self,
        backend,
        requests_per_minute: int | None = None,
        backoff_base_s: float = 0.5,
    ):
        self.backend = backend
        self.limiter = RateLimiter(requests_per_minute) if requests_per_minute else None
        self.backoff_base_s = backoff_base_s

    def complete(self, cfg: ProviderConfig, prompt: str) -> ChatExchange:
        if not prompt:
            raise ConfigError("prompt must be non-empty")
        attempts = max(1, cfg.retries + 1)
        last_error: ProviderError | None = None
        for attempt in range(attempts):
            if self.limiter is not None:
                self.limiter.acquire()
            try:
                return self.backend.complete(cfg, prompt)
            except (RateLimitError, ProviderTimeout) as exc:
                last_error = exc
                if attempt + 1 < attempts:
                    time.sleep(self.backoff_base_s * (2**attempt))
            except AuthError:
                raise
        assert last_error is not None
        raise last_error


def write_transcript(path: str | Path, exchanges: list[ChatExchange]) -> None:
    lines = [json.dumps(e.to_json(), ensure_ascii=False) for e in exchanges]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
