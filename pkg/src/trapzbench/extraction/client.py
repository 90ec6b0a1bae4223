"""Remote vision-model extractor and the cache-only replay extractor."""

from __future__ import annotations

import base64
import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Protocol

import httpx

log = logging.getLogger(__name__)


class TransportError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExtractorConfig:
    model_name: str = "gemini-1.5-pro-002"
    temperature: float = 1.0
    max_output_tokens: int = 8192
    top_p: float = 0.95
    endpoint: str = "https://generativelanguage.googleapis.com/v1beta"
    api_key_env: str = "GEMINI_API_KEY"
    request_timeout: float = 120.0
    max_retries: int = 3
    requests_per_minute: float = 60.0
    repeats: int = 1

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must lie in (0, 1]")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")
        if self.max_retries < 0 or self.repeats < 1:
            raise ValueError("max_retries must be >= 0 and repeats >= 1")


class Extractor(Protocol):
    config: ExtractorConfig

    def generate(self, prompt: str, image_png: bytes) -> str: ...


class TokenBucket:
    """Blocking rate limiter: ``rate`` requests per minute, bursts up to ``capacity``."""

    def __init__(self, rate_per_minute: float, capacity: float = 1.0,
                 clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        self.rate = rate_per_minute / 60.0
        self.capacity = capacity
        self.tokens = capacity
        self.clock, self.sleep = clock, sleep
        self.stamp = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.stamp) * self.rate)
                self.stamp = now
                if self.tokens >= 1:
                    self.tokens -= 1
                    return
                wait = (1 - self.tokens) / self.rate
            self.sleep(wait)


class GeminiWire:
    """Request/response shapes of the generateContent REST call."""

    @staticmethod
    def build(prompt: str, image_png: bytes, cfg: ExtractorConfig, api_key: str) -> tuple[str, dict, dict]:
        url = f"{cfg.endpoint.rstrip('/')}/models/{cfg.model_name}:generateContent"
        body = {
            "contents": [{
                "role": "user",
                "parts": [
                    {"text": prompt},
                    {"inline_data": {"mime_type": "image/png", "data": base64.b64encode(image_png).decode()}},
                ],
            }],
            "generationConfig": {
                "temperature": cfg.temperature,
                "topP": cfg.top_p,
                "maxOutputTokens": cfg.max_output_tokens,
            },
        }
        return url, {"x-goog-api-key": api_key, "content-type": "application/json"}, body

    @staticmethod
    def text(payload: dict) -> str:
        try:
            parts = payload["candidates"][0]["content"].get("parts", [])
        except (KeyError, IndexError, TypeError, AttributeError):
            return ""
        return "".join(p.get("text", "") for p in parts if isinstance(p, dict))


class GeminiExtractor:
    wire = GeminiWire

    def __init__(self, config: ExtractorConfig | None = None, *, client: httpx.Client | None = None,
                 sleep: Callable[[float], None] = time.sleep, limiter: TokenBucket | None = None):
        self.config = config or ExtractorConfig()
        self.client = client or httpx.Client(timeout=self.config.request_timeout)
        self.sleep = sleep
        self.limiter = limiter or TokenBucket(self.config.requests_per_minute, sleep=sleep)
        self.calls = 0

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env)
        if not key:
            raise TransportError(f"credential variable {self.config.api_key_env} is not set")
        return key

    def generate(self, prompt: str, image_png: bytes) -> str:
        url, headers, body = self.wire.build(prompt, image_png, self.config, self._api_key())
        last: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self.sleep(min(2.0 ** (attempt - 1), 60.0))
            self.limiter.acquire()
            self.calls += 1
            try:
                resp = self.client.post(url, headers=headers, json=body, timeout=self.config.request_timeout)
            except httpx.HTTPError as exc:
                last = exc
                log.warning("request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = TransportError(f"HTTP {resp.status_code}")
                log.warning("retryable status %d (attempt %d)", resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return self.wire.text(resp.json())
            except ValueError as exc:
                raise TransportError(f"response body is not JSON: {exc}") from exc
        raise TransportError(f"giving up after {self.config.max_retries + 1} attempts: {last}")


class ReplayExtractor:
    """Answers only from the response cache; every miss is a transport failure."""

    def __init__(self, config: ExtractorConfig | None = None):
        self.config = config or ExtractorConfig()
        self.calls = 0

    def generate(self, prompt: str, image_png: bytes) -> str:
        raise TransportError("response not found in replay cache")
