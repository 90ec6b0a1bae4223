"""Entity extraction from document images through pluggable extractors."""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass

from ..raster import RasterImage, encode_png
from ..records import ReceiptRecord
from .cache import ResponseCache, response_key
from .client import (
    Extractor,
    ExtractorConfig,
    GeminiExtractor,
    ReplayExtractor,
    TokenBucket,
    TransportError,
)
from .mock import MODES, MockExtractor, mock_extractor
from .parser import ParseError, parse_model_output, parse_model_output_ex
from .prompts import ENTITY_PROMPT, FULLTEXT_PROMPT

log = logging.getLogger(__name__)

STATUSES = ("ok", "parse_recovered", "parse_failed", "transport_failed")


@dataclass(frozen=True)
class Response:
    text: str
    cache_hit: bool
    latency: float


@dataclass(frozen=True)
class ExtractionOutcome:
    prediction: ReceiptRecord | None
    raw_text: str
    status: str
    latency: float
    cache_hit: bool
    error: str | None = None

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.status in ("ok", "parse_recovered") and self.prediction is None:
            raise ValueError("successful outcomes need a prediction")


def _png(image: RasterImage | bytes) -> bytes:
    return image if isinstance(image, (bytes, bytearray)) else encode_png(image)


def respond(extractor: Extractor, prompt: str, image: RasterImage | bytes,
            cache: ResponseCache | None = None, sample: int = 0) -> Response:
    """Cache-first model call. Raises :class:`TransportError` on failure."""
    png = _png(image)
    key = response_key(hashlib.sha256(png).hexdigest(), prompt, extractor.config, sample)
    t0 = time.perf_counter()
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return Response(hit, True, time.perf_counter() - t0)
    text = extractor.generate(prompt, png)
    if cache is not None:
        cache.put(key, text)
    return Response(text, False, time.perf_counter() - t0)


def extract_entities(extractor: Extractor, image: RasterImage | bytes,
                     cache: ResponseCache | None = None, sample: int = 0) -> ExtractionOutcome:
    try:
        resp = respond(extractor, ENTITY_PROMPT, image, cache, sample)
    except TransportError as exc:
        log.warning("extraction failed: %s", exc)
        return ExtractionOutcome(None, "", "transport_failed", 0.0, False, str(exc))
    try:
        record, recovered = parse_model_output_ex(resp.text)
    except ParseError as exc:
        return ExtractionOutcome(None, resp.text, "parse_failed", resp.latency, resp.cache_hit, str(exc))
    status = "parse_recovered" if recovered else "ok"
    return ExtractionOutcome(record, resp.text, status, resp.latency, resp.cache_hit)


def extract_fulltext(extractor: Extractor, image: RasterImage | bytes,
                     cache: ResponseCache | None = None) -> str:
    return respond(extractor, FULLTEXT_PROMPT, image, cache).text


__all__ = [
    "ENTITY_PROMPT", "FULLTEXT_PROMPT", "MODES", "STATUSES",
    "ExtractionOutcome", "Extractor", "ExtractorConfig", "GeminiExtractor", "MockExtractor",
    "ParseError", "ReplayExtractor", "Response", "ResponseCache", "TokenBucket", "TransportError",
    "extract_entities", "extract_fulltext", "mock_extractor", "parse_model_output", "respond",
]
