"""Deterministic stand-ins for the remote model, driven by manifest ground truth."""

from __future__ import annotations

import dataclasses
import hashlib
import random
from decimal import Decimal

from ..dataset import Manifest, load_truth
from ..records import MONEY_FIELDS, ReceiptRecord
from .client import ExtractorConfig, TransportError
from .prompts import FULLTEXT_PROMPT

MODES = ("perfect", "row_shuffle", "drop_items", "numeric_noise")

# subtotal takes tax's value, tax takes total's, total takes payment's, payment takes subtotal's
SHUFFLE_CYCLE = ("subtotal", "tax", "total", "payment")


def row_shuffle(rec: ReceiptRecord) -> ReceiptRecord:
    vals = [getattr(rec, f) for f in SHUFFLE_CYCLE]
    shifted = vals[1:] + vals[:1]
    return dataclasses.replace(rec, **dict(zip(SHUFFLE_CYCLE, shifted)))


def drop_items(rec: ReceiptRecord, n: int = 1) -> ReceiptRecord:
    keep = max(0, len(rec.list_items) - n)
    return dataclasses.replace(rec, list_items=rec.list_items[:keep])


def numeric_noise(rec: ReceiptRecord, rng: random.Random) -> ReceiptRecord:
    present = [f for f in MONEY_FIELDS if getattr(rec, f) is not None]
    if not present:
        return rec
    name = rng.choice(present)
    delta = Decimal(rng.randint(1, 99)) / 100
    return dataclasses.replace(rec, **{name: getattr(rec, name) + delta})


class MockExtractor:
    def __init__(self, truths: dict[str, ReceiptRecord], mode: str = "perfect", seed: int = 0,
                 transcript: str = "", n_drop: int = 1):
        if mode not in MODES:
            raise ValueError(f"unknown mock mode {mode!r}; choose from {', '.join(MODES)}")
        self.truths = truths
        self.mode = mode
        self.seed = seed
        self.transcript = transcript
        self.n_drop = n_drop
        self.config = ExtractorConfig(model_name=f"mock-{mode}")
        self.calls = 0

    def record_for(self, image_sha256: str) -> ReceiptRecord:
        try:
            rec = self.truths[image_sha256]
        except KeyError:
            raise TransportError("mock has no ground truth for this image") from None
        if self.mode == "row_shuffle":
            return row_shuffle(rec)
        if self.mode == "drop_items":
            return drop_items(rec, self.n_drop)
        if self.mode == "numeric_noise":
            return numeric_noise(rec, random.Random(f"{self.seed}:{image_sha256}"))
        return rec

    def generate(self, prompt: str, image_png: bytes) -> str:
        self.calls += 1
        if prompt == FULLTEXT_PROMPT:
            return self.transcript
        return self.record_for(hashlib.sha256(image_png).hexdigest()).to_json()


def mock_extractor(manifest: Manifest, mode: str = "perfect", seed: int = 0, **kwargs) -> MockExtractor:
    truths: dict[str, ReceiptRecord] = {}
    by_path: dict[str, ReceiptRecord] = {}
    for e in manifest.entries:
        if e.truth_path not in by_path:
            by_path[e.truth_path] = load_truth(e.truth_path)
        truths[e.sha256] = by_path[e.truth_path]
    return MockExtractor(truths, mode, seed, **kwargs)
