"""Per-entity scores for a predicted receipt against its ground truth."""

from __future__ import annotations

import json
import os
from dataclasses import astuple, dataclass
from decimal import Decimal
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .records import ENTITIES, MONEY_FIELDS, LineItem, ReceiptRecord, coerce_number, normalize_date

PREFIX_SCALE = Fraction(1, 10)
MAX_PREFIX = 4


@dataclass(frozen=True)
class EntityScores:
    vendor: float
    date: float
    list_items: float
    subtotal: float
    tax: float
    total: float
    payment: float
    change: float

    def __post_init__(self):
        for name, v in zip(ENTITIES, astuple(self)):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} score {v} outside [0, 1]")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(ENTITIES, astuple(self)))


def numeric_score(truth, pred) -> int:
    """1 when both values are equal as decimals (71.40 == 71.4) or both are null."""
    t = None if truth is None else coerce_number(truth)
    p = None if pred is None else coerce_number(pred)
    if t is None and p is None:
        return 1
    if t is None or p is None:
        return 0
    return int(Decimal(t) == Decimal(p))


def _jaro_parts(a: str, b: str) -> tuple[int, Fraction]:
    """Matching characters ``m`` and transpositions ``t`` (half the out-of-order matches).

    ``t`` is not floored: an odd count of out-of-order matches gives a half.
    """
    window = max(max(len(a), len(b)) // 2 - 1, 0)
    b_used = [False] * len(b)
    a_matched = []
    for i, ch in enumerate(a):
        lo, hi = max(0, i - window), min(len(b), i + window + 1)
        for j in range(lo, hi):
            if not b_used[j] and b[j] == ch:
                b_used[j] = True
                a_matched.append(ch)
                break
    b_matched = [ch for ch, used in zip(b, b_used) if used]
    half = sum(x != y for x, y in zip(a_matched, b_matched))
    return len(a_matched), Fraction(half, 2)


def jaro_winkler(a: str, b: str) -> float:
    """Jaro-Winkler similarity (1 = identical), case-sensitive.

    The boost uses the common prefix capped at four characters and scale 0.1,
    applied unconditionally. Evaluated in exact rationals, rounded once.
    """
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    m, t = _jaro_parts(a, b)
    if m == 0:
        return 0.0
    j = (Fraction(m, len(a)) + Fraction(m, len(b)) + Fraction(m - t, m)) / 3
    prefix = 0
    for x, y in zip(a[:MAX_PREFIX], b[:MAX_PREFIX]):
        if x != y:
            break
        prefix += 1
    return float(j + prefix * PREFIX_SCALE * (1 - j))


def string_score(truth: str | None, pred: str | None) -> float:
    if truth is None and pred is None:
        return 1.0
    if truth is None or pred is None:
        return 0.0
    return jaro_winkler(truth, pred)


def date_score(truth: str | None, pred: str | None) -> float:
    return string_score(
        None if truth is None else normalize_date(truth),
        None if pred is None else normalize_date(pred),
    )


def _item_score(t: LineItem, p: LineItem) -> Fraction:
    name = Fraction(string_score(t.item, p.item))
    return (name + numeric_score(t.quantity, p.quantity) + numeric_score(t.price, p.price)) / 3


def list_items_score(truth: Sequence[LineItem], pred: Sequence[LineItem]) -> float:
    """Compare items top to bottom; unpaired positions count as zero."""
    n = max(len(truth), len(pred))
    if n == 0:
        return 1.0
    total = sum((_item_score(t, p) for t, p in zip(truth, pred)), Fraction(0))
    return float(total / n)


def receipt_scores(truth: ReceiptRecord, pred: ReceiptRecord | None) -> EntityScores:
    if pred is None:
        pred = ReceiptRecord.empty()
    money = {f: float(numeric_score(getattr(truth, f), getattr(pred, f))) for f in MONEY_FIELDS}
    return EntityScores(
        vendor=string_score(truth.vendor, pred.vendor),
        date=date_score(truth.date, pred.date),
        list_items=list_items_score(truth.list_items, pred.list_items),
        **money,
    )


def average_score(s: EntityScores) -> float:
    return float(sum(Fraction(v) for v in astuple(s)) / len(ENTITIES))


@dataclass(frozen=True)
class ScoreRecord:
    """One line of the scores file."""

    source_id: str
    theta_deg: float
    k: float
    scores: EntityScores
    status: str

    @property
    def r(self) -> float:
        return 2.0**self.k

    @property
    def average(self) -> float:
        return average_score(self.scores)

    @property
    def key(self) -> tuple[str, float, float]:
        return self.source_id, self.theta_deg, self.k

    def to_json(self) -> dict:
        d = {"source_id": self.source_id, "theta_deg": self.theta_deg, "k": self.k, "r": self.r}
        d.update(self.scores.as_dict())
        d["average"] = self.average
        d["status"] = self.status
        return d

    @classmethod
    def from_json(cls, d: dict) -> ScoreRecord:
        return cls(d["source_id"], float(d["theta_deg"]), float(d["k"]),
                   EntityScores(*(float(d[e]) for e in ENTITIES)), d["status"])


def write_scores(records, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json()) + "\n")
    os.replace(tmp, path)


def read_scores(path) -> list[ScoreRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(ScoreRecord.from_json(json.loads(line)))
    return out
