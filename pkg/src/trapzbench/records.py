"""Receipt records: the eight extracted entities, for ground truth and predictions."""

from __future__ import annotations

import datetime as dt
import json
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Any

ENTITIES = ("vendor", "date", "list_items", "subtotal", "tax", "total", "payment", "change")
MONEY_FIELDS = ("subtotal", "tax", "total", "payment", "change")

# field name -> key used by the extraction schema
SCHEMA_KEYS = {
    "vendor": "Vendor",
    "date": "Date",
    "list_items": "List items",
    "subtotal": "Subtotal",
    "tax": "Tax",
    "total": "Total",
    "payment": "Payment",
    "change": "Change",
}
ITEM_KEYS = {"item": "Item", "quantity": "Quantity", "price": "Price"}

_ALIASES = {
    "vendor": "vendor", "merchant": "vendor", "store": "vendor",
    "date": "date",
    "listitems": "list_items", "listitem": "list_items", "items": "list_items", "lineitems": "list_items",
    "subtotal": "subtotal", "tax": "tax", "total": "total", "payment": "payment", "change": "change",
}
_ITEM_ALIASES = {"item": "item", "name": "item", "itemname": "item", "quantity": "quantity",
                 "qty": "quantity", "price": "price", "amount": "price"}


class RecordError(ValueError):
    pass


class DateFormatError(RecordError):
    pass


@dataclass(frozen=True)
class LineItem:
    item: str | None
    quantity: Decimal | None
    price: Decimal | None


@dataclass(frozen=True)
class ReceiptRecord:
    vendor: str | None = None
    date: str | None = None  # YYYY-mm-dd when recognisable
    list_items: tuple[LineItem, ...] = field(default_factory=tuple)
    subtotal: Decimal | None = None
    tax: Decimal | None = None
    total: Decimal | None = None
    payment: Decimal | None = None
    change: Decimal | None = None

    @classmethod
    def empty(cls) -> ReceiptRecord:
        return cls()

    def to_schema(self) -> dict[str, Any]:
        """Plain dict keyed like the extraction schema, numbers as floats."""
        d: dict[str, Any] = {"Vendor": self.vendor, "Date": self.date}
        d["List items"] = [
            {"Item": li.item, "Quantity": _num_out(li.quantity), "Price": _num_out(li.price)}
            for li in self.list_items
        ]
        for f in MONEY_FIELDS:
            d[SCHEMA_KEYS[f]] = _num_out(getattr(self, f))
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_schema(), ensure_ascii=False)


def _num_out(v: Decimal | None):
    if v is None:
        return None
    if v == v.to_integral_value() and abs(v) < 10**15:
        return int(v)
    return float(v)


def _norm_key(k: str) -> str:
    return re.sub(r"[^a-z]", "", k.lower())


_NUM_JUNK = re.compile(r"[\s,$€£¥₩₹]|USD|EUR|GBP|JPY", re.IGNORECASE)


def coerce_number(v: Any) -> Decimal | None:
    """Lenient number coercion; returns None for anything not a finite number."""
    if v is None or isinstance(v, bool):
        return None
    if isinstance(v, Decimal):
        d = v
    elif isinstance(v, (int, float)):
        d = Decimal(str(v))
    elif isinstance(v, str):
        s = _NUM_JUNK.sub("", v.strip())
        neg = s.startswith("(") and s.endswith(")")
        s = s.strip("()")
        if not s:
            return None
        try:
            d = Decimal(s)
        except InvalidOperation:
            return None
        if neg:
            d = -d
    else:
        return None
    return d if d.is_finite() else None


_DATE_FORMATS = (
    "%Y-%m-%d", "%Y/%m/%d", "%Y.%m.%d", "%Y%m%d",
    "%m/%d/%Y", "%m-%d-%Y", "%m/%d/%y",
    "%B %d, %Y", "%b %d, %Y", "%d %B %Y", "%d %b %Y", "%b. %d, %Y",
)


def normalize_date(s: str) -> str:
    """Render a date as YYYY-mm-dd when the format is recognised, else return it stripped."""
    s = s.strip()
    for fmt in _DATE_FORMATS:
        try:
            return dt.datetime.strptime(s, fmt).date().isoformat()
        except ValueError:
            continue
    return s


def parse_iso_date(s: Any, where: str = "Date") -> str:
    if not isinstance(s, str) or not re.fullmatch(r"\d{4}-\d{2}-\d{2}", s.strip()):
        raise DateFormatError(f"{where}: expected YYYY-mm-dd, got {s!r}")
    try:
        return dt.date.fromisoformat(s.strip()).isoformat()
    except ValueError as exc:
        raise DateFormatError(f"{where}: invalid calendar date {s!r}") from exc


def _strict_number(v: Any, where: str) -> Decimal | None:
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float, Decimal)):
        raise RecordError(f"{where}: expected a number or null, got {v!r}")
    d = coerce_number(v)
    if d is None:
        raise RecordError(f"{where}: number must be finite")
    return d


def _strict_string(v: Any, where: str) -> str | None:
    if v is None or isinstance(v, str):
        return v
    raise RecordError(f"{where}: expected a string or null, got {v!r}")


def record_from_schema(data: Any, *, strict: bool) -> ReceiptRecord:
    """Build a record from a schema-keyed mapping.

    ``strict`` is used for ground truth: wrong types raise :class:`RecordError`
    naming the offending field. Lenient mode (model output) matches keys
    loosely, coerces numeric strings and nulls anything unusable.
    """
    if not isinstance(data, dict):
        raise RecordError(f"expected an object at top level, got {type(data).__name__}")

    fields: dict[str, Any] = {}
    for k, v in data.items():
        name = _ALIASES.get(_norm_key(str(k)))
        if name is None:
            if strict:
                raise RecordError(f"unknown field {k!r}")
            continue
        fields.setdefault(name, v)

    out: dict[str, Any] = {}
    if strict:
        out["vendor"] = _strict_string(fields.get("vendor"), "Vendor")
        date = fields.get("date")
        out["date"] = None if date is None else parse_iso_date(date)
        for f in MONEY_FIELDS:
            out[f] = _strict_number(fields.get(f), SCHEMA_KEYS[f])
    else:
        vendor = fields.get("vendor")
        out["vendor"] = vendor if isinstance(vendor, str) else (None if vendor is None else str(vendor))
        date = fields.get("date")
        out["date"] = normalize_date(date) if isinstance(date, str) else None
        for f in MONEY_FIELDS:
            out[f] = coerce_number(fields.get(f))

    items = fields.get("list_items")
    if items is None:
        items = []
    if not isinstance(items, list):
        if strict:
            raise RecordError(f"List items: expected an array, got {items!r}")
        items = []
    parsed = []
    for i, raw in enumerate(items):
        where = f"List items[{i}]"
        if not isinstance(raw, dict):
            if strict:
                raise RecordError(f"{where}: expected an object")
            continue
        vals: dict[str, Any] = {}
        for k, v in raw.items():
            name = _ITEM_ALIASES.get(_norm_key(str(k)))
            if name is None:
                if strict:
                    raise RecordError(f"{where}: unknown field {k!r}")
                continue
            vals.setdefault(name, v)
        if strict:
            li = LineItem(
                _strict_string(vals.get("item"), f"{where}.Item"),
                _strict_number(vals.get("quantity"), f"{where}.Quantity"),
                _strict_number(vals.get("price"), f"{where}.Price"),
            )
            if li.quantity is not None and li.quantity < 0:
                raise RecordError(f"{where}.Quantity: must be >= 0")
        else:
            name = vals.get("item")
            li = LineItem(
                name if isinstance(name, str) else (None if name is None else str(name)),
                coerce_number(vals.get("quantity")),
                coerce_number(vals.get("price")),
            )
        parsed.append(li)
    out["list_items"] = tuple(parsed)
    return ReceiptRecord(**out)
