"""Lenient parsing of model responses into receipt records."""

from __future__ import annotations

import json
import re
from decimal import Decimal

from ..records import ReceiptRecord, RecordError, record_from_schema


class ParseError(ValueError):
    pass


_FENCE = re.compile(r"```[ \t]*(?:json|JSON)?[ \t]*\n?(.*?)```", re.S)
_TRAILING_COMMA = re.compile(r",\s*([}\]])")
_PY_LITERALS = {"None": "null", "True": "true", "False": "false"}


def _loads(text: str):
    return json.loads(text, parse_float=Decimal, parse_int=Decimal)


def _as_record_data(obj):
    if isinstance(obj, list):
        obj = next((x for x in obj if isinstance(x, dict)), None)
    if not isinstance(obj, dict):
        raise ParseError("response is not a JSON object")
    return obj


def _candidates(raw: str):
    for m in _FENCE.finditer(raw):
        yield m.group(1)
    start, end = raw.find("{"), raw.rfind("}")
    if start != -1 and end > start:
        yield raw[start : end + 1]
    start, end = raw.find("["), raw.rfind("]")
    if start != -1 and end > start:
        yield raw[start : end + 1]


def _repair(text: str) -> str:
    text = text.replace("“", '"').replace("”", '"')
    text = _TRAILING_COMMA.sub(r"\1", text)
    return re.sub(r"\b(None|True|False)\b", lambda m: _PY_LITERALS[m.group(1)], text)


def parse_model_output_ex(raw: str) -> tuple[ReceiptRecord, bool]:
    """Parse ``raw``; the flag tells whether recovery steps were needed."""
    try:
        return record_from_schema(_as_record_data(_loads(raw.strip())), strict=False), False
    except (ValueError, RecordError):
        pass
    for cand in _candidates(raw):
        for text in (cand, _repair(cand)):
            try:
                data = _as_record_data(_loads(text.strip()))
            except ValueError:
                continue
            try:
                return record_from_schema(data, strict=False), True
            except RecordError:
                continue
    raise ParseError("no JSON object could be recovered from the response")


def parse_model_output(raw: str) -> ReceiptRecord:
    return parse_model_output_ex(raw)[0]
