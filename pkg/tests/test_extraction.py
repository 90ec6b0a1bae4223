import base64
import hashlib
import json
import random
from decimal import Decimal

import httpx
import pytest

from conftest import gradient
from trapzbench.extraction import (
    ENTITY_PROMPT,
    FULLTEXT_PROMPT,
    ExtractionOutcome,
    ExtractorConfig,
    GeminiExtractor,
    MockExtractor,
    ParseError,
    ReplayExtractor,
    ResponseCache,
    TokenBucket,
    TransportError,
    extract_entities,
    extract_fulltext,
    parse_model_output,
    respond,
)
from trapzbench.extraction.cache import response_key
from trapzbench.extraction.mock import drop_items, numeric_noise, row_shuffle
from trapzbench.extraction.parser import parse_model_output_ex
from trapzbench.raster import encode_png
from trapzbench.records import LineItem, ReceiptRecord

REC = ReceiptRecord(
    vendor="Shop",
    date="2021-01-02",
    list_items=(LineItem("A", Decimal(1), Decimal("2.50")), LineItem("B", Decimal(2), Decimal("1.00"))),
    subtotal=Decimal("4.50"),
    tax=Decimal("0.36"),
    total=Decimal("4.86"),
    payment=Decimal("5.00"),
    change=Decimal("0.14"),
)


class FakeClock:
    def __init__(self):
        self.now = 0.0
        self.sleeps = []

    def __call__(self):
        return self.now

    def sleep(self, s):
        self.sleeps.append(s)
        self.now += s


def gemini(handler, monkeypatch, **cfg):
    monkeypatch.setenv("TEST_GEMINI_KEY", "k-123")
    clock = FakeClock()
    config = ExtractorConfig(api_key_env="TEST_GEMINI_KEY", **cfg)
    client = httpx.Client(transport=httpx.MockTransport(handler))
    limiter = TokenBucket(6000, clock=clock, sleep=clock.sleep)
    return GeminiExtractor(config, client=client, sleep=clock.sleep, limiter=limiter), clock


def reply(text):
    return httpx.Response(200, json={"candidates": [{"content": {"parts": [{"text": text}]}}]})


class TestPrompts:
    def test_entity_prompt_contract(self):
        assert "Date Format: YYYY-mm-dd" in ENTITY_PROMPT
        assert "Use json not markdown." in ENTITY_PROMPT
        assert "case sensitive" in ENTITY_PROMPT
        for key in ("Vendor", "List items", "Subtotal", "Tax", "Total", "Payment", "Change"):
            assert key in ENTITY_PROMPT
        assert FULLTEXT_PROMPT and FULLTEXT_PROMPT != ENTITY_PROMPT


class TestParser:
    def test_clean(self):
        rec, recovered = parse_model_output_ex(REC.to_json())
        assert rec == REC and not recovered

    @pytest.mark.parametrize(
        "raw",
        [
            "```json\n" + REC.to_json() + "\n```",
            "Here you go:\n" + REC.to_json() + "\nThanks",
            "[" + REC.to_json() + "]",
            REC.to_json().replace('"Change": 0.14', '"Change": 0.14,'),
        ],
    )
    def test_recovered(self, raw):
        rec, recovered = parse_model_output_ex(raw)
        assert rec == REC
        assert recovered or raw.startswith("[")

    def test_python_literals(self):
        rec = parse_model_output('```\n{"Vendor": "X", "Change": None,}\n```')
        assert rec.vendor == "X" and rec.change is None

    @pytest.mark.parametrize("raw", ["", "no json here", "[1, 2]", '"just a string"', "{broken"])
    def test_failures(self, raw):
        with pytest.raises(ParseError):
            parse_model_output(raw)


class TestCache:
    def test_put_get(self, tmp_path):
        c = ResponseCache(tmp_path)
        key = response_key("ab" * 32, "p", ExtractorConfig())
        assert c.get(key) is None and key not in c
        c.put(key, "héllo\n")
        assert c.get(key) == "héllo\n" and key in c
        assert (tmp_path / key[:2] / f"{key}.txt").read_bytes() == "héllo\n".encode()

    def test_key_sensitivity(self):
        cfg = ExtractorConfig()
        base = response_key("a", "p", cfg)
        assert base == response_key("a", "p", ExtractorConfig())
        assert base != response_key("b", "p", cfg)
        assert base != response_key("a", "q", cfg)
        assert base != response_key("a", "p", ExtractorConfig(temperature=0.5))
        assert base != response_key("a", "p", ExtractorConfig(model_name="other"))
        assert base != response_key("a", "p", cfg, sample=1)
        # transport settings do not change the answer
        assert base == response_key("a", "p", ExtractorConfig(request_timeout=5, max_retries=0))


class TestTokenBucket:
    def test_spacing(self):
        clock = FakeClock()
        tb = TokenBucket(60, clock=clock, sleep=clock.sleep)
        for _ in range(4):
            tb.acquire()
        assert clock.now == pytest.approx(3.0)

    def test_burst(self):
        clock = FakeClock()
        tb = TokenBucket(30, capacity=3, clock=clock, sleep=clock.sleep)
        for _ in range(3):
            tb.acquire()
        assert clock.now == 0
        tb.acquire()
        assert clock.now == pytest.approx(2.0)


class TestGemini:
    def test_request_shape(self, monkeypatch):
        seen = {}

        def handler(req):
            seen["url"] = str(req.url)
            seen["key"] = req.headers["x-goog-api-key"]
            seen["body"] = json.loads(req.content)
            return reply("hi")

        ex, _ = gemini(handler, monkeypatch, temperature=0.2, top_p=0.5, max_output_tokens=100)
        assert ex.generate("prompt", b"PNGDATA") == "hi"
        assert seen["url"].endswith("/models/gemini-1.5-pro-002:generateContent")
        assert seen["key"] == "k-123"
        parts = seen["body"]["contents"][0]["parts"]
        assert parts[0] == {"text": "prompt"}
        assert base64.b64decode(parts[1]["inline_data"]["data"]) == b"PNGDATA"
        assert parts[1]["inline_data"]["mime_type"] == "image/png"
        assert seen["body"]["generationConfig"] == {"temperature": 0.2, "topP": 0.5, "maxOutputTokens": 100}

    def test_retries_then_succeeds(self, monkeypatch):
        codes = iter([503, 429])

        def handler(req):
            code = next(codes, 200)
            return reply("ok") if code == 200 else httpx.Response(code)

        ex, clock = gemini(handler, monkeypatch)
        assert ex.generate("p", b"x") == "ok"
        assert ex.calls == 3
        assert 1.0 in clock.sleeps and 2.0 in clock.sleeps

    def test_gives_up(self, monkeypatch):
        ex, _ = gemini(lambda req: httpx.Response(500), monkeypatch, max_retries=2)
        with pytest.raises(TransportError, match="3 attempts"):
            ex.generate("p", b"x")
        assert ex.calls == 3

    def test_network_errors_retried(self, monkeypatch):
        state = {"n": 0}

        def handler(req):
            state["n"] += 1
            if state["n"] == 1:
                raise httpx.ConnectError("down")
            return reply("ok")

        ex, _ = gemini(handler, monkeypatch)
        assert ex.generate("p", b"x") == "ok"

    def test_client_error_not_retried(self, monkeypatch):
        ex, _ = gemini(lambda req: httpx.Response(400, text="bad"), monkeypatch)
        with pytest.raises(TransportError, match="400"):
            ex.generate("p", b"x")
        assert ex.calls == 1

    def test_missing_key(self, monkeypatch):
        monkeypatch.delenv("NO_SUCH_KEY_VAR", raising=False)
        ex = GeminiExtractor(ExtractorConfig(api_key_env="NO_SUCH_KEY_VAR"),
                             client=httpx.Client(transport=httpx.MockTransport(lambda r: reply("x"))))
        with pytest.raises(TransportError, match="NO_SUCH_KEY_VAR"):
            ex.generate("p", b"x")

    def test_empty_candidates(self, monkeypatch):
        ex, _ = gemini(lambda req: httpx.Response(200, json={"candidates": []}), monkeypatch)
        assert ex.generate("p", b"x") == ""

    @pytest.mark.parametrize("kw", [{"temperature": -1}, {"top_p": 0}, {"max_output_tokens": 0}, {"repeats": 0}])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            ExtractorConfig(**kw)


class TestMocks:
    def test_row_shuffle_moves_every_value(self):
        s = row_shuffle(REC)
        assert (s.subtotal, s.tax, s.total, s.payment) == (REC.tax, REC.total, REC.payment, REC.subtotal)
        assert s.vendor == REC.vendor and s.change == REC.change

    def test_drop_items(self):
        assert drop_items(REC).list_items == REC.list_items[:1]
        assert drop_items(REC, 5).list_items == ()

    def test_numeric_noise_changes_one_field(self):
        noisy = numeric_noise(REC, random.Random(1))
        diffs = [f for f in ("subtotal", "tax", "total", "payment", "change") if getattr(noisy, f) != getattr(REC, f)]
        assert len(diffs) == 1

    def test_lookup_by_image_hash(self):
        png = encode_png(gradient(5, 5))
        m = MockExtractor({hashlib.sha256(png).hexdigest(): REC})
        assert parse_model_output(m.generate(ENTITY_PROMPT, png)) == REC
        with pytest.raises(TransportError):
            m.generate(ENTITY_PROMPT, b"other")

    def test_seeded_noise_is_deterministic(self):
        png = encode_png(gradient(5, 5))
        truths = {hashlib.sha256(png).hexdigest(): REC}
        a = MockExtractor(truths, "numeric_noise", seed=3).generate(ENTITY_PROMPT, png)
        b = MockExtractor(truths, "numeric_noise", seed=3).generate(ENTITY_PROMPT, png)
        assert a == b

    def test_fulltext_transcript(self):
        m = MockExtractor({}, transcript="RECEIPT TEXT")
        assert extract_fulltext(m, b"anything") == "RECEIPT TEXT"

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            MockExtractor({}, "sideways")


class TestExtractEntities:
    def setup_method(self):
        self.png = encode_png(gradient(6, 4))
        self.mock = MockExtractor({hashlib.sha256(self.png).hexdigest(): REC})

    def test_ok_then_cache_hit(self, tmp_path):
        cache = ResponseCache(tmp_path)
        first = extract_entities(self.mock, self.png, cache)
        assert first.status == "ok" and first.prediction == REC and not first.cache_hit
        second = extract_entities(self.mock, self.png, cache)
        assert second.cache_hit and second.raw_text == first.raw_text
        assert self.mock.calls == 1

    def test_replay_uses_cache_only(self, tmp_path):
        cache = ResponseCache(tmp_path)
        extract_entities(self.mock, self.png, cache)
        replay = ReplayExtractor(self.mock.config)
        out = extract_entities(replay, self.png, cache)
        assert out.status == "ok" and out.cache_hit
        miss = extract_entities(replay, b"unknown", cache)
        assert miss.status == "transport_failed" and "replay" in miss.error

    def test_samples_cached_separately(self, tmp_path):
        cache = ResponseCache(tmp_path)
        extract_entities(self.mock, self.png, cache, sample=0)
        extract_entities(self.mock, self.png, cache, sample=1)
        assert self.mock.calls == 2

    def test_parse_statuses(self):
        class Fixed:
            config = ExtractorConfig(model_name="fixed")

            def __init__(self, text):
                self.text = text

            def generate(self, prompt, png):
                return self.text

        assert extract_entities(Fixed("nonsense"), b"x").status == "parse_failed"
        assert extract_entities(Fixed("```json\n{}\n```"), b"x").status == "parse_recovered"
        assert extract_entities(Fixed("{}"), b"x").status == "ok"

    def test_respond_accepts_images(self, tmp_path):
        r = respond(self.mock, ENTITY_PROMPT, gradient(6, 4))
        assert json.loads(r.text)["Vendor"] == "Shop"

    def test_outcome_validation(self):
        with pytest.raises(ValueError):
            ExtractionOutcome(None, "", "ok", 0.0, False)
        with pytest.raises(ValueError):
            ExtractionOutcome(None, "", "weird", 0.0, False)
