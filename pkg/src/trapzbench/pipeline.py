"""Stage runners shared by the CLI: extract outcomes, score them."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from statistics import fmean

from .dataset import Manifest, ManifestEntry, load_truth
from .extraction import ExtractionOutcome, Extractor, ResponseCache, extract_entities
from .extraction.parser import ParseError, parse_model_output
from .records import ENTITIES, ReceiptRecord
from .scoring import EntityScores, ScoreRecord, receipt_scores, write_scores

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OutcomeRecord:
    source_id: str
    theta_deg: float
    k: float
    sample: int
    outcome: ExtractionOutcome

    @property
    def key(self):
        return self.source_id, self.theta_deg, self.k, self.sample

    def to_json(self) -> dict:
        o = self.outcome
        return {
            "source_id": self.source_id,
            "theta_deg": self.theta_deg,
            "k": self.k,
            "sample": self.sample,
            "status": o.status,
            "prediction": None if o.prediction is None else o.prediction.to_schema(),
            "raw_text": o.raw_text,
            "latency": round(o.latency, 6),
            "cache_hit": o.cache_hit,
            "error": o.error,
        }

    @classmethod
    def from_json(cls, d: dict) -> OutcomeRecord:
        pred = None
        if d["status"] in ("ok", "parse_recovered"):
            pred = parse_model_output(d["raw_text"])
        o = ExtractionOutcome(pred, d["raw_text"], d["status"], d["latency"], d["cache_hit"], d.get("error"))
        return cls(d["source_id"], float(d["theta_deg"]), float(d["k"]), int(d["sample"]), o)


def read_outcomes(path) -> list[OutcomeRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(OutcomeRecord.from_json(json.loads(line)))
    return out


def run_extract(
    manifest: Manifest,
    extractor: Extractor,
    out_path,
    *,
    cache: ResponseCache | None = None,
    jobs: int = 4,
    repeats: int = 1,
) -> list[OutcomeRecord]:
    """Extract every manifest variant; completed outcomes survive interruption.

    Finished outcomes are journalled next to ``out_path``; a restarted run
    reuses them (transport failures are retried) and the final file is written
    in manifest order.
    """
    out_path = Path(out_path)
    journal = out_path.with_name(out_path.name + ".partial")
    done: dict[tuple, OutcomeRecord] = {}
    if journal.exists():
        for rec in read_outcomes(journal):
            if rec.outcome.status != "transport_failed":
                done[rec.key] = rec

    todo = [(e, s) for e in manifest.entries for s in range(repeats) if (*e.key, s) not in done]

    def work(item: tuple[ManifestEntry, int]) -> OutcomeRecord:
        e, s = item
        png = manifest.variant(e).read_bytes()
        return OutcomeRecord(e.source_id, e.theta_deg, e.k, s, extract_entities(extractor, png, cache, s))

    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(journal, "a", encoding="utf-8") as jf, ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        for rec in pool.map(work, todo):
            jf.write(json.dumps(rec.to_json()) + "\n")
            jf.flush()
            done[rec.key] = rec

    ordered = [done[(*e.key, s)] for e in manifest.entries for s in range(repeats)]
    tmp = out_path.with_name(out_path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for rec in ordered:
            fh.write(json.dumps(rec.to_json()) + "\n")
    os.replace(tmp, out_path)
    journal.unlink()
    return ordered


def _prediction(rec: OutcomeRecord) -> ReceiptRecord | None:
    o = rec.outcome
    if o.status not in ("ok", "parse_recovered"):
        return None
    try:
        return parse_model_output(o.raw_text)
    except ParseError:
        return None


def run_score(manifest: Manifest, outcomes: list[OutcomeRecord], out_path) -> list[ScoreRecord]:
    """Score outcomes against ground truth; repeated samples of a variant are averaged."""
    by_key: dict[tuple, list[OutcomeRecord]] = {}
    for rec in outcomes:
        by_key.setdefault((rec.source_id, rec.theta_deg, rec.k), []).append(rec)
    known = {e.key for e in manifest.entries}
    orphans = [k for k in by_key if k not in known]
    if orphans:
        raise ValueError(f"{len(orphans)} outcome(s) do not match the manifest, e.g. {orphans[0]}")
    truths: dict[str, ReceiptRecord] = {}
    records = []
    for e in manifest.entries:
        samples = by_key.get(e.key)
        if not samples:
            continue
        if e.truth_path not in truths:
            truths[e.truth_path] = load_truth(e.truth_path)
        truth = truths[e.truth_path]
        per = [receipt_scores(truth, _prediction(s)).as_dict() for s in sorted(samples, key=lambda s: s.sample)]
        scores = EntityScores(*(per[0][n] if len(per) == 1 else fmean(p[n] for p in per) for n in ENTITIES))
        statuses = [s.outcome.status for s in samples]
        status = next((st for st in statuses if st != "ok"), "ok")
        records.append(ScoreRecord(e.source_id, e.theta_deg, e.k, scores, status))
    write_scores(records, out_path)
    return records
