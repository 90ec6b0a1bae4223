"""Sweep synthesis over the (theta, r) grid, variant manifest, ground truth loading."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Iterator, Sequence

from .geometry import DistortionParams, DocumentExtent, Homography, Point2, homography_from_params
from .raster import WHITE, canvas_for, encode_png, read_image, warp_image
from .records import ReceiptRecord, RecordError, record_from_schema

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"


class TruthParseError(RecordError):
    pass


@dataclass(frozen=True)
class SweepGrid:
    """Rotation angles in degrees and distortion ratios given as base-2 exponents."""

    thetas: tuple[float, ...]
    exponents: tuple[float, ...]

    @property
    def ratios(self) -> tuple[float, ...]:
        return tuple(2.0**k for k in self.exponents)

    def cells(self) -> Iterator[tuple[float, float]]:
        for t in self.thetas:
            for k in self.exponents:
                yield t, k

    def __len__(self) -> int:
        return len(self.thetas) * len(self.exponents)

    @classmethod
    def parse(cls, spec: str) -> SweepGrid:
        """Parse ``"<theta,...>;<k,...>"``; either side may be ``default``."""
        try:
            t_part, k_part = spec.split(";")
        except ValueError:
            raise ValueError(f"grid must look like '<thetas>;<exponents>', got {spec!r}") from None
        d = default_grid()
        thetas = d.thetas if t_part.strip() in ("", "default") else tuple(float(x) for x in t_part.split(","))
        ks = d.exponents if k_part.strip() in ("", "default") else tuple(float(x) for x in k_part.split(","))
        return cls(thetas, ks)


def default_grid() -> SweepGrid:
    return SweepGrid(
        thetas=tuple(float(t) for t in range(-90, 91, 10)),
        exponents=tuple(k / 2 for k in range(-4, 5)),
    )


def _label(x: float) -> str:
    return f"{x:g}"


def variant_name(source_id: str, theta: float, k: float) -> str:
    return f"{source_id}/theta_{_label(theta)}_r_{_label(k)}.png"


@dataclass(frozen=True)
class ManifestEntry:
    source_id: str
    theta_deg: float
    k: float
    variant_path: str  # relative to the manifest directory
    truth_path: str
    extent: DocumentExtent
    homography: Homography
    offset: Point2
    sha256: str

    @property
    def r(self) -> float:
        return 2.0**self.k

    @property
    def key(self) -> tuple[str, float, float]:
        return self.source_id, self.theta_deg, self.k

    def to_json(self) -> dict:
        return {
            "status": "ok",
            "source_id": self.source_id,
            "theta_deg": self.theta_deg,
            "k": self.k,
            "r": self.r,
            "variant_path": self.variant_path,
            "truth_path": self.truth_path,
            "extent": [self.extent.w0, self.extent.h0],
            "homography": list(self.homography.entries),
            "offset": [self.offset.x, self.offset.y],
            "sha256": self.sha256,
        }

    @classmethod
    def from_json(cls, d: dict) -> ManifestEntry:
        return cls(
            source_id=d["source_id"],
            theta_deg=float(d["theta_deg"]),
            k=float(d["k"]),
            variant_path=d["variant_path"],
            truth_path=d["truth_path"],
            extent=DocumentExtent(*d["extent"]),
            homography=Homography(tuple(d["homography"])),
            offset=Point2(*d["offset"]),
            sha256=d["sha256"],
        )


@dataclass
class Manifest:
    root: Path
    entries: list[ManifestEntry] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)

    @property
    def path(self) -> Path:
        return self.root / MANIFEST_NAME

    def variant(self, e: ManifestEntry) -> Path:
        return self.root / e.variant_path

    def source_ids(self) -> list[str]:
        return sorted({e.source_id for e in self.entries})

    def write(self) -> Path:
        lines = [json.dumps(e.to_json()) for e in self.entries]
        lines += [json.dumps(f) for f in self.failures]
        self.root.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        os.replace(tmp, self.path)
        return self.path

    @classmethod
    def read(cls, path) -> Manifest:
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        m = cls(path.parent)
        seen = set()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                d = json.loads(line)
                if d.get("status") != "ok":
                    m.failures.append(d)
                    continue
                e = ManifestEntry.from_json(d)
                if e.key in seen:
                    raise ValueError(f"{path}:{lineno}: duplicate entry {e.key}")
                seen.add(e.key)
                m.entries.append(e)
        return m


def load_truth(path) -> ReceiptRecord:
    """Parse a ground-truth JSON file keyed like the extraction schema."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text, parse_float=Decimal, parse_int=Decimal)
    except json.JSONDecodeError as exc:
        raise TruthParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return record_from_schema(data, strict=True)
    except RecordError as exc:
        # keep DateFormatError distinguishable for callers
        raise type(exc)(f"{path}: {exc}") from exc


def _synthesize_one(src_img, extent, theta, k, target: Path, fill) -> tuple[Homography, Point2, str]:
    h = homography_from_params(extent, DistortionParams(theta, 2.0**k))
    if target.exists():
        offset, _, _ = canvas_for(h, extent.w0, extent.h0)
        data = target.read_bytes()
    else:
        res = warp_image(src_img, h, fill)
        offset = res.offset
        data = encode_png(res.image)
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = target.with_name(target.name + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, target)
    return h, offset, hashlib.sha256(data).hexdigest()


def synthesize_sweep(
    sources: Sequence[tuple[str | Path, str | Path]],
    grid: SweepGrid,
    out_dir,
    *,
    jobs: int = 1,
    fill=WHITE,
) -> Manifest:
    """Warp every source over every grid cell and write the manifest.

    Existing variant files are kept as they are, so interrupted runs resume.
    Per-source and per-cell failures are recorded, not raised.
    """
    out_dir = Path(out_dir)
    manifest = Manifest(out_dir)
    ids = [Path(img).stem for img, _ in sources]
    if len(set(ids)) != len(ids):
        raise ValueError("source image names must be unique")

    for (img_path, truth_path), sid in zip(sources, ids):
        try:
            load_truth(truth_path)
            src = read_image(img_path)
        except (OSError, ValueError) as exc:
            log.warning("skipping source %s: %s", sid, exc)
            manifest.failures.append(
                {"status": "failed", "source_id": sid, "theta_deg": None, "k": None, "error": str(exc)}
            )
            continue
        extent = src.extent
        cells = list(grid.cells())

        def work(cell):
            theta, k = cell
            rel = variant_name(sid, theta, k)
            try:
                return cell, rel, _synthesize_one(src, extent, theta, k, out_dir / rel, fill), None
            except (OSError, ValueError) as exc:
                return cell, rel, None, exc

        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            results = list(pool.map(work, cells))
        for (theta, k), rel, res, exc in results:
            if exc is not None:
                manifest.failures.append(
                    {"status": "failed", "source_id": sid, "theta_deg": theta, "k": k, "error": str(exc)}
                )
                continue
            h, offset, digest = res
            manifest.entries.append(
                ManifestEntry(sid, theta, k, rel, str(Path(truth_path).resolve()), extent, h, offset, digest)
            )
    manifest.write()
    return manifest
