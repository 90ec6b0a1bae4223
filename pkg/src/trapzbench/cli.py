"""Command-line entry point: warp, sweep, extract, score, report, rectify.

Exit codes: 0 success, 1 usage/config error, 2 partial (some entries
failed), 3 total failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dataset import MANIFEST_NAME, Manifest, SweepGrid, default_grid, synthesize_sweep
from .extraction import (
    ExtractorConfig,
    GeminiExtractor,
    ReplayExtractor,
    ResponseCache,
    mock_extractor,
)
from .geometry import DistortionParams, DocumentExtent, GeometryError, Homography, Point2, homography_from_params
from .pipeline import read_outcomes, run_extract, run_score
from .raster import RasterError, WarpResult, canvas_for, read_image, rectify_full, rectify_rotation, warp_image, write_image
from .report import write_report
from .scoring import read_scores

log = logging.getLogger("trapzbench")

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL, EXIT_FAILED = 0, 1, 2, 3
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    sources_dir: Path | None = None
    truths_dir: Path | None = None
    workdir: Path = Path("work")
    grid: SweepGrid = field(default_factory=default_grid)
    extractor: str = "mock:perfect"
    extractor_config: ExtractorConfig = field(default_factory=ExtractorConfig)
    cache_dir: Path | None = None
    jobs: int = os.cpu_count() or 1
    in_flight: int = 4
    seed: int = 0
    heatmap_block: int = 16

    @property
    def variants_dir(self) -> Path:
        return self.workdir / "variants"

    @property
    def manifest_path(self) -> Path:
        return self.variants_dir / MANIFEST_NAME

    @property
    def outcomes_path(self) -> Path:
        return self.workdir / "outcomes.jsonl"

    @property
    def scores_path(self) -> Path:
        return self.workdir / "scores.jsonl"

    @property
    def report_dir(self) -> Path:
        return self.workdir / "report"

    @property
    def cache(self) -> Path:
        return self.cache_dir or self.workdir / "cache"


def load_config(path) -> RunConfig:
    """Read a TOML run configuration; relative paths resolve against its directory."""
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    base = path.parent
    cfg = RunConfig()
    paths = data.get("paths", {})
    for key in ("sources_dir", "truths_dir", "workdir", "cache_dir"):
        if key in paths:
            setattr(cfg, key, base / paths[key])
    g = data.get("grid", {})
    if g:
        d = default_grid()
        cfg.grid = SweepGrid(tuple(map(float, g.get("thetas", d.thetas))), tuple(map(float, g.get("exponents", d.exponents))))
    ex = dict(data.get("extractor", {}))
    if "kind" in ex:
        cfg.extractor = ex.pop("kind")
    names = {f.name for f in fields(ExtractorConfig)}
    unknown = set(ex) - names
    if unknown:
        raise UsageError(f"unknown extractor settings: {', '.join(sorted(unknown))}")
    try:
        cfg.extractor_config = replace(cfg.extractor_config, **ex)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad extractor settings: {exc}") from exc
    conc = data.get("concurrency", {})
    cfg.jobs = int(conc.get("jobs", cfg.jobs))
    cfg.in_flight = int(conc.get("in_flight", cfg.in_flight))
    cfg.seed = int(data.get("seed", cfg.seed))
    cfg.heatmap_block = int(data.get("report", {}).get("heatmap_block", cfg.heatmap_block))
    return cfg


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.workdir:
        cfg.workdir = Path(args.workdir)
    if args.jobs:
        cfg.jobs = args.jobs
    if args.grid:
        try:
            cfg.grid = SweepGrid.parse(args.grid)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    if args.seed is not None:
        cfg.seed = args.seed
    for name in ("sources", "truths"):
        val = getattr(args, name, None)
        if val:
            setattr(cfg, f"{name}_dir", Path(val))
    if getattr(args, "extractor", None):
        cfg.extractor = args.extractor
    if getattr(args, "cache_dir", None):
        cfg.cache_dir = Path(args.cache_dir)
    return cfg


def _positive_ratio(text: str) -> float:
    r = float(text)
    if not r > 0:
        raise argparse.ArgumentTypeError("r must be > 0")
    return r


def _print_homography(h: Homography) -> None:
    rows = [h.entries[i : i + 3] for i in (0, 3, 6)]
    for row in rows:
        print(" ".join(f"{v:.12g}" for v in row))


def cmd_warp(args, cfg: RunConfig) -> int:
    img = read_image(args.image)
    h = homography_from_params(img.extent, DistortionParams(args.theta, args.r))
    res = warp_image(img, h)
    write_image(res.image, args.out)
    _print_homography(h)
    return EXIT_OK


def discover_sources(cfg: RunConfig) -> list[tuple[Path, Path]]:
    if cfg.sources_dir is None or cfg.truths_dir is None:
        raise UsageError("sweep needs --sources and --truths (or [paths] in the config)")
    if not cfg.sources_dir.is_dir() or not cfg.truths_dir.is_dir():
        raise UsageError("sources and truths must be existing directories")
    images = sorted(p for p in cfg.sources_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    return [(p, cfg.truths_dir / f"{p.stem}.json") for p in images]


def cmd_sweep(args, cfg: RunConfig) -> int:
    sources = discover_sources(cfg)
    if not sources:
        raise UsageError(f"no source images in {cfg.sources_dir}")
    before = _count_files(cfg.variants_dir)
    manifest = synthesize_sweep(sources, cfg.grid, cfg.variants_dir, jobs=cfg.jobs)
    created = _count_files(cfg.variants_dir) - before
    print(f"{len(manifest.entries)} variants ({created} new), {len(manifest.failures)} failures -> {manifest.path}")
    for f in manifest.failures:
        print(f"failed: {f['source_id']} theta={f['theta_deg']} k={f['k']}: {f['error']}", file=sys.stderr)
    if not manifest.entries:
        return EXIT_FAILED
    return EXIT_PARTIAL if manifest.failures else EXIT_OK


def _count_files(d: Path) -> int:
    return sum(1 for _ in d.rglob("*.png")) if d.exists() else 0


def build_extractor(cfg: RunConfig, manifest: Manifest):
    kind = cfg.extractor
    if kind.startswith("mock"):
        mode = kind.partition(":")[2] or "perfect"
        try:
            return mock_extractor(manifest, mode, cfg.seed), None
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    cache = ResponseCache(cfg.cache)
    if kind == "replay":
        return ReplayExtractor(cfg.extractor_config), cache
    if kind == "gemini":
        return GeminiExtractor(cfg.extractor_config), cache
    raise UsageError(f"unknown extractor {kind!r} (mock[:mode], gemini, replay)")


def _load_manifest(args, cfg: RunConfig) -> Manifest:
    path = Path(args.manifest) if getattr(args, "manifest", None) else cfg.manifest_path
    if not path.exists():
        raise UsageError(f"manifest not found: {path}")
    return Manifest.read(path)


def cmd_extract(args, cfg: RunConfig) -> int:
    manifest = _load_manifest(args, cfg)
    extractor, cache = build_extractor(cfg, manifest)
    recs = run_extract(manifest, extractor, cfg.outcomes_path, cache=cache, jobs=cfg.in_flight,
                       repeats=cfg.extractor_config.repeats)
    failed = sum(r.outcome.status in ("transport_failed", "parse_failed") for r in recs)
    calls = getattr(extractor, "calls", 0) if not cfg.extractor.startswith("mock") else 0
    print(f"{len(recs)} outcomes, {failed} failed, {calls} network calls -> {cfg.outcomes_path}")
    if recs and failed == len(recs):
        return EXIT_FAILED
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_score(args, cfg: RunConfig) -> int:
    manifest = _load_manifest(args, cfg)
    path = Path(args.outcomes) if args.outcomes else cfg.outcomes_path
    if not path.exists():
        raise UsageError(f"outcomes not found: {path}")
    records = run_score(manifest, read_outcomes(path), cfg.scores_path)
    print(f"{len(records)} score records -> {cfg.scores_path}")
    if not records:
        return EXIT_FAILED
    return EXIT_PARTIAL if len(records) < len(manifest.entries) else EXIT_OK


def cmd_report(args, cfg: RunConfig) -> int:
    manifest = _load_manifest(args, cfg)
    path = Path(args.scores) if args.scores else cfg.scores_path
    if not path.exists():
        raise UsageError(f"scores not found: {path}")
    records = read_scores(path)
    if not records:
        print(f"error: {path} contains no score records", file=sys.stderr)
        return EXIT_FAILED
    out = Path(args.out) if args.out else cfg.report_dir
    grids = write_report(records, manifest, out, cfg.heatmap_block)
    missing = grids[0].incomplete()
    print(f"{len(grids)} grids -> {out}" + (f" ({len(missing)} incomplete cells)" if missing else ""))
    return EXIT_PARTIAL if missing else EXIT_OK


def cmd_rectify(args, cfg: RunConfig) -> int:
    img = read_image(args.image)
    if args.r is None:
        res = rectify_rotation(WarpResult(img, Point2(0.0, 0.0), Homography.identity(), img.width, img.height), args.theta)
        write_image(res.image, args.out)
        return EXIT_OK
    if not args.size:
        raise UsageError("full rectification needs --size WxH of the undistorted source")
    try:
        w, h = (int(v) for v in args.size.lower().split("x"))
    except ValueError:
        raise UsageError(f"--size must look like WxH, got {args.size!r}") from None
    fwd = homography_from_params(DocumentExtent(float(w), float(h)), DistortionParams(args.theta, args.r))
    offset, cw, ch = canvas_for(fwd, w, h)
    if (cw, ch) != (img.width, img.height):
        raise UsageError(f"image is {img.width}x{img.height}, expected a {cw}x{ch} canvas for these parameters")
    write_image(rectify_full(WarpResult(img, offset, fwd, w, h)), args.out)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--workdir", help="working directory (default: work)")
    common.add_argument("--jobs", type=int, help="parallel workers")
    common.add_argument("--grid", help='override grid: "<theta,...>;<k,...>" with r = 2^k')
    common.add_argument("--seed", type=int, help="seed for mock extractors")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="trapz", description="Perspective-distortion robustness benchmark for document extraction.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    w = sub.add_parser("warp", parents=[common], help="write one distorted variant")
    w.add_argument("image")
    w.add_argument("--theta", type=float, required=True, help="rotation angle in degrees, clockwise positive")
    w.add_argument("--r", type=_positive_ratio, required=True, help="distortion ratio (> 0)")
    w.add_argument("out")
    w.set_defaults(func=cmd_warp)

    s = sub.add_parser("sweep", parents=[common], help="synthesize the (theta, r) sweep")
    s.add_argument("--sources", help="directory of source images")
    s.add_argument("--truths", help="directory of <image stem>.json ground truths")
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("extract", parents=[common], help="run the extractor over all variants")
    e.add_argument("--manifest")
    e.add_argument("--extractor", help="mock[:perfect|row_shuffle|drop_items|numeric_noise], gemini or replay")
    e.add_argument("--cache-dir")
    e.set_defaults(func=cmd_extract)

    sc = sub.add_parser("score", parents=[common], help="score extraction outcomes")
    sc.add_argument("--manifest")
    sc.add_argument("--outcomes")
    sc.set_defaults(func=cmd_score)

    rp = sub.add_parser("report", parents=[common], help="write tables, heatmaps and a summary")
    rp.add_argument("--manifest")
    rp.add_argument("--scores")
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report)

    rc = sub.add_parser("rectify", parents=[common], help="undo rotation (or the full distortion with --r)")
    rc.add_argument("image")
    rc.add_argument("--theta", type=float, required=True)
    rc.add_argument("--r", type=_positive_ratio)
    rc.add_argument("--size", help="WxH of the undistorted source (required with --r)")
    rc.add_argument("out")
    rc.set_defaults(func=cmd_rectify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GeometryError, RasterError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
