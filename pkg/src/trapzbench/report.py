"""Per-(theta, r) score grids, CSV tables and grayscale heatmaps."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .dataset import Manifest
from .records import ENTITIES
from .scoring import ScoreRecord

GRID_NAMES = ENTITIES + ("average",)
SENTINEL_GRAY = 128


class ReportError(ValueError):
    pass


class OrphanScoreError(ReportError):
    pass


@dataclass
class ScoreGrid:
    entity: str
    thetas: tuple[float, ...]
    exponents: tuple[float, ...]
    sums: np.ndarray  # (len(thetas), len(exponents))
    counts: np.ndarray
    expected: np.ndarray

    @property
    def ratios(self) -> tuple[float, ...]:
        return tuple(2.0**k for k in self.exponents)

    @property
    def means(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, self.sums / np.maximum(self.counts, 1), np.nan)

    def cell(self, theta: float, k: float) -> tuple[float, int]:
        i, j = self.thetas.index(theta), self.exponents.index(k)
        return float(self.means[i, j]), int(self.counts[i, j])

    def incomplete(self) -> list[tuple[float, float, int, int]]:
        """(theta, k, scored, expected) for every cell short of its sources."""
        out = []
        for i, t in enumerate(self.thetas):
            for j, k in enumerate(self.exponents):
                if self.counts[i, j] < self.expected[i, j]:
                    out.append((t, k, int(self.counts[i, j]), int(self.expected[i, j])))
        return out

    @property
    def empty(self) -> bool:
        return not self.thetas or not self.exponents


def aggregate(records: Iterable[ScoreRecord], manifest: Manifest) -> list[ScoreGrid]:
    """Average score records per cell, one grid per entity plus the overall average."""
    expected_keys = {e.key for e in manifest.entries}
    thetas = tuple(sorted({e.theta_deg for e in manifest.entries}))
    ks = tuple(sorted({e.k for e in manifest.entries}))
    ti = {t: i for i, t in enumerate(thetas)}
    ki = {k: j for j, k in enumerate(ks)}

    shape = (len(thetas), len(ks))
    expected = np.zeros(shape, dtype=int)
    for _, t, k in expected_keys:
        expected[ti[t], ki[k]] += 1
    sums = {name: np.zeros(shape) for name in GRID_NAMES}
    counts = np.zeros(shape, dtype=int)
    seen = set()
    for rec in records:
        if rec.key not in expected_keys:
            raise OrphanScoreError(f"score record {rec.key} has no manifest entry")
        if rec.key in seen:
            raise ReportError(f"duplicate score record {rec.key}")
        seen.add(rec.key)
        i, j = ti[rec.theta_deg], ki[rec.k]
        counts[i, j] += 1
        values = rec.scores.as_dict()
        values["average"] = rec.average
        for name in GRID_NAMES:
            sums[name][i, j] += values[name]
    return [ScoreGrid(name, thetas, ks, sums[name], counts.copy(), expected.copy()) for name in GRID_NAMES]


def ratio_label(k: float) -> str:
    return f"2^{k:g}"


def write_grid_table(grid: ScoreGrid, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    means = grid.means
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta\\r"] + [ratio_label(k) for k in grid.exponents])
        for i, t in enumerate(grid.thetas):
            row = [f"{t:g}"]
            for j in range(len(grid.exponents)):
                row.append("" if grid.counts[i, j] == 0 else f"{means[i, j]:.4f}")
            w.writerow(row)
    return path


def read_grid_table(path) -> tuple[list[float], list[float], np.ndarray]:
    """Inverse of :func:`write_grid_table`: thetas, exponents and the mean matrix."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    ks = [float(h[2:]) for h in rows[0][1:]]
    thetas = [float(r[0]) for r in rows[1:]]
    vals = np.array([[float(c) if c else np.nan for c in r[1:]] for r in rows[1:]]).reshape(len(thetas), len(ks))
    return thetas, ks, vals


def luminance(score: float) -> int:
    """Linear grey level, rounding half up: 0.5 -> 128."""
    return int(math.floor(255.0 * score + 0.5))


def render_heatmap(grid: ScoreGrid, path, block: int = 16) -> Path:
    """Grayscale heatmap, theta left to right, r growing upward; darker is worse.

    Cells missing sources carry a mid-grey frame; cells with no data at all
    are filled mid-grey.
    """
    if grid.empty:
        raise ReportError("cannot render an empty grid")
    nt, nk = len(grid.thetas), len(grid.exponents)
    img = np.zeros((nk * block, nt * block), dtype=np.uint8)
    means = grid.means
    for i in range(nt):
        for j in range(nk):
            row = nk - 1 - j
            y0, x0 = row * block, i * block
            cell = img[y0 : y0 + block, x0 : x0 + block]
            if grid.counts[i, j] == 0:
                cell[...] = SENTINEL_GRAY
                continue
            cell[...] = luminance(float(means[i, j]))
            if grid.counts[i, j] < grid.expected[i, j]:
                cell[0, :] = cell[-1, :] = cell[:, 0] = cell[:, -1] = SENTINEL_GRAY
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img, "L").save(path, format="PNG")
    return path


def write_incomplete(grids: Sequence[ScoreGrid], path) -> Path | None:
    """Sidecar listing cells with missing score records; nothing is written if all are complete."""
    rows = grids[0].incomplete() if grids else []
    path = Path(path)
    if not rows:
        if path.exists():
            path.unlink()
        return None
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", "k", "scored", "expected"])
        for t, k, n, m in rows:
            w.writerow([f"{t:g}", f"{k:g}", n, m])
    return path


def write_summary(grids: Sequence[ScoreGrid], records: Sequence[ScoreRecord], manifest: Manifest, path) -> Path:
    avg = next(g for g in grids if g.entity == "average")
    statuses: dict[str, int] = defaultdict(int)
    for rec in records:
        statuses[rec.status] += 1
    lines = [f"variants scored: {len(records)} of {len(manifest.entries)}"]
    lines += [f"extraction {s}: {n}" for s, n in sorted(statuses.items())]
    lines.append(f"synthesis failures: {len(manifest.failures)}")
    for f in manifest.failures:
        lines.append(f"  {f.get('source_id')} theta={f.get('theta_deg')} k={f.get('k')}: {f.get('error')}")
    missing = avg.incomplete()
    lines.append(f"incomplete cells: {len(missing)}")
    lines.append("")
    lines.append("mean average score per angle:")
    for i, t in enumerate(avg.thetas):
        n = avg.counts[i].sum()
        value = "n/a" if n == 0 else f"{avg.sums[i].sum() / n:.4f}"
        lines.append(f"  theta={t:g}: {value}")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_report(records: Sequence[ScoreRecord], manifest: Manifest, out_dir, block: int = 16) -> list[ScoreGrid]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grids = aggregate(records, manifest)
    for g in grids:
        write_grid_table(g, out_dir / f"{g.entity}.csv")
        if not g.empty:
            render_heatmap(g, out_dir / f"{g.entity}.png", block)
    write_incomplete(grids, out_dir / "incomplete_cells.csv")
    write_summary(grids, records, manifest, out_dir / "summary.txt")
    return grids
