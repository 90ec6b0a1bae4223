import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image, ImageDraw

from trapzbench.raster import RasterImage, write_image

TRUTH = {
    "Vendor": "Patron Grill",
    "Date": "2020-03-14",
    "List items": [
        {"Item": "Chicken Tacos", "Quantity": 2, "Price": 24.00},
        {"Item": "Nachos", "Quantity": 1, "Price": 12.50},
        {"Item": "Margarita", "Quantity": 3, "Price": 34.90},
    ],
    "Subtotal": 71.40,
    "Tax": 5.71,
    "Total": 77.11,
    "Payment": 80.00,
    "Change": 2.89,
}


def gradient(width: int, height: int) -> RasterImage:
    """Smooth RGB ramp: red along x, green along y, blue along the diagonal."""
    y, x = np.mgrid[0:height, 0:width].astype(float)
    r = 30 + 190 * x / max(width - 1, 1)
    g = 30 + 190 * y / max(height - 1, 1)
    b = 60 + 120 * (x + y) / max(width + height - 2, 1)
    return RasterImage(np.rint(np.stack([r, g, b], axis=-1)).astype(np.uint8))


def receipt_image(width: int, height: int, seed: int = 0) -> RasterImage:
    """Synthetic receipt: white page with rows of dark text."""
    rng = np.random.default_rng(seed)
    im = Image.new("RGB", (width, height), "white")
    draw = ImageDraw.Draw(im)
    line = 14
    for i, y in enumerate(range(8, height - line, line + 4)):
        words = ["".join(rng.choice(list("ABCDEFGHJKLMNPRSTUVXYZ0123456789"), 6)) for _ in range(3)]
        draw.text((6, y), "  ".join(words) + f"  {i * 1.25:.2f}", fill=(20, 20, 20))
    return RasterImage(np.asarray(im))


def write_truth(path: Path, **overrides) -> Path:
    data = dict(TRUTH)
    data.update(overrides)
    data = {k: v for k, v in data.items() if v is not ...}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2), encoding="utf-8")
    return path


def make_sources(root: Path, n: int, width: int = 40, height: int = 60) -> list[tuple[Path, Path]]:
    out = []
    for i in range(n):
        img = root / "sources" / f"rcpt{i:02d}.png"
        write_image(receipt_image(width, height, seed=i), img)
        truth = write_truth(root / "truths" / f"rcpt{i:02d}.json", Vendor=f"Vendor {i}")
        out.append((img, truth))
    return out


@pytest.fixture
def truth_path(tmp_path):
    return write_truth(tmp_path / "truth.json")
