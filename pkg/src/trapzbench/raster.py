"""Pixel-level warping of document images.

Pixel (row i, column j) covers the unit square [j, j+1] x [i, i+1], so an
image of size W x H is the rectangle [0, W] x [0, H] with its centre samples
at half-integers. The homographies of :mod:`trapzbench.geometry` act on
these coordinates directly: O is the top-left corner of the document, OC its
top edge, and a positive angle turns the page clockwise on screen.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numba
import numpy as np
from PIL import Image

from .geometry import (
    EPS,
    DocumentExtent,
    Homography,
    HorizonError,
    Point2,
    Quad,
    apply_homography,
    invert_homography,
    rectangle,
)

DEFAULT_MAX_CANVAS = 16384
WHITE = (255, 255, 255)


class RasterError(ValueError):
    pass


class OversizeError(RasterError):
    pass


class UnsupportedImageError(RasterError):
    pass


def max_canvas() -> int:
    return int(os.environ.get("TRAPZ_MAX_CANVAS", DEFAULT_MAX_CANVAS))


@dataclass(frozen=True, eq=False)
class RasterImage:
    pixels: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise RasterError(f"expected (h, w, 3) uint8 pixels, got {px.shape} {px.dtype}")
        if px.shape[0] == 0 or px.shape[1] == 0:
            raise RasterError("image must be non-empty")
        object.__setattr__(self, "pixels", np.ascontiguousarray(px))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def extent(self) -> DocumentExtent:
        return DocumentExtent(float(self.width), float(self.height))

    @classmethod
    def blank(cls, width: int, height: int, fill=WHITE) -> RasterImage:
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[...] = np.asarray(fill, dtype=np.uint8)
        return cls(px)

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))


@dataclass(frozen=True)
class WarpResult:
    image: RasterImage
    offset: Point2  # translation added after the homography
    forward: Homography
    source_width: int
    source_height: int

    def map_points(self, points: Sequence[Point2]) -> list[Point2]:
        return transform_points(points, self.forward, self.offset)

    def quad(self) -> Quad:
        """Warped source corners O, A, B, C in canvas coordinates."""
        return Quad(*self.map_points(rectangle(DocumentExtent(self.source_width, self.source_height))))


def canvas_for(h: Homography, width: float, height: float, margin: int = 0) -> tuple[Point2, int, int]:
    """Offset and canvas size holding the image of the [0,w]x[0,h] rectangle."""
    corners = [apply_homography(h, p) for p in rectangle(DocumentExtent(width, height))]
    for p in rectangle(DocumentExtent(width, height)):
        den = h.entries[6] * p.x + h.entries[7] * p.y + h.entries[8]
        if den <= EPS:
            raise HorizonError("source rectangle crosses the horizon line")
    xs = [p.x for p in corners]
    ys = [p.y for p in corners]
    # tolerate float noise around integer extents (e.g. cos 90deg != 0)
    x0 = math.floor(min(xs) + 1e-9) - margin
    y0 = math.floor(min(ys) + 1e-9) - margin
    w = math.ceil(max(xs) - 1e-9) + margin - x0
    h_ = math.ceil(max(ys) - 1e-9) + margin - y0
    limit = max_canvas()
    if w > limit or h_ > limit:
        raise OversizeError(f"canvas {w}x{h_} exceeds the {limit} px limit")
    return Point2(float(-x0), float(-y0)), max(w, 1), max(h_, 1)


@numba.njit(cache=True, nogil=True)
def _bilinear_kernel(src, m, out, fill):
    sh, sw = src.shape[0], src.shape[1]
    oh, ow = out.shape[0], out.shape[1]
    for i in range(oh):
        y = i + 0.5
        for j in range(ow):
            x = j + 0.5
            den = m[2, 0] * x + m[2, 1] * y + m[2, 2]
            if den <= 1e-12:
                out[i, j, 0] = fill[0]
                out[i, j, 1] = fill[1]
                out[i, j, 2] = fill[2]
                continue
            u = (m[0, 0] * x + m[0, 1] * y + m[0, 2]) / den
            v = (m[1, 0] * x + m[1, 1] * y + m[1, 2]) / den
            if u < -1e-9 or u > sw + 1e-9 or v < -1e-9 or v > sh + 1e-9:
                out[i, j, 0] = fill[0]
                out[i, j, 1] = fill[1]
                out[i, j, 2] = fill[2]
                continue
            # outermost half pixel clamps to the edge sample
            col = min(max(u - 0.5, 0.0), sw - 1.0)
            row = min(max(v - 0.5, 0.0), sh - 1.0)
            c0 = min(int(col), max(sw - 2, 0))
            r0 = min(int(row), max(sh - 2, 0))
            c1 = min(c0 + 1, sw - 1)
            r1 = min(r0 + 1, sh - 1)
            fx = col - c0
            fy = row - r0
            for k in range(3):
                top = src[r0, c0, k] * (1.0 - fx) + src[r0, c1, k] * fx
                bot = src[r1, c0, k] * (1.0 - fx) + src[r1, c1, k] * fx
                val = top * (1.0 - fy) + bot * fy
                out[i, j, k] = np.uint8(min(max(np.rint(val), 0.0), 255.0))


def _resample(src: RasterImage, dst_to_src: Homography, out_w: int, out_h: int, fill) -> RasterImage:
    """Inverse-map every destination pixel centre and sample bilinearly.

    ``dst_to_src`` maps destination canvas coordinates to source coordinates.
    """
    out = np.empty((out_h, out_w, 3), dtype=np.uint8)
    _bilinear_kernel(src.pixels, dst_to_src.matrix, out, np.asarray(fill, dtype=np.uint8))
    return RasterImage(out)


def warp_image(src: RasterImage, h: Homography, fill=WHITE, margin: int = 0) -> WarpResult:
    """Forward-warp ``src`` by ``h`` onto the tight bounding canvas of its corners."""
    inv = invert_homography(h)
    offset, w, hh = canvas_for(h, src.width, src.height, margin)
    # canvas coords -> undo offset -> inverse homography
    dst_to_src = inv @ Homography.translation(-offset.x, -offset.y)
    img = _resample(src, dst_to_src, w, hh, fill)
    return WarpResult(img, offset, h, src.width, src.height)


def rectify_full(distorted: WarpResult, fill=WHITE) -> RasterImage:
    """Undo the full forward transform, restoring the source extent."""
    fwd = Homography.translation(distorted.offset.x, distorted.offset.y) @ distorted.forward
    invert_homography(fwd)  # raises on singular forward transforms
    return _resample(distorted.image, fwd, distorted.source_width, distorted.source_height, fill)


def rectify_rotation(distorted: WarpResult, theta_deg: float, fill=WHITE) -> WarpResult:
    """Rotate back by ``-theta`` only, leaving the trapezoidal distortion in place.

    Rotation is about the canvas origin; re-fitting the canvas makes this
    equivalent to rotating about any other centre. The returned ``forward``
    is the correcting rotation relative to ``distorted.image``.
    """
    if theta_deg == 0:
        img = distorted.image
        return WarpResult(img, Point2(0.0, 0.0), Homography.identity(), img.width, img.height)
    return warp_image(distorted.image, Homography.rotation(-theta_deg), fill)


def transform_points(points: Sequence[Point2], h: Homography, offset: Point2) -> list[Point2]:
    """Map annotation points through ``h`` and shift them onto the warped canvas."""
    out = []
    for p in points:
        q = apply_homography(h, p)
        out.append(Point2(q.x + offset.x, q.y + offset.y))
    return out


def _png_bit_depth(path) -> int | None:
    with open(path, "rb") as fh:
        head = fh.read(25)
    if head[:8] != b"\x89PNG\r\n\x1a\n" or len(head) < 25:
        return None
    return head[24]


def read_image(path) -> RasterImage:
    try:
        depth = _png_bit_depth(path)
        im = Image.open(path)
        im.load()
    except (OSError, ValueError) as exc:
        raise UnsupportedImageError(f"cannot read image {path}: {exc}") from exc
    if im.mode in ("I;16", "I;16B", "I;16L", "I", "F") or (depth is not None and depth > 8):
        raise UnsupportedImageError(f"{path}: only 8-bit images are supported (mode {im.mode})")
    if im.mode in ("RGBA", "LA", "PA") or (im.mode == "P" and "transparency" in im.info):
        rgba = im.convert("RGBA")
        bg = Image.new("RGBA", rgba.size, (255, 255, 255, 255))
        im = Image.alpha_composite(bg, rgba)
    return RasterImage(np.asarray(im.convert("RGB"), dtype=np.uint8))


def encode_png(img: RasterImage) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img.pixels, "RGB").save(buf, format="PNG", compress_level=1)
    return buf.getvalue()


def write_image(img: RasterImage, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_png(img))
    os.replace(tmp, path)
