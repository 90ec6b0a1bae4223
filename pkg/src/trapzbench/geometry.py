"""Isosceles-trapezoidal homography: construction, application, inversion.

The frame has its origin at vertex O of the document, x along the edge OC
and y along the edge OA. Raster images use this frame as-is (O at the top-left
pixel corner, y pointing down the page), which makes a positive angle a
clockwise turn on screen and puts the short edge OC at the top of the page
when r > 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

EPS = 1e-12


class GeometryError(ValueError):
    pass


class DegenerateCorrespondenceError(GeometryError):
    pass


class HorizonError(GeometryError):
    """Point maps to (or across) the line at infinity."""


class SingularMatrixError(GeometryError):
    pass


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class DocumentExtent:
    w0: float
    h0: float

    def __post_init__(self):
        if not _finite(self.w0, self.h0) or self.w0 <= 0 or self.h0 <= 0:
            raise GeometryError(f"extent must be positive and finite, got {self.w0}x{self.h0}")


@dataclass(frozen=True)
class DistortionParams:
    theta_deg: float
    r: float

    def __post_init__(self):
        if not _finite(self.theta_deg, self.r):
            raise GeometryError("distortion parameters must be finite")
        if self.r <= 0:
            raise GeometryError(f"distortion ratio must be > 0, got {self.r}")
        if not -180.0 <= self.theta_deg <= 180.0:
            raise GeometryError(f"theta must lie in [-180, 180], got {self.theta_deg}")


class Point2(NamedTuple):
    x: float
    y: float


class Quad(NamedTuple):
    """Vertices O, A, B, C; OA runs along the height, OC along the width."""

    o: Point2
    a: Point2
    b: Point2
    c: Point2

    def signed_area(self) -> float:
        pts = list(self)
        s = 0.0
        for (x1, y1), (x2, y2) in zip(pts, pts[1:] + pts[:1]):
            s += x1 * y2 - x2 * y1
        return 0.5 * s

    def area(self) -> float:
        return abs(self.signed_area())


def rectangle(extent: DocumentExtent) -> Quad:
    w, h = extent.w0, extent.h0
    return Quad(Point2(0.0, 0.0), Point2(0.0, h), Point2(w, h), Point2(w, 0.0))


def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
    d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
    return d1 * d2 < 0 and d3 * d4 < 0


def validate_quad(q: Quad) -> None:
    if not _finite(*(v for p in q for v in p)):
        raise GeometryError("quad vertices must be finite")
    if abs(q.signed_area()) < EPS:
        raise GeometryError("quad has zero area")
    if _segments_cross(q.o, q.a, q.b, q.c) or _segments_cross(q.a, q.b, q.c, q.o):
        raise GeometryError("quad is self-intersecting")


@dataclass(frozen=True)
class Homography:
    """3x3 projection matrix, row-major, defined up to a nonzero scale."""

    entries: tuple[float, ...]

    def __post_init__(self):
        if len(self.entries) != 9:
            raise GeometryError("homography needs exactly nine entries")
        object.__setattr__(self, "entries", tuple(float(v) for v in self.entries))

    @classmethod
    def from_matrix(cls, m) -> Homography:
        m = np.asarray(m, dtype=float)
        if m.shape != (3, 3):
            raise GeometryError(f"expected a 3x3 matrix, got shape {m.shape}")
        return cls(tuple(m.ravel().tolist()))

    @classmethod
    def identity(cls) -> Homography:
        return cls((1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0))

    @classmethod
    def translation(cls, tx: float, ty: float) -> Homography:
        return cls((1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0))

    @classmethod
    def rotation(cls, theta_deg: float) -> Homography:
        t = math.radians(theta_deg)
        c, s = math.cos(t), math.sin(t)
        return cls((c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.entries, dtype=float).reshape(3, 3)

    def det(self) -> float:
        return float(np.linalg.det(self.matrix))

    def canonical(self) -> Homography:
        h33 = self.entries[8]
        if abs(h33) > EPS:
            return Homography(tuple(v / h33 for v in self.entries))
        norm = math.sqrt(sum(v * v for v in self.entries))
        if norm < EPS:
            raise SingularMatrixError("zero matrix is not a homography")
        return Homography(tuple(v / norm for v in self.entries))

    def __matmul__(self, other: Homography) -> Homography:
        return Homography.from_matrix(self.matrix @ other.matrix)

    def allclose(self, other: Homography, atol: float = 1e-9) -> bool:
        a = np.array(self.canonical().entries)
        b = np.array(other.canonical().entries)
        return bool(np.all(np.abs(a - b) <= atol))


def _params_radians(params: DistortionParams) -> tuple[float, float]:
    t = math.radians(params.theta_deg)
    return math.cos(t), math.sin(t)


def trapezoid_vertices(extent: DocumentExtent, params: DistortionParams) -> Quad:
    """Vertices O, A'', B'', C'' of the rotated isosceles trapezoid.

    Height and area of the rectangle are preserved; the upper bottom OC''
    has length 2*w0/(1+r) and the lower bottom A''B'' is r times longer.
    """
    w0, h0, r = extent.w0, extent.h0, params.r
    c, s = _params_radians(params)
    ax = (1.0 - r) * w0 / (1.0 + r)
    cx = 2.0 * w0 / (1.0 + r)
    return Quad(
        Point2(0.0, 0.0),
        Point2(ax * c - h0 * s, ax * s + h0 * c),
        Point2(w0 * c - h0 * s, w0 * s + h0 * c),
        Point2(cx * c, cx * s),
    )


def _collinear(p, q, r, tol: float) -> bool:
    cross = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    scale = max(math.dist(p, q) * math.dist(p, r), EPS)
    return abs(cross) / scale < tol


def _normalizer(pts: np.ndarray) -> np.ndarray:
    centroid = pts.mean(axis=0)
    d = np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean()
    if d < EPS:
        raise DegenerateCorrespondenceError("points are coincident")
    k = math.sqrt(2.0) / d
    return np.array([[k, 0, -k * centroid[0]], [0, k, -k * centroid[1]], [0, 0, 1.0]])


def homography_from_correspondences(src: Sequence[Point2], dst: Sequence[Point2]) -> Homography:
    """Exact 4-point DLT with Hartley normalization; returns canonical form."""
    if len(src) != 4 or len(dst) != 4:
        raise DegenerateCorrespondenceError("exactly four correspondences are required")
    for pts in (src, dst):
        for i in range(4):
            p, q, r = (pts[j] for j in range(4) if j != i)
            if _collinear(p, q, r, 1e-10):
                raise DegenerateCorrespondenceError("three of the four points are collinear")

    s = np.asarray(src, dtype=float)
    d = np.asarray(dst, dtype=float)
    ts, td = _normalizer(s), _normalizer(d)
    sn = (ts @ np.c_[s, np.ones(4)].T).T
    dn = (td @ np.c_[d, np.ones(4)].T).T

    rows = []
    for (x, y, _), (u, v, _) in zip(sn, dn):
        rows.append([x, y, 1, 0, 0, 0, -u * x, -u * y, -u])
        rows.append([0, 0, 0, x, y, 1, -v * x, -v * y, -v])
    a = np.array(rows)
    _, sv, vt = np.linalg.svd(a)
    if sv[7] < 1e-12 * sv[0]:
        raise DegenerateCorrespondenceError("correspondence system is singular")
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(td) @ hn @ ts
    return Homography.from_matrix(h).canonical()


def homography_from_params(extent: DocumentExtent, params: DistortionParams) -> Homography:
    """Closed-form projection matrix taking the rectangle OABC onto OA''B''C''.

    The perspective row uses h32 = +(1-r)(1+r)/(2 r h0); with this sign the
    matrix reproduces every vertex of :func:`trapezoid_vertices`.
    """
    w0, h0, r = extent.w0, extent.h0, params.r
    c, s = _params_radians(params)
    k = 2.0 * r * h0
    h = (
        c,
        ((1 - r) * w0 * c - (1 + r) * h0 * s) / k,
        0.0,
        s,
        ((1 - r) * w0 * s + (1 + r) * h0 * c) / k,
        0.0,
        0.0,
        (1 - r) * (1 + r) / k,
        (1 + r) / 2.0,
    )
    return Homography(h).canonical()


def apply_homography(h: Homography, p: Point2) -> Point2:
    h11, h12, h13, h21, h22, h23, h31, h32, h33 = h.entries
    x, y = p
    den = h31 * x + h32 * y + h33
    if abs(den) <= EPS:
        raise HorizonError(f"point ({x}, {y}) maps to the horizon")
    return Point2((h11 * x + h12 * y + h13) / den, (h21 * x + h22 * y + h23) / den)


def apply_homography_many(h: Homography, pts: Iterable[Point2]) -> list[Point2]:
    return [apply_homography(h, p) for p in pts]


def denominator(h: Homography, p: Point2) -> float:
    return h.entries[6] * p[0] + h.entries[7] * p[1] + h.entries[8]


def invert_homography(h: Homography) -> Homography:
    m = h.matrix
    scale = np.abs(m).max()
    if scale < EPS or abs(np.linalg.det(m / scale)) < EPS:
        raise SingularMatrixError("homography is not invertible")
    return Homography.from_matrix(np.linalg.inv(m)).canonical()


def distortion_ratio_of(q: Quad) -> float:
    upper = math.dist(q.o, q.c)
    if upper < EPS:
        raise GeometryError("upper bottom has zero length")
    return math.dist(q.a, q.b) / upper


def rotate_point(p: Point2, theta_deg: float) -> Point2:
    t = math.radians(theta_deg)
    c, s = math.cos(t), math.sin(t)
    return Point2(c * p[0] - s * p[1], s * p[0] + c * p[1])
