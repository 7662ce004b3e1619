"""Exact quadrilateral geometry.

Boxes are convex quadrilaterals with counter-clockwise vertex order (positive
shoelace area in the raw coordinate numbers).  All arithmetic is float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DegenerateBox, DegenerateEdge, InvalidQuad, OutsideBox

EPS = 1e-12


class Point(NamedTuple):
    x: float
    y: float


class EdgeDistances(NamedTuple):
    a: float
    b: float
    c: float
    d: float


def _cross(o, p, q):
    return (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0])


def _shoelace(pts):
    s = 0.0
    n = len(pts)
    for i in range(n):
        x0, y0 = pts[i]
        x1, y1 = pts[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def _is_convex_ccw(pts):
    n = len(pts)
    for i in range(n):
        if _cross(pts[i], pts[(i + 1) % n], pts[(i + 2) % n]) <= EPS:
            return False
    return _shoelace(pts) > EPS


@dataclass(frozen=True)
class Quad:
    """Four ordered vertices p0..p3 of a convex, counter-clockwise quadrilateral.

    The constructor validates but never reorders; use :func:`canonicalize`
    for arbitrary input.
    """

    vertices: tuple

    def __post_init__(self):
        verts = tuple(Point(float(x), float(y)) for x, y in self.vertices)
        if len(verts) != 4:
            raise InvalidQuad(f"expected 4 vertices, got {len(verts)}")
        if not all(math.isfinite(v) for p in verts for v in p):
            raise InvalidQuad("non-finite vertex coordinate")
        if not _is_convex_ccw(verts):
            raise InvalidQuad(f"vertices are not a convex counter-clockwise quad: {verts}")
        object.__setattr__(self, "vertices", verts)

    @classmethod
    def from_flat(cls, coords: Sequence[float]) -> "Quad":
        if len(coords) != 8:
            raise InvalidQuad(f"expected 8 coordinates, got {len(coords)}")
        return cls(tuple(zip(coords[0::2], coords[1::2])))

    def flat(self) -> tuple:
        return tuple(v for p in self.vertices for v in p)

    def as_array(self) -> np.ndarray:
        return np.array(self.vertices, dtype=np.float64)

    def centroid(self) -> Point:
        xs = [p.x for p in self.vertices]
        ys = [p.y for p in self.vertices]
        return Point(sum(xs) / 4.0, sum(ys) / 4.0)

    def translate(self, dx: float, dy: float) -> "Quad":
        return Quad(tuple((p.x + dx, p.y + dy) for p in self.vertices))

    def __iter__(self):
        return iter(self.vertices)


def canonicalize(vertices: Iterable) -> Quad:
    """Reorder 4 points counter-clockwise starting at the minimal (y, x) vertex."""
    pts = [Point(float(x), float(y)) for x, y in vertices]
    if len(pts) != 4:
        raise InvalidQuad(f"expected 4 vertices, got {len(pts)}")
    if not all(math.isfinite(v) for p in pts for v in p):
        raise InvalidQuad("non-finite vertex coordinate")
    if _shoelace(pts) < 0:
        pts.reverse()
    if not _is_convex_ccw(pts):
        raise InvalidQuad(f"not a simple convex quadrilateral: {pts}")
    start = min(range(4), key=lambda i: (pts[i].y, pts[i].x))
    return Quad(tuple(pts[start:] + pts[:start]))


def convex_hull(points: Iterable) -> list:
    """Monotone chain hull, counter-clockwise, collinear points dropped."""
    pts = sorted(set((float(x), float(y)) for x, y in points))
    if len(pts) <= 2:
        return [Point(*p) for p in pts]
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= EPS:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= EPS:
            upper.pop()
        upper.append(p)
    return [Point(*p) for p in lower[:-1] + upper[:-1]]


def repair_quad(vertices: Iterable) -> Quad:
    """Canonicalize, falling back to the convex hull for slightly non-convex input.

    Raises InvalidQuad when the hull does not have exactly 4 vertices.
    """
    pts = list(vertices)
    try:
        return canonicalize(pts)
    except InvalidQuad:
        hull = convex_hull(pts)
        if len(hull) != 4:
            raise InvalidQuad(f"convex hull has {len(hull)} vertices, cannot repair: {pts}")
        return canonicalize(hull)


def perp_distance(p0, p1, q) -> float:
    ex = p1[0] - p0[0]
    ey = p1[1] - p0[1]
    norm = math.hypot(ex, ey)
    if norm <= EPS:
        raise DegenerateEdge(f"edge endpoints coincide: {tuple(p0)}")
    return abs(ex * (p0[1] - q[1]) - (p0[0] - q[0]) * ey) / norm


def edge_distances(quad: Quad, q) -> EdgeDistances:
    v = quad.vertices
    return EdgeDistances(
        perp_distance(v[0], v[1], q),
        perp_distance(v[1], v[2], q),
        perp_distance(v[2], v[3], q),
        perp_distance(v[3], v[0], q),
    )


def _ratio(u, w):
    hi = max(u, w)
    if hi <= 0.0:
        raise DegenerateBox("opposite edges both at zero distance")
    return min(u, w) / hi


def centerness_from_distances(a, b, c, d, alpha=1.0) -> float:
    return (_ratio(a, c) * _ratio(b, d)) ** (1.0 / alpha)


def oriented_centerness(quad: Quad, q, alpha: float = 1.0) -> float:
    """Edge-aligned center-ness in [0, 1]; 0 on an edge, 1 where a=c and b=d."""
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    if not contains(quad, q):
        raise OutsideBox(f"point {tuple(q)} lies outside the quad")
    a, b, c, d = edge_distances(quad, q)
    return centerness_from_distances(a, b, c, d, alpha)


def aa_centerness(quad: Quad, q) -> float:
    """Classic axis-aligned center-ness evaluated on the quad's axis-aligned hull."""
    xs = [p.x for p in quad.vertices]
    ys = [p.y for p in quad.vertices]
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    x, y = q
    if x < x0 - EPS or x > x1 + EPS or y < y0 - EPS or y > y1 + EPS:
        raise OutsideBox(f"point {tuple(q)} lies outside the axis-aligned hull")
    l, r = max(x - x0, 0.0), max(x1 - x, 0.0)
    t, b = max(y - y0, 0.0), max(y1 - y, 0.0)
    return math.sqrt(_ratio(l, r) * _ratio(t, b))


def area(quad: Quad) -> float:
    return _shoelace(quad.vertices)


def contains(quad: Quad, q) -> bool:
    """Inside-or-on-boundary test against the four CCW edges."""
    v = quad.vertices
    for i in range(4):
        p0, p1 = v[i], v[(i + 1) % 4]
        # normalize so the tolerance is a distance
        if _cross(p0, p1, q) < -EPS * math.hypot(p1[0] - p0[0], p1[1] - p0[1]):
            return False
    return True


def strictly_contains(quad: Quad, q) -> bool:
    v = quad.vertices
    for i in range(4):
        p0, p1 = v[i], v[(i + 1) % 4]
        if _cross(p0, p1, q) <= EPS * math.hypot(p1[0] - p0[0], p1[1] - p0[1]):
            return False
    return True


def axis_aligned_hull(quad: Quad) -> Quad:
    xs = [p.x for p in quad.vertices]
    ys = [p.y for p in quad.vertices]
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    return Quad(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


def bounds(quad: Quad) -> tuple:
    xs = [p.x for p in quad.vertices]
    ys = [p.y for p in quad.vertices]
    return min(xs), min(ys), max(xs), max(ys)


def clip_convex(subject: list, clip: Sequence) -> list:
    """Clip a convex polygon by each CCW edge of another convex polygon."""
    out = list(subject)
    n = len(clip)
    for i in range(n):
        if not out:
            break
        c0, c1 = clip[i], clip[(i + 1) % n]
        ex, ey = c1[0] - c0[0], c1[1] - c0[1]
        src = out
        out = []
        prev = src[-1]
        sp = ex * (prev[1] - c0[1]) - ey * (prev[0] - c0[0])
        for cur in src:
            sc = ex * (cur[1] - c0[1]) - ey * (cur[0] - c0[0])
            if sc >= 0.0:
                if sp < 0.0:
                    t = sp / (sp - sc)
                    out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
                out.append(cur)
            elif sp >= 0.0:
                t = sp / (sp - sc)
                out.append((prev[0] + t * (cur[0] - prev[0]), prev[1] + t * (cur[1] - prev[1])))
            prev, sp = cur, sc
    return out


def intersection_area(a: Quad, b: Quad) -> float:
    ax0, ay0, ax1, ay1 = bounds(a)
    bx0, by0, bx1, by1 = bounds(b)
    if ax0 >= bx1 or bx0 >= ax1 or ay0 >= by1 or by0 >= ay1:
        return 0.0
    poly = clip_convex(list(a.vertices), b.vertices)
    if len(poly) < 3:
        return 0.0
    return max(_shoelace(poly), 0.0)


def iou(a: Quad, b: Quad) -> float:
    inter = intersection_area(a, b)
    if inter <= 0.0:
        return 0.0
    union = area(a) + area(b) - inter
    return min(max(inter / union, 0.0), 1.0)


# -- vectorized helpers (grids, Monte-Carlo, rendering) ----------------------

def _edge_cross(quad: Quad, pts: np.ndarray):
    """Cross products (..., 4) of each edge with the vector to each point, and edge lengths (4,)."""
    v = quad.as_array()
    e = v[[1, 2, 3, 0]] - v
    pts = np.asarray(pts, dtype=np.float64)[..., None, :]
    cr = e[:, 0] * (pts[..., 1] - v[:, 1]) - e[:, 1] * (pts[..., 0] - v[:, 0])
    return cr, np.hypot(e[:, 0], e[:, 1])


def contains_points(quad: Quad, pts: np.ndarray, strict: bool = False) -> np.ndarray:
    """Boolean mask of points (N, 2) inside the quad."""
    cr, length = _edge_cross(quad, pts)
    tol = EPS * length
    return np.all((cr > tol) if strict else (cr >= -tol), axis=-1)


def edge_distances_points(quad: Quad, pts: np.ndarray) -> np.ndarray:
    """Perpendicular distances (..., 4) of points to edges a, b, c, d."""
    cr, length = _edge_cross(quad, pts)
    return np.abs(cr) / length


def oriented_centerness_points(quad: Quad, pts: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    """Vectorized oriented center-ness; points outside the quad map to 0.

    ``alpha`` may be an array broadcasting against the point shape, e.g.
    shape (K, 1) for K exponents over (N, 2) points gives (K, N).
    """
    cr, length = _edge_cross(quad, pts)
    inside = np.all(cr >= -EPS * length, axis=-1)
    d = np.abs(cr) / length
    lo, hi = np.minimum(d[..., :2], d[..., 2:]), np.maximum(d[..., :2], d[..., 2:])
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (lo[..., 0] / hi[..., 0]) * (lo[..., 1] / hi[..., 1])
    r = np.where(np.isnan(r), 0.0, r)
    val = r ** (1.0 / alpha)
    return np.where(inside, val, 0.0)


def aa_centerness_points(quad: Quad, pts: np.ndarray) -> np.ndarray:
    x0, y0, x1, y1 = bounds(quad)
    pts = np.asarray(pts, dtype=np.float64)
    x, y = pts[..., 0], pts[..., 1]
    inside = (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
    l, r = np.clip(x - x0, 0, None), np.clip(x1 - x, 0, None)
    t, b = np.clip(y - y0, 0, None), np.clip(y1 - y, 0, None)
    with np.errstate(invalid="ignore", divide="ignore"):
        v = (np.minimum(l, r) / np.maximum(l, r)) * (np.minimum(t, b) / np.maximum(t, b))
    v = np.sqrt(np.nan_to_num(v, nan=0.0))
    return np.where(inside, v, 0.0)


def rotate_quad(quad: Quad, angle: float, center=(0.0, 0.0)) -> Quad:
    c, s = math.cos(angle), math.sin(angle)
    cx, cy = center
    pts = [(cx + c * (p.x - cx) - s * (p.y - cy), cy + s * (p.x - cx) + c * (p.y - cy)) for p in quad.vertices]
    return Quad(tuple(pts))


def rotate_point(q, angle: float, center=(0.0, 0.0)) -> Point:
    c, s = math.cos(angle), math.sin(angle)
    cx, cy = center
    return Point(cx + c * (q[0] - cx) - s * (q[1] - cy), cy + s * (q[0] - cx) + c * (q[1] - cy))


def rotated_rectangle(cx: float, cy: float, w: float, h: float, theta: float) -> Quad:
    """Rectangle of size w x h centered at (cx, cy), rotated by theta radians."""
    c, s = math.cos(theta), math.sin(theta)
    corners = [(-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)]
    return canonicalize([(cx + c * x - s * y, cy + s * x + c * y) for x, y in corners])
