"""Pyramid level arithmetic and stride-normalized corner encoding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidImage, InvalidQuad
from .geometry import Point, Quad, canonicalize

LEVELS = (3, 4, 5, 6, 7)


@dataclass(frozen=True, order=True)
class FpnLevel:
    level: int
    stride: int

    @classmethod
    def of(cls, level: int) -> "FpnLevel":
        if level not in LEVELS:
            raise ValueError(f"pyramid level must be one of {LEVELS}, got {level}")
        return cls(level, 2 ** level)

    @classmethod
    def test_stride(cls, stride: int) -> "FpnLevel":
        """Non-production level with an arbitrary stride, for hand-checkable fixtures."""
        return cls(0, stride)


P3, P4, P5, P6, P7 = (FpnLevel.of(l) for l in LEVELS)
ALL_LEVELS = (P3, P4, P5, P6, P7)


def _half(stride):
    return -(-stride // 2)


def location_to_image(level: FpnLevel, x: int, y: int) -> Point:
    h = _half(level.stride)
    return Point(float(h + x * level.stride), float(h + y * level.stride))


@dataclass(frozen=True, order=True)
class GridLocation:
    level: FpnLevel
    x: int
    y: int

    @property
    def image_point(self) -> Point:
        return location_to_image(self.level, self.x, self.y)

    @property
    def stride(self) -> int:
        return self.level.stride


def grid_shape(level: FpnLevel, image_h: int, image_w: int) -> tuple:
    if image_h <= 0 or image_w <= 0:
        raise InvalidImage(f"image dimensions must be positive, got {image_h}x{image_w}")
    s = level.stride
    return -(-image_h // s), -(-image_w // s)


def grid_points(level: FpnLevel, image_h: int, image_w: int) -> np.ndarray:
    """Image-space location coordinates, shape (rows, cols, 2) as (x, y)."""
    rows, cols = grid_shape(level, image_h, image_w)
    h = _half(level.stride)
    xs = h + np.arange(cols) * level.stride
    ys = h + np.arange(rows) * level.stride
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx, gy], axis=-1).astype(np.float64)


def responsible_cell(level: FpnLevel, px: int, py: int) -> tuple:
    """Grid cell whose s x s input patch covers pixel (px, py)."""
    return px // level.stride, py // level.stride


def encode_target(quad: Quad, loc: GridLocation) -> np.ndarray:
    x, y = loc.image_point
    s = float(loc.stride)
    return np.array([(v - c) / s for p in quad.vertices for v, c in zip(p, (x, y))], dtype=np.float64)


def decode_offsets(t, loc: GridLocation) -> list:
    """Absolute corner points from stride-normalized offsets; no validation."""
    x, y = loc.image_point
    s = float(loc.stride)
    t = [float(v) for v in t]
    if len(t) != 8:
        raise InvalidQuad(f"expected 8 offsets, got {len(t)}")
    return [(x + s * t[2 * i], y + s * t[2 * i + 1]) for i in range(4)]


def decode_target(t, loc: GridLocation) -> Quad:
    """Inverse of :func:`encode_target`.

    Counter-clockwise convex output keeps the vertex order of ``t``; a convex
    but clockwise prediction is reordered by canonicalization.  Anything else
    raises InvalidQuad.
    """
    pts = decode_offsets(t, loc)
    try:
        return Quad(tuple(pts))
    except InvalidQuad:
        return canonicalize(pts)
