"""Ground-truth to pyramid-location assignment and per-location training targets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import Quad, aa_centerness_points, area, contains_points, oriented_centerness_points
from .grid import ALL_LEVELS, FpnLevel, GridLocation, grid_points, grid_shape

# Upper bounds of the object-size ranges for P3..P6; larger objects go to P7.
LEVEL_RANGES = ((64.0, 3), (128.0, 4), (256.0, 5), (512.0, 6))

CENTERNESS_MODES = ("none", "axis-aligned", "oriented")


@dataclass(frozen=True)
class LocationTarget:
    class_id: int = -1
    regression: Optional[tuple] = None
    centerness: Optional[float] = None
    center_offset: Optional[tuple] = None

    @property
    def is_background(self) -> bool:
        return self.class_id < 0


def object_size(quad: Quad) -> float:
    """Twice the largest centroid-to-corner distance."""
    c = quad.centroid()
    return 2.0 * max(math.hypot(p.x - c.x, p.y - c.y) for p in quad.vertices)


def assign_level(quad: Quad) -> FpnLevel:
    m = object_size(quad)
    for upper, level in LEVEL_RANGES:
        if m <= upper:
            return FpnLevel.of(level)
    return FpnLevel.of(7)


@dataclass
class LevelTargets:
    """Dense targets for one pyramid level; background rows carry NaN regression."""

    level: FpnLevel
    class_ids: np.ndarray    # (rows, cols) int, -1 = background
    regression: np.ndarray   # (rows, cols, 8)
    centerness: np.ndarray   # (rows, cols)
    center: np.ndarray       # (rows, cols, 2)
    owner: np.ndarray        # (rows, cols) annotation index or -1

    @property
    def shape(self):
        return self.class_ids.shape

    def num_positives(self) -> int:
        return int((self.class_ids >= 0).sum())


def level_targets(annotations, level: FpnLevel, image_h: int, image_w: int,
                  alpha: float = 4.0, centerness: str = "oriented",
                  levels_of=None) -> LevelTargets:
    """Targets for every location of ``level``.

    ``levels_of`` optionally overrides the per-object level choice (a list
    parallel to ``annotations.objects``).
    """
    if centerness not in CENTERNESS_MODES:
        raise ValueError(f"unknown centerness mode {centerness!r}")
    rows, cols = grid_shape(level, image_h, image_w)
    pts = grid_points(level, image_h, image_w)
    class_ids = np.full((rows, cols), -1, dtype=np.int64)
    reg = np.full((rows, cols, 8), np.nan)
    ctr = np.full((rows, cols), np.nan)
    center = np.full((rows, cols, 2), np.nan)
    owner = np.full((rows, cols), -1, dtype=np.int64)

    objs = list(annotations.objects)
    if levels_of is None:
        levels_of = [assign_level(o.quad) for o in objs]
    # smallest area wins ambiguous locations; stable sort keeps annotation order on ties
    order = sorted(range(len(objs)), key=lambda i: area(objs[i].quad))
    s = float(level.stride)
    for i in order:
        if levels_of[i] != level:
            continue
        quad = objs[i].quad
        mask = contains_points(quad, pts, strict=True) & (owner < 0)
        if not mask.any():
            continue
        owner[mask] = i
        class_ids[mask] = annotations.class_id(objs[i].class_name)
        v = quad.as_array().reshape(-1)
        loc = pts[mask]
        reg[mask] = (v[None, :] - np.tile(loc, 4)) / s
        cen = quad.as_array().mean(axis=0)
        center[mask] = (cen[None, :] - loc) / s
        if centerness == "axis-aligned":
            ctr[mask] = aa_centerness_points(quad, loc)
        else:
            ctr[mask] = oriented_centerness_points(quad, loc, alpha)
    return LevelTargets(level, class_ids, reg, ctr, center, owner)


def assign_locations(annotations, image_h: int, image_w: int, alpha: float = 4.0,
                     levels=ALL_LEVELS) -> dict:
    """Map every grid location of every level to its LocationTarget."""
    out = {}
    levels_of = [assign_level(o.quad) for o in annotations.objects]
    for level in levels:
        lt = level_targets(annotations, level, image_h, image_w, alpha, levels_of=levels_of)
        rows, cols = lt.shape
        for y in range(rows):
            for x in range(cols):
                loc = GridLocation(level, x, y)
                cid = int(lt.class_ids[y, x])
                if cid < 0:
                    out[loc] = LocationTarget()
                else:
                    out[loc] = LocationTarget(
                        cid,
                        tuple(float(v) for v in lt.regression[y, x]),
                        float(lt.centerness[y, x]),
                        tuple(float(v) for v in lt.center[y, x]),
                    )
    return out
