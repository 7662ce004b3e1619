"""Synthetic scenes: 1-3 non-overlapping rotated rectangles on a noisy background."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..data import AnnotatedObject, AnnotationSet
from ..geometry import contains_points, intersection_area, rotated_rectangle

TOY_CLASSES = ("solid", "striped", "checkered")

# tint per class, multiplied by the fill pattern
_TINTS = np.array([[1.0, 0.35, 0.35], [0.35, 1.0, 0.35], [0.35, 0.35, 1.0]])


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based Philox generator; ``stream`` separates independent uses of one seed."""
    return np.random.Generator(np.random.Philox(key=(int(stream) << 64) | int(seed)))


@dataclass
class SyntheticScene:
    image: np.ndarray            # (H, W, 3) float64 in [0, 1]
    annotations: AnnotationSet


def _sample_rect(rng, size, min_side, max_diag):
    ratio = rng.uniform(1.0, 5.0)
    hi = max_diag / math.sqrt(1.0 + ratio * ratio)
    short = rng.uniform(min_side, max(hi, min_side))
    w, h = short * ratio, short
    theta = rng.uniform(0.0, math.pi)
    c, s = abs(math.cos(theta)), abs(math.sin(theta))
    hx = 0.5 * (w * c + h * s)
    hy = 0.5 * (w * s + h * c)
    cx = rng.uniform(hx + 1.0, size - hx - 1.0)
    cy = rng.uniform(hy + 1.0, size - hy - 1.0)
    return rotated_rectangle(cx, cy, w, h, theta), theta, w, h


def _pattern(class_id, u, v):
    if class_id == 0:
        return np.ones_like(u)
    if class_id == 1:
        return 0.35 + 0.65 * (np.floor(v / 3.0) % 2)
    return 0.35 + 0.65 * ((np.floor(u / 4.0) + np.floor(v / 4.0)) % 2)


def render(size, objects, rng, noise=0.05, supersample=2):
    """Anti-aliased raster of (quad, class_id, theta, w, h) objects."""
    img = np.clip(rng.normal(0.1, noise, (size, size, 3)), 0.0, 1.0)
    offs = (np.arange(supersample) + 0.5) / supersample
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    for quad, cid, theta, w, h in objects:
        c = quad.centroid()
        cover = np.zeros((size, size))
        shade = np.zeros((size, size))
        for oy in offs:
            for ox in offs:
                pts = np.stack([xs + ox, ys + oy], axis=-1)
                inside = contains_points(quad, pts)
                dx, dy = pts[..., 0] - c.x, pts[..., 1] - c.y
                u = math.cos(theta) * dx + math.sin(theta) * dy + w / 2
                v = -math.sin(theta) * dx + math.cos(theta) * dy + h / 2
                cover += inside
                shade += inside * _pattern(cid, u, v)
        cover /= supersample ** 2
        shade /= supersample ** 2
        img = img * (1.0 - cover[..., None]) + shade[..., None] * _TINTS[cid]
    return img


def generate_scene(rng: np.random.Generator, size: int = 128, min_objects: int = 1, max_objects: int = 3,
                   min_side: float = 8.0, max_diag: float = 96.0, image_id: str = "") -> SyntheticScene:
    # a rectangle's bounding box never exceeds its diagonal, so this keeps it inside the image
    max_diag = min(max_diag, size - 2.0)
    n = int(rng.integers(min_objects, max_objects + 1))
    objs = []
    for _ in range(n):
        for _attempt in range(50):
            quad, theta, w, h = _sample_rect(rng, size, min_side, max_diag)
            if all(intersection_area(quad, o[0]) == 0.0 for o in objs):
                objs.append((quad, int(rng.integers(0, len(TOY_CLASSES))), theta, w, h))
                break
    image = render(size, objs, rng)
    ann = AnnotationSet(image_id, tuple(AnnotatedObject(q, TOY_CLASSES[c]) for q, c, *_ in objs),
                        (size, size), TOY_CLASSES)
    return SyntheticScene(image, ann)
