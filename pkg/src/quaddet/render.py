"""Raster evaluation of center-ness functions over a quad's axis-aligned hull."""

from __future__ import annotations

import numpy as np

from .geometry import Quad, aa_centerness_points, bounds, contains_points, oriented_centerness_points

MODES = ("oriented", "axis")


def pixel_centers(quad: Quad, pixel: float = 1.0):
    """Pixel-center coordinates (rows, cols, 2) tiling the hull, plus its extent."""
    x0, y0, x1, y1 = bounds(quad)
    cols = max(int(np.ceil((x1 - x0) / pixel)), 1)
    rows = max(int(np.ceil((y1 - y0) / pixel)), 1)
    xs = x0 + (np.arange(cols) + 0.5) * pixel
    ys = y0 + (np.arange(rows) + 0.5) * pixel
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx, gy], axis=-1), (x0, x0 + cols * pixel, y0, y0 + rows * pixel)


def centerness_grid(quad: Quad, mode: str = "oriented", alpha: float = 1.0,
                    pixel: float = 1.0, mask_to_quad: bool = True):
    """Center-ness at every pixel of the hull; locations outside the quad are 0.

    ``axis`` mode is the classic axis-aligned center-ness of the hull (its
    exponent is fixed at 1/2; ``alpha`` only applies to ``oriented``).
    Returns (values, extent) with extent = (xmin, xmax, ymin, ymax).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    pts, extent = pixel_centers(quad, pixel)
    if mode == "oriented":
        vals = oriented_centerness_points(quad, pts, alpha)
    else:
        vals = aa_centerness_points(quad, pts)
        if mask_to_quad:
            vals = np.where(contains_points(quad, pts), vals, 0.0)
    return vals, extent
