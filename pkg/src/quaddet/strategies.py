"""Corner-prediction strategies: head outputs to quadrilaterals.

All raw values are stride-normalized offsets (same units as encoded targets).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParams, InvalidQuad
from .geometry import Point, Quad
from .grid import GridLocation, decode_target

DEFAULT_ANCHOR_SCALE = 4.0


class StrategyKind(str, enum.Enum):
    DIRECT = "direct"
    OFFSET = "offset"
    ITERATIVE = "iterative"
    CENTER_TO_CORNER = "center-to-corner"

    @classmethod
    def parse(cls, name) -> "StrategyKind":
        if isinstance(name, cls):
            return name
        key = str(name).lower().replace("_", "-")
        aliases = {"c2c": "center-to-corner", "centertocorner": "center-to-corner"}
        return cls(aliases.get(key, key))


def anchor_offsets(anchor_scale: float = DEFAULT_ANCHOR_SCALE) -> np.ndarray:
    """Corners of the square base anchor in stride units, CCW from (-h, -h)."""
    h = anchor_scale / 2.0
    return np.array([-h, -h, h, -h, h, h, -h, h], dtype=np.float64)


def direct_decode(raw_corners, loc: GridLocation) -> Quad:
    return decode_target(raw_corners, loc)


def offset_decode(raw_corners, loc: GridLocation, anchor_scale: float = DEFAULT_ANCHOR_SCALE) -> Quad:
    if anchor_scale <= 0:
        raise ValueError(f"anchor_scale must be positive, got {anchor_scale}")
    return decode_target(anchor_offsets(anchor_scale) + np.asarray(raw_corners, dtype=np.float64), loc)


def center_to_corner_offsets(raw_center, raw_corners) -> np.ndarray:
    """Broadcast-add the center to every corner pair; works on (..., 2) / (..., 8)."""
    raw_center = np.asarray(raw_center, dtype=np.float64)
    raw_corners = np.asarray(raw_corners, dtype=np.float64)
    return raw_corners + np.tile(raw_center, 4)


def center_to_corner_decode(raw_center, raw_corners, loc: GridLocation):
    """Returns (center point, quad).

    An invalid quad raises InvalidQuad with the decoded center attached as
    ``exc.center`` so callers can still score the center prediction.
    """
    x, y = loc.image_point
    s = float(loc.stride)
    center = Point(x + s * float(raw_center[0]), y + s * float(raw_center[1]))
    try:
        quad = decode_target(center_to_corner_offsets(raw_center, raw_corners), loc)
    except InvalidQuad as exc:
        exc.center = center
        raise
    return center, quad


@dataclass
class IterativeHeadParams:
    """Four chained affine heads; head k maps F + 2k inputs to 2 outputs."""

    weights: list  # [(F + 2k, 2)] for k = 0..3
    biases: list   # [(2,)]

    def __post_init__(self):
        if len(self.weights) != 4 or len(self.biases) != 4:
            raise InvalidParams("iterative head needs exactly 4 weight/bias pairs")
        f = self.weights[0].shape[0]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (f + 2 * k, 2) or np.shape(b) != (2,):
                raise InvalidParams(f"head {k}: expected weight {(f + 2 * k, 2)} and bias (2,), "
                                    f"got {w.shape} and {np.shape(b)}")

    @property
    def width(self) -> int:
        return self.weights[0].shape[0]

    @classmethod
    def zeros(cls, width: int) -> "IterativeHeadParams":
        return cls([np.zeros((width + 2 * k, 2)) for k in range(4)], [np.zeros(2) for _ in range(4)])

    @classmethod
    def random(cls, width: int, rng: np.random.Generator, std: float = 0.01) -> "IterativeHeadParams":
        return cls([rng.normal(0.0, std, (width + 2 * k, 2)) for k in range(4)], [np.zeros(2) for _ in range(4)])


def iterative_forward(features, params: IterativeHeadParams):
    """Batched chain. Returns (corners (N, 8), per-head inputs for backprop)."""
    x = np.asarray(features, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None]
    if x.shape[1] != params.width:
        raise InvalidParams(f"feature width {x.shape[1]} does not match head width {params.width}")
    inputs = []
    cur = x
    outs = []
    for w, b in zip(params.weights, params.biases):
        inputs.append(cur)
        c = cur @ w + b
        outs.append(c)
        cur = np.concatenate([cur, c], axis=1)
    corners = np.concatenate(outs, axis=1)
    return (corners[0] if squeeze else corners), inputs


def iterative_backward(grad_corners, inputs, params: IterativeHeadParams):
    """Backprop through the chain, including the path through earlier corners.

    Returns (grad wrt features, weight grads, bias grads).
    """
    g = np.asarray(grad_corners, dtype=np.float64).copy()
    f = params.width
    gw = [None] * 4
    gb = [None] * 4
    gx = np.zeros((g.shape[0], f))
    for k in range(3, -1, -1):
        gc = g[:, 2 * k:2 * k + 2]
        gw[k] = inputs[k].T @ gc
        gb[k] = gc.sum(axis=0)
        gin = gc @ params.weights[k].T
        gx += gin[:, :f]
        for j in range(k):
            g[:, 2 * j:2 * j + 2] += gin[:, f + 2 * j:f + 2 * j + 2]
    return gx, gw, gb


def iterative_decode(features, params: IterativeHeadParams) -> np.ndarray:
    corners, _ = iterative_forward(features, params)
    return corners


def decode(strategy, raw_corners, loc: GridLocation, raw_center=None,
           anchor_scale: float = DEFAULT_ANCHOR_SCALE) -> Quad:
    """Quad for the final raw outputs of any strategy (iterative decodes like direct)."""
    strategy = StrategyKind.parse(strategy)
    if strategy == StrategyKind.OFFSET:
        return offset_decode(raw_corners, loc, anchor_scale)
    if strategy == StrategyKind.CENTER_TO_CORNER:
        return decode_target(center_to_corner_offsets(raw_center, raw_corners), loc)
    return direct_decode(raw_corners, loc)
