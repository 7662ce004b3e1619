"""Test-time pipeline: score adjustment, confidence threshold, top-k and rotated NMS."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from itertools import groupby

import numpy as np

from .errors import InvalidProbability, ParseError
from .geometry import Quad, bounds, canonicalize, iou

CONF_THRESHOLD = 0.05
TOP_K = 2000
NMS_THRESHOLD = 0.1


@dataclass(frozen=True)
class Detection:
    quad: Quad
    class_id: int
    confidence: float
    centerness: float = 1.0
    score: float = float("nan")
    image_id: str = ""

    def adjusted(self) -> "Detection":
        return replace(self, score=adjust_score(self.confidence, self.centerness))


def adjust_score(p: float, o: float) -> float:
    for name, v in (("confidence", p), ("centerness", o)):
        if not (0.0 <= v <= 1.0):
            raise InvalidProbability(f"{name} outside [0, 1]: {v}")
    return math.sqrt(p * o)


def filter_threshold(dets, t: float = CONF_THRESHOLD) -> list:
    """Drop detections with confidence strictly below ``t``; order preserved."""
    return [d for d in dets if d.confidence >= t]


def top_k(dets, k: int = TOP_K) -> list:
    """The k most confident detections, ties broken by (class_id, insertion index)."""
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    dets = list(dets)
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, dets[i].class_id, i))
    return [dets[i] for i in order[:k]]


def _rank_key(dets):
    return lambda i: (-dets[i].score, -dets[i].confidence, dets[i].class_id, i)


def rotated_nms(dets, t_nms: float = NMS_THRESHOLD) -> list:
    """Greedy per-class suppression of IoU > t_nms, ranked by adjusted score.

    Output is in rank order: (score desc, confidence desc, class_id, input index).
    """
    dets = list(dets)
    if not dets:
        return []
    order = sorted(range(len(dets)), key=_rank_key(dets))
    box = np.array([bounds(d.quad) for d in dets]).reshape(-1, 4)
    keep = np.zeros(len(dets), dtype=bool)
    by_class = sorted(order, key=lambda i: dets[i].class_id)  # stable: rank order within class
    for _, group in groupby(by_class, key=lambda i: dets[i].class_id):
        idx = np.fromiter(group, dtype=np.int64)
        alive = np.ones(len(idx), dtype=bool)
        gb = box[idx]
        for pos in range(len(idx)):
            if not alive[pos]:
                continue
            i = idx[pos]
            keep[i] = True
            rest = np.nonzero(alive[pos + 1:])[0] + pos + 1
            if not len(rest):
                continue
            b = gb[pos]
            rb = gb[rest]
            touch = (rb[:, 0] < b[2]) & (b[0] < rb[:, 2]) & (rb[:, 1] < b[3]) & (b[1] < rb[:, 3])
            qi = dets[i].quad
            for r in rest[touch]:
                if iou(qi, dets[idx[r]].quad) > t_nms:
                    alive[r] = False
    return [dets[i] for i in order if keep[i]]


def postprocess(dets, conf_threshold: float = CONF_THRESHOLD, k: int = TOP_K,
                t_nms: float = NMS_THRESHOLD) -> list:
    """Threshold on confidence, keep the top-k by confidence, then NMS ranked by score."""
    return rotated_nms(top_k(filter_threshold(dets, conf_threshold), k), t_nms)


# -- detection dump ------------------------------------------------------------

def _num(v: float) -> str:
    return repr(float(v))


def format_detection(d: Detection, categories) -> str:
    if not d.image_id or any(ch.isspace() for ch in d.image_id):
        raise ValueError(f"image id must be a non-empty token without whitespace, got {d.image_id!r}")
    coords = " ".join(_num(v) for v in d.quad.flat())
    return (f"{d.image_id} {categories[d.class_id]} {_num(d.confidence)} "
            f"{_num(d.centerness)} {_num(d.score)} {coords}")


def write_detections(dets, categories) -> str:
    return "".join(format_detection(d, categories) + "\n" for d in dets)


def parse_detections(text: str, categories) -> list:
    """Read ``image_id class p o s x0 y0 ... x3 y3`` records."""
    from .errors import UnknownClass, InvalidQuad

    index = {name: i for i, name in enumerate(categories)}
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 13:
            raise ParseError(f"expected 13 fields, got {len(parts)}", lineno)
        if parts[1] not in index:
            raise UnknownClass(f"unknown class {parts[1]!r}", lineno, 2)
        vals = []
        for col, tok in enumerate(parts[2:], start=3):
            try:
                vals.append(float(tok))
            except ValueError:
                raise ParseError(f"malformed number {tok!r}", lineno, col) from None
        try:
            try:
                quad = Quad.from_flat(vals[3:])
            except InvalidQuad:
                quad = canonicalize(list(zip(vals[3::2], vals[4::2])))
        except InvalidQuad as exc:
            raise ParseError(f"invalid quadrilateral: {exc}", lineno) from None
        out.append(Detection(quad, index[parts[1]], vals[0], vals[1], vals[2], parts[0]))
    return out
