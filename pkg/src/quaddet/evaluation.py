"""Detection matching, VOC07 11-point AP, mAP and confidence-vs-IoU heatmaps."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .geometry import Quad, iou


class GroundTruth(NamedTuple):
    quad: Quad
    class_id: int
    difficult: bool = False


@dataclass
class MatchResult:
    """Outcome of matching one image's detections (in ranked order)."""

    class_ids: np.ndarray     # (D,)
    scores: np.ndarray        # (D,) ranking score
    confidences: np.ndarray   # (D,) raw classification confidence
    tp: np.ndarray            # (D,) bool
    fp: np.ndarray            # (D,) bool; dets with neither flag hit a difficult GT
    ious: np.ndarray          # (D,) IoU with the matched GT, 0 otherwise
    gt_matched: np.ndarray    # (G,) bool
    gt_class_ids: np.ndarray  # (G,)
    gt_difficult: np.ndarray  # (G,) bool

    def n_gt(self, class_id: int) -> int:
        return int(((self.gt_class_ids == class_id) & ~self.gt_difficult).sum())

    def tp_pairs(self, class_id: Optional[int] = None) -> np.ndarray:
        """(confidence, IoU) of every true positive, shape (T, 2)."""
        m = self.tp if class_id is None else self.tp & (self.class_ids == class_id)
        return np.stack([self.confidences[m], self.ious[m]], axis=1)

    @classmethod
    def concatenate(cls, results) -> "MatchResult":
        results = list(results)
        if not results:
            i, f, b = np.int64, np.float64, bool
            return cls(*(np.zeros(0, dtype=t) for t in (i, f, f, b, b, f, b, i, b)))
        cat = lambda name: np.concatenate([getattr(r, name) for r in results])  # noqa: E731
        return cls(*(cat(n) for n in ("class_ids", "scores", "confidences", "tp", "fp", "ious",
                                      "gt_matched", "gt_class_ids", "gt_difficult")))


def match_detections(dets, gts, iou_thresh: float = 0.5) -> MatchResult:
    """Greedy VOC matching by descending score.

    Each detection takes the highest-IoU unmatched same-class ground truth with
    IoU >= iou_thresh.  Hitting a difficult ground truth makes the detection
    neither TP nor FP.
    """
    dets = sorted(dets, key=lambda d: -d.score)
    gts = list(gts)
    n, g = len(dets), len(gts)
    tp = np.zeros(n, dtype=bool)
    fp = np.zeros(n, dtype=bool)
    ious = np.zeros(n)
    matched = np.zeros(g, dtype=bool)
    for i, d in enumerate(dets):
        best, best_j = -1.0, -1
        for j, gt in enumerate(gts):
            if gt.class_id != d.class_id or (matched[j] and not gt.difficult):
                continue
            v = iou(d.quad, gt.quad)
            if v > best:
                best, best_j = v, j
        if best_j >= 0 and best >= iou_thresh:
            if gts[best_j].difficult:
                continue
            matched[best_j] = True
            tp[i] = True
            ious[i] = best
        else:
            fp[i] = True
    return MatchResult(
        np.array([d.class_id for d in dets], dtype=np.int64),
        np.array([d.score for d in dets], dtype=np.float64),
        np.array([d.confidence for d in dets], dtype=np.float64),
        tp, fp, ious, matched,
        np.array([gt.class_id for gt in gts], dtype=np.int64),
        np.array([gt.difficult for gt in gts], dtype=bool),
    )


def average_precision(tp_flags, n_gt: int, scores=None) -> float:
    """VOC07 11-point interpolated AP of a ranked list of TP (True) / FP (False) flags.

    With ``scores`` the list is first ranked by descending score (stable).
    """
    tp = np.asarray(tp_flags, dtype=bool)
    if scores is not None:
        tp = tp[np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")]
    if n_gt == 0:
        return 1.0 if len(tp) == 0 else 0.0
    if len(tp) == 0:
        return 0.0
    ctp = np.cumsum(tp)
    cfp = np.cumsum(~tp)
    recall = ctp / n_gt
    precision = ctp / (ctp + cfp)
    ap = 0.0
    for i in range(11):
        t = i / 10.0
        sel = precision[recall >= t]
        ap += sel.max() if len(sel) else 0.0
    return ap / 11.0


def mean_ap(aps) -> float:
    aps = list(aps.values()) if isinstance(aps, dict) else list(aps)
    if not aps:
        raise ValueError("mean_ap needs at least one class")
    return float(sum(aps) / len(aps))


def class_aps(match: MatchResult, class_ids=None) -> dict:
    """AP per class over a pooled (multi-image) match result.

    Without ``class_ids``, classes with at least one non-difficult ground
    truth or at least one detection are evaluated.
    """
    if class_ids is None:
        present = set(match.gt_class_ids[~match.gt_difficult].tolist()) | set(match.class_ids.tolist())
        class_ids = sorted(int(c) for c in present)
    out = {}
    for c in class_ids:
        m = (match.class_ids == c) & (match.tp | match.fp)
        out[c] = average_precision(match.tp[m], match.n_gt(c), match.scores[m])
    return out


def evaluate(dets_by_image: dict, gts_by_image: dict, iou_thresh: float = 0.5, class_ids=None):
    """Match every image, then pool per class.  Returns (per-class AP, mAP, pooled match)."""
    results = []
    for image_id in sorted(set(gts_by_image) | set(dets_by_image)):
        results.append(match_detections(dets_by_image.get(image_id, []),
                                        gts_by_image.get(image_id, []), iou_thresh))
    pooled = MatchResult.concatenate(results)
    aps = class_aps(pooled, class_ids)
    return aps, (mean_ap(aps) if aps else 0.0), pooled


# -- heatmaps ------------------------------------------------------------------

@dataclass
class HeatmapGrid:
    """TP counts; rows are confidence bins, columns IoU bins, both over [0, 1]."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros((50, 50), dtype=np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_text(self) -> str:
        return "".join(" ".join(str(int(v)) for v in row) + "\n" for row in self.counts)


def _bin(values, n):
    return np.clip((np.asarray(values) * n).astype(np.int64), 0, n - 1)


def heatmap_from_pairs(pairs, bins=(50, 50)) -> HeatmapGrid:
    counts = np.zeros(bins, dtype=np.int64)
    pairs = np.asarray(pairs, dtype=np.float64).reshape(-1, 2)
    if len(pairs):
        np.add.at(counts, (_bin(pairs[:, 0], bins[0]), _bin(pairs[:, 1], bins[1])), 1)
    return HeatmapGrid(counts)


def collect_heatmap(matches, per_class: bool = False, bins=(50, 50)):
    """Bin raw confidence p (never the adjusted score) against IoU for every TP.

    ``matches`` is a MatchResult or an iterable of them.  Returns one grid, or
    a dict class_id -> grid when ``per_class``.
    """
    if not isinstance(matches, MatchResult):
        matches = MatchResult.concatenate(matches)
    if not per_class:
        return heatmap_from_pairs(matches.tp_pairs(), bins)
    classes = sorted(set(matches.class_ids[matches.tp].tolist()))
    return {int(c): heatmap_from_pairs(matches.tp_pairs(c), bins) for c in classes}
