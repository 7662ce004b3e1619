import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quaddet.errors import InvalidProbability, ParseError, UnknownClass
from quaddet.geometry import iou, rotated_rectangle
from quaddet.postprocess import (
    CONF_THRESHOLD, NMS_THRESHOLD, TOP_K, Detection, adjust_score, filter_threshold, parse_detections,
    postprocess, rotated_nms, top_k, write_detections,
)

from conftest import UNIT_SQUARE, random_detections
from oracles import brute_force_nms

CATS = ("plane", "ship", "car")


def det(p, cls=0, o=1.0, quad=UNIT_SQUARE):
    return Detection(quad, cls, p, o, image_id="img").adjusted()


def test_defaults():
    assert (CONF_THRESHOLD, TOP_K, NMS_THRESHOLD) == (0.05, 2000, 0.1)


class TestAdjustScore:
    def test_examples(self):
        assert adjust_score(1, 1) == 1
        assert adjust_score(0.81, 0.49) == pytest.approx(0.63, abs=1e-12)
        assert adjust_score(0.7, 0) == 0

    @pytest.mark.parametrize("p,o", [(-0.1, 0.5), (0.5, 1.01), (math.nan, 0.5)])
    def test_out_of_range(self, p, o):
        with pytest.raises(InvalidProbability):
            adjust_score(p, o)

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_between(self, p, o):
        s = adjust_score(p, o)
        assert min(p, o) - 1e-15 <= s <= max(p, o) + 1e-15


class TestThresholdAndTopK:
    def test_threshold_boundary(self):
        kept = filter_threshold([det(0.05), det(0.049), det(0.5)])
        assert [d.confidence for d in kept] == [0.05, 0.5]
        assert filter_threshold([]) == []

    def test_topk_all(self):
        dets = [det(p) for p in (0.3, 0.2, 0.9, 0.1, 0.5)]
        assert top_k(dets) == sorted(dets, key=lambda d: -d.confidence)

    def test_topk_first_two(self):
        dets = [det(0.9), det(0.8), det(0.7)]
        assert top_k(dets, 2) == dets[:2]

    def test_topk_ties_follow_stable_sort(self, rng):
        dets = [det(float(rng.choice([0.2, 0.5, 0.8])), cls=int(rng.integers(3))) for _ in range(60)]
        oracle = sorted(dets, key=lambda d: (-d.confidence, d.class_id))   # python sort is stable
        assert [id(d) for d in top_k(dets, 25)] == [id(d) for d in oracle[:25]]

    def test_negative_k(self):
        with pytest.raises(ValueError):
            top_k([], -1)


class TestNms:
    def test_identical_same_class(self):
        a, b = det(0.9), det(0.8)
        assert rotated_nms([b, a]) == [a]

    def test_identical_different_class(self):
        a, b = det(0.9, cls=0), det(0.8, cls=1)
        assert rotated_nms([a, b]) == [a, b]

    def test_equal_iou_survives(self):
        # unit squares shifted so that IoU is exactly 1/3
        a = det(0.9)
        b = det(0.8, quad=UNIT_SQUARE.translate(0.5, 0))
        assert iou(a.quad, b.quad) == pytest.approx(1 / 3)
        assert rotated_nms([a, b], t_nms=1 / 3) == [a, b]
        assert rotated_nms([a, b], t_nms=0.3) == [a]

    def test_empty(self):
        assert rotated_nms([]) == []

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_brute_force(self, seed):
        dets = random_detections(np.random.default_rng(seed), 300)
        assert rotated_nms(dets) == brute_force_nms(dets, iou, NMS_THRESHOLD)

    def test_properties(self, rng):
        dets = random_detections(rng, 300)
        kept = rotated_nms(dets)
        assert all(any(k is d for d in dets) for k in kept)
        for i, a in enumerate(kept):
            for b in kept[i + 1:]:
                if a.class_id == b.class_id:
                    assert iou(a.quad, b.quad) <= NMS_THRESHOLD
        for c in {d.class_id for d in dets}:
            best = max((d for d in dets if d.class_id == c), key=lambda d: (d.score, d.confidence))
            assert any(k is best for k in kept)

    def test_raising_a_score_keeps_it(self, rng):
        dets = random_detections(rng, 150)
        kept_ids = {id(d) for d in rotated_nms(dets)}
        for i in range(0, 150, 7):
            if id(dets[i]) not in kept_ids:
                continue
            bumped = dets[i].__class__(dets[i].quad, dets[i].class_id, dets[i].confidence,
                                       dets[i].centerness, min(1.0, dets[i].score + 0.2))
            out = rotated_nms(dets[:i] + [bumped] + dets[i + 1:])
            assert any(k is bumped for k in out)


def test_pipeline_order(rng):
    dets = random_detections(rng, 200)
    low = [Detection(rotated_rectangle(10, 10, 5, 5, 0), 0, 0.01, 1.0).adjusted()]
    out = postprocess(dets + low, k=50)
    assert all(d.confidence >= 0.05 for d in out)
    assert len(out) <= 50
    assert out == rotated_nms(top_k(filter_threshold(dets + low), 50))


class TestDump:
    def test_round_trip(self, rng):
        dets = random_detections(rng, 50)
        text = write_detections(dets, CATS)
        back = parse_detections(text, CATS)
        assert back == dets
        assert write_detections(back, CATS) == text

    def test_comments_and_blank_lines(self):
        d = det(0.5)
        text = "# header\n\n" + write_detections([d], CATS)
        assert parse_detections(text, CATS) == [d]

    def test_errors(self):
        good = write_detections([det(0.5)], CATS).split()
        with pytest.raises(ParseError):
            parse_detections(" ".join(good[:-1]), CATS)
        with pytest.raises(UnknownClass):
            parse_detections(" ".join(good[:1] + ["boat"] + good[2:]), CATS)
        with pytest.raises(ParseError) as info:
            parse_detections(" ".join(good[:3] + ["x"] + good[4:]), CATS)
        assert info.value.column == 4
        with pytest.raises(ValueError):
            write_detections([Detection(UNIT_SQUARE, 0, 0.5, image_id="a b")], CATS)
        with pytest.raises(ParseError):
            parse_detections(" ".join(good[:5] + ["0"] * 8), CATS)
