import itertools
import math

import numpy as np
import pytest

from quaddet.assignment import LEVEL_RANGES, assign_level, assign_locations, level_targets, object_size
from quaddet.data import AnnotatedObject, AnnotationSet
from quaddet.geometry import Quad, area, contains, oriented_centerness, rotated_rectangle
from quaddet.grid import P3, P4, P5, P7, GridLocation, encode_target, grid_points

from conftest import random_convex_quad


def square(cx, cy, side):
    h = side / 2
    return Quad(((cx - h, cy - h), (cx + h, cy - h), (cx + h, cy + h), (cx - h, cy + h)))


def annotations(*objs, size=(128, 128)):
    return AnnotationSet("img", tuple(AnnotatedObject(q, c) for q, c in objs), size)


class TestAssignLevel:
    def test_side_32(self):
        assert object_size(square(0, 0, 32)) == pytest.approx(32 * math.sqrt(2))
        assert assign_level(square(0, 0, 32)) == P3

    def test_side_100(self):
        assert assign_level(square(0, 0, 100)) == P5

    def test_side_1000(self):
        assert assign_level(square(0, 0, 1000)) == P7

    def test_boundaries_are_inclusive_above(self):
        # size exactly 64 stays on P3, just above moves to P4
        s = 64 / math.sqrt(2)
        assert assign_level(square(0, 0, s)) == P3
        assert assign_level(square(0, 0, s * 1.001)) == P4

    def test_ranges_are_contiguous(self):
        bounds = [u for u, _ in LEVEL_RANGES]
        assert bounds == [64, 128, 256, 512]


class TestAssignLocations:
    def test_empty(self):
        out = assign_locations(annotations(), 64, 64)
        assert out and all(t.is_background for t in out.values())

    def test_centered_square(self):
        # (12, 12) is the P3 location of cell (1, 1)
        out = assign_locations(annotations((square(12, 12, 8), "plane")), 64, 64)
        t = out[GridLocation(P3, 1, 1)]
        assert not t.is_background
        assert t.centerness == 1.0
        assert t.class_id == 0
        assert t.center_offset == (0.0, 0.0)
        assert sum(not v.is_background for v in out.values()) == 1

    def test_nested_smaller_wins(self):
        big = square(44, 44, 40)
        small = square(44, 44, 20)
        ann = annotations((big, "plane"), (small, "ship"))
        lt = level_targets(ann, P3, 128, 128, levels_of=[P3, P3])
        pts = grid_points(P3, 128, 128)
        # brute force over both choices: every location inside both belongs to the smaller quad
        for y, x in itertools.product(range(lt.shape[0]), range(lt.shape[1])):
            p = tuple(pts[y, x])
            inside = [i for i, q in enumerate((big, small)) if contains(q, p) and not _on_boundary(q, p)]
            if not inside:
                assert lt.owner[y, x] == -1
            else:
                expected = min(inside, key=lambda i: area((big, small)[i]))
                assert lt.owner[y, x] == expected

    def test_equal_area_tie_keeps_annotation_order(self):
        a = square(44, 44, 20)
        ann = annotations((a, "plane"), (a, "ship"))
        lt = level_targets(ann, P3, 128, 128)
        assert set(lt.owner[lt.owner >= 0].tolist()) == {0}

    def test_boundary_locations_are_background(self):
        # square whose edges pass exactly through P3 locations
        q = Quad(((4, 4), (20, 4), (20, 20), (4, 20)))
        lt = level_targets(annotations((q, "plane")), P3, 64, 64)
        assert lt.class_ids[1, 1] == 0        # (12, 12) interior
        assert lt.class_ids[0, 0] == -1       # (4, 4) is a vertex
        assert lt.class_ids[0, 1] == -1       # (12, 4) lies on an edge

    def test_targets_agree_with_scalar_functions(self, rng):
        objs = []
        for _ in range(3):
            cx, cy = rng.uniform(30, 100, 2)
            objs.append((rotated_rectangle(cx, cy, rng.uniform(10, 30), rng.uniform(8, 20),
                                           rng.uniform(0, math.pi)), "plane"))
        ann = annotations(*objs)
        out = assign_locations(ann, 128, 128, alpha=4)
        for loc, t in out.items():
            if t.is_background:
                continue
            q = objs[_owner_of(ann, loc)][0]
            p = loc.image_point
            assert contains(q, p)
            assert 0 < t.centerness <= 1
            assert t.centerness == pytest.approx(oriented_centerness(q, p, 4), abs=1e-12)
            np.testing.assert_allclose(t.regression, encode_target(q, loc), atol=1e-12)
            c = q.centroid()
            assert t.center_offset == pytest.approx(((c.x - p.x) / loc.stride, (c.y - p.y) / loc.stride))

    def test_positive_count_bounded(self, rng):
        objs = [(random_convex_quad(rng, 20).translate(60, 60), "plane") for _ in range(4)]
        for level in (P3, P4, P5):
            lt = level_targets(annotations(*objs), level, 128, 128, levels_of=[level] * 4)
            assert lt.num_positives() <= lt.class_ids.size

    def test_deterministic(self, rng):
        objs = [(random_convex_quad(rng, 20).translate(60, 60), "plane") for _ in range(4)]
        a = level_targets(annotations(*objs), P3, 128, 128, levels_of=[P3] * 4)
        b = level_targets(annotations(*objs), P3, 128, 128, levels_of=[P3] * 4)
        np.testing.assert_array_equal(a.owner, b.owner)
        np.testing.assert_array_equal(a.centerness, b.centerness)

    def test_axis_aligned_mode(self):
        q = rotated_rectangle(44, 44, 30, 10, 0.6)
        lt = level_targets(annotations((q, "plane")), P3, 128, 128, centerness="axis-aligned", levels_of=[P3])
        lo = level_targets(annotations((q, "plane")), P3, 128, 128, centerness="oriented", levels_of=[P3])
        pos = lt.class_ids >= 0
        assert pos.any()
        assert not np.allclose(lt.centerness[pos], lo.centerness[pos])

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            level_targets(annotations(), P3, 64, 64, centerness="bogus")


def _on_boundary(q, p):
    from quaddet.geometry import strictly_contains
    return contains(q, p) and not strictly_contains(q, p)


def _owner_of(ann, loc):
    lt = level_targets(ann, loc.level, 128, 128, alpha=4)
    return int(lt.owner[loc.y, loc.x])
