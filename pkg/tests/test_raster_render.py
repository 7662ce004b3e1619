import numpy as np
import pytest

from quaddet.errors import ParseError
from quaddet.geometry import Quad, oriented_centerness, rotated_rectangle
from quaddet.raster import read_pnm, read_pnm_size, to_bytes, write_pnm
from quaddet.render import centerness_grid, pixel_centers


def test_pnm_round_trip(tmp_path, rng):
    grey = rng.integers(0, 256, (7, 11)).astype(np.uint8)
    rgb = rng.integers(0, 256, (5, 4, 3)).astype(np.uint8)
    write_pnm(tmp_path / "g.pgm", grey)
    write_pnm(tmp_path / "c.ppm", rgb)
    np.testing.assert_array_equal(read_pnm(tmp_path / "g.pgm"), grey)
    np.testing.assert_array_equal(read_pnm(tmp_path / "c.ppm"), rgb)
    assert read_pnm_size(tmp_path / "g.pgm") == (11, 7)


def test_pnm_header_comment(tmp_path):
    (tmp_path / "x.pgm").write_bytes(b"P5\n# made by hand\n2 1\n255\n\x01\x02")
    assert read_pnm(tmp_path / "x.pgm").tolist() == [[1, 2]]


def test_pnm_rejects(tmp_path):
    (tmp_path / "a.pgm").write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(ParseError):
        read_pnm(tmp_path / "a.pgm")
    with pytest.raises(TypeError):
        write_pnm(tmp_path / "b.pgm", np.zeros((2, 2)))
    with pytest.raises(ValueError):
        write_pnm(tmp_path / "b.pgm", np.zeros((2, 2, 2), dtype=np.uint8))


def test_to_bytes():
    assert to_bytes(np.array([0.0, 0.5, 1.0])).tolist() == [0, 128, 255]
    assert to_bytes(np.ones(3)).tolist() == [0, 0, 0]


class TestRender:
    def test_pixel_centers(self):
        pts, extent = pixel_centers(Quad(((0, 0), (4, 0), (4, 2), (0, 2))))
        assert pts.shape == (2, 4, 2)
        assert tuple(pts[0, 0]) == (0.5, 0.5)
        assert extent == (0, 4, 0, 2)

    def test_oriented_values(self):
        q = rotated_rectangle(20, 20, 30, 12, 0.4)
        vals, _ = centerness_grid(q, "oriented", alpha=2)
        pts, _ = pixel_centers(q)
        for r, c in [(5, 5), (10, 14), (14, 20)]:
            assert vals[r, c] == pytest.approx(oriented_centerness(q, tuple(pts[r, c]), 2), abs=1e-12)
        assert vals.max() <= 1 and vals.min() == 0

    def test_axis_masked(self):
        q = rotated_rectangle(20, 20, 30, 12, 0.7)
        vals, _ = centerness_grid(q, "axis")
        assert vals[0, 0] == 0.0
        full, _ = centerness_grid(q, "axis", mask_to_quad=False)
        assert full[0, 0] > 0

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            centerness_grid(rotated_rectangle(0, 0, 4, 4, 0), "radial")
