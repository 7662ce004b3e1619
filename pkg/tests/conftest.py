import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from quaddet.geometry import Quad, canonicalize, rotated_rectangle

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

UNIT_SQUARE = Quad(((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)))
DIAMOND = Quad(((1.0, 0.0), (2.0, 1.0), (1.0, 2.0), (0.0, 1.0)))


def random_convex_quad(rng, scale=10.0, min_gap=0.3):
    """Four points on a random ellipse at well-separated angles, shifted and rotated."""
    while True:
        ang = np.sort(rng.uniform(0.0, 2.0 * math.pi, 4))
        gaps = np.diff(np.concatenate([ang, ang[:1] + 2.0 * math.pi]))
        if gaps.min() > min_gap:
            break
    rx, ry = rng.uniform(0.3, 1.0, 2) * scale
    cx, cy = rng.uniform(-scale, scale, 2)
    phi = rng.uniform(0.0, math.pi)
    c, s = math.cos(phi), math.sin(phi)
    pts = []
    for a in ang:
        x, y = rx * math.cos(a), ry * math.sin(a)
        pts.append((cx + c * x - s * y, cy + s * x + c * y))
    return canonicalize(pts)


def random_convex_quads(rng, n, scale=10.0, min_gap=0.3):
    """Batch version of random_convex_quad, vectorized over the sampling."""
    quads = []
    while len(quads) < n:
        m = 2 * (n - len(quads))
        ang = np.sort(rng.uniform(0.0, 2.0 * math.pi, (m, 4)), axis=1)
        gaps = np.diff(np.concatenate([ang, ang[:, :1] + 2.0 * math.pi], axis=1), axis=1)
        ang = ang[gaps.min(axis=1) > min_gap]
        k = len(ang)
        r = rng.uniform(0.3, 1.0, (k, 2)) * scale
        c = rng.uniform(-scale, scale, (k, 2))
        phi = rng.uniform(0.0, math.pi, k)[:, None]
        x, y = r[:, :1] * np.cos(ang), r[:, 1:] * np.sin(ang)
        px = c[:, :1] + np.cos(phi) * x - np.sin(phi) * y
        py = c[:, 1:] + np.sin(phi) * x + np.cos(phi) * y
        quads.extend(canonicalize(zip(px[i], py[i])) for i in range(k))
    return quads[:n]


def random_interior_point(rng, quad):
    """Random convex combination of the vertices, kept away from the boundary."""
    w = rng.dirichlet(np.ones(4)) * 0.9 + 0.025
    v = quad.as_array()
    return tuple((w[:, None] * v).sum(axis=0))


@st.composite
def rectangles(draw, max_side=50.0):
    cx = draw(st.floats(-100, 100))
    cy = draw(st.floats(-100, 100))
    w = draw(st.floats(1.0, max_side))
    h = draw(st.floats(1.0, max_side))
    theta = draw(st.floats(0.0, math.pi))
    return rotated_rectangle(cx, cy, w, h, theta)


@st.composite
def convex_quads(draw):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    return random_convex_quad(np.random.default_rng(seed))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_detections(rng, n, n_classes=3, extent=400.0, clusters=40):
    """Clustered detections so that suppression actually happens; coarse scores create ties."""
    from quaddet.postprocess import Detection

    centers = rng.uniform(0, extent, (clusters, 2))
    out = []
    for i in range(n):
        cx, cy = centers[rng.integers(clusters)] + rng.normal(0, 6, 2)
        q = rotated_rectangle(cx, cy, rng.uniform(8, 40), rng.uniform(6, 30), rng.uniform(0, math.pi))
        p = round(float(rng.uniform(0.05, 1.0)), 2)
        o = round(float(rng.uniform(0.0, 1.0)), 2)
        out.append(Detection(q, int(rng.integers(n_classes)), p, o, image_id="img").adjusted())
    return out


# -- acceptance reporting --------------------------------------------------------

ACCEPTANCE = {}


def record(number, passed, detail):
    """Remember one criterion outcome; printed in the terminal summary."""
    ACCEPTANCE[number] = (bool(passed), detail)
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
