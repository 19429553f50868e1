"""Geometry primitives against brute-force oracles and the worked examples."""

import math
import random
from fractions import Fraction

import pytest

from windtree.geometry import (CORNER, REGULAR, TANGENT, Disk, Rect,
                               ray_disk_intersection, ray_rect_intersection,
                               reflect_disk, reflect_rect)

SQ2 = math.sqrt(2.0) / 2.0


# ---------------------------------------------------------------------------
# Oracle: intersect the ray with each of the 4 sides as segments, keep min t.


def ray_segment_t(origin, direction, a, b):
    ox, oy = origin
    dx, dy = direction
    ax, ay = a
    bx, by = b
    ex, ey = bx - ax, by - ay
    denom = dx * ey - dy * ex
    if denom == 0:
        return None  # parallel (collinear handled as miss by the oracle)
    t = ((ax - ox) * ey - (ay - oy) * ex) / denom
    s = ((ax - ox) * dy - (ay - oy) * dx) / denom
    if t < 0 or s < 0 or s > 1:
        return None
    return t


def brute_rect_hit(origin, direction, rect):
    lo_x, lo_y, hi_x, hi_y = rect.bounds()
    corners = [(lo_x, lo_y), (hi_x, lo_y), (hi_x, hi_y), (lo_x, hi_y)]
    best = None
    for k in range(4):
        t = ray_segment_t(origin, direction, corners[k], corners[(k + 1) % 4])
        if t is not None and (best is None or t < best):
            best = t
    return best


def test_rect_examples():
    r = Rect(0.0, 0.0, 0.25, 0.25)
    h = ray_rect_intersection((0.5, 0.0), (-1.0, 0.0), r)
    assert h.time == 0.25 and h.point == (0.25, 0.0)
    assert h.normal == (1, 0) and h.kind == REGULAR

    assert ray_rect_intersection((1.0, 1.0), (1.0, 0.0), r) is None

    h = ray_rect_intersection((0.5, 0.5), (-SQ2, -SQ2), r)
    assert h.kind == CORNER
    assert abs(h.point[0] - 0.25) < 1e-12 and abs(h.point[1] - 0.25) < 1e-12


def test_rect_exact_examples():
    r = Rect(Fraction(0), Fraction(0), Fraction(1, 4), Fraction(1, 4))
    h = ray_rect_intersection((Fraction(1, 2), Fraction(0)), (-1, 0), r)
    assert h.time == Fraction(1, 4)
    assert h.point == (Fraction(1, 4), Fraction(0))
    h = ray_rect_intersection((Fraction(1, 2), Fraction(1, 2)), (-1, -1), r)
    assert h.kind == CORNER and h.point == (Fraction(1, 4), Fraction(1, 4))


def test_reflect_examples():
    assert reflect_rect((-1.0, 0.0), (1, 0)) == (1.0, 0.0)
    assert reflect_rect((-0.6, 0.8), (1, 0)) == (0.6, 0.8)
    assert reflect_rect((0.6, -0.8), (0, 1)) == (0.6, 0.8)
    with pytest.raises(ValueError):
        reflect_rect((-1.0, -1.0), (1, 1))
    with pytest.raises(ValueError):
        reflect_rect((1.0, 0.0), (1, 0))


def test_disk_examples():
    d = Disk(0.0, 0.0, 0.5)
    h = ray_disk_intersection((-2.0, 0.0), (1.0, 0.0), d)
    assert abs(h.time - 1.5) < 1e-15
    assert h.point == (-0.5, 0.0) and h.normal == (-1.0, 0.0)

    h = ray_disk_intersection((-2.0, 0.5), (1.0, 0.0), d)
    assert h.kind == TANGENT
    assert abs(h.point[0]) < 1e-7 and abs(h.point[1] - 0.5) < 1e-12

    assert ray_disk_intersection((-2.0, 1.0), (1.0, 0.0), d) is None


def test_reflect_disk_examples():
    assert reflect_disk((1.0, 0.0), (-1.0, 0.0)) == (-1.0, 0.0)
    out = reflect_disk((1.0, 0.0), (-SQ2, SQ2))
    assert abs(out[0]) < 1e-12 and abs(out[1] - 1.0) < 1e-12
    assert reflect_disk((0.0, -1.0), (0.0, 1.0)) == (0.0, 1.0)


def test_reflection_norm_and_involution():
    rng = random.Random(7)
    for _ in range(2000):
        phi = rng.uniform(0, 2 * math.pi)
        n = (math.cos(phi), math.sin(phi))
        while True:
            th = rng.uniform(0, 2 * math.pi)
            d = (math.cos(th), math.sin(th))
            if d[0] * n[0] + d[1] * n[1] < -1e-6:
                break
        out = reflect_disk(d, n)
        assert abs(math.hypot(*out) - 1.0) < 1e-12
        back = reflect_disk((-out[0], -out[1]), n)
        assert abs(back[0] + d[0]) < 1e-12 and abs(back[1] + d[1]) < 1e-12


def test_rect_reflection_four_direction_invariant():
    rng = random.Random(11)
    for _ in range(500):
        th = rng.uniform(0.01, math.pi / 2 - 0.01)
        d = (math.cos(th), math.sin(th))
        mags = (abs(d[0]), abs(d[1]))
        for n in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            if d[0] * n[0] + d[1] * n[1] < 0:
                d = reflect_rect(d, n)
                assert (abs(d[0]), abs(d[1])) == mags


def test_rect_brute_force_agreement():
    rng = random.Random(12345)
    mismatches = 0
    for _ in range(20000):
        rect = Rect(rng.uniform(-1, 1), rng.uniform(-1, 1),
                    rng.uniform(0.05, 0.45), rng.uniform(0.05, 0.45))
        while True:
            ox = rng.uniform(-3, 3)
            oy = rng.uniform(-3, 3)
            lo_x, lo_y, hi_x, hi_y = rect.bounds()
            if not (lo_x <= ox <= hi_x and lo_y <= oy <= hi_y):
                break
        th = rng.uniform(0, 2 * math.pi)
        d = (math.cos(th), math.sin(th))
        h = ray_rect_intersection((ox, oy), d, rect)
        t = brute_rect_hit((ox, oy), d, rect)
        if (h is None) != (t is None):
            mismatches += 1
        elif h is not None and abs(h.time - t) > 1e-9:
            mismatches += 1
    assert mismatches == 0


def test_rect_boundary_starts():
    r = Rect(0.0, 0.0, 0.25, 0.25)
    # On the side, pointing in: reflect-in-place contact at t=0.
    h = ray_rect_intersection((0.25, 0.1), (-1.0, 0.0), r)
    assert h.time == 0 and h.normal == (1, 0)
    # On the side, pointing away: no contact.
    assert ray_rect_intersection((0.25, 0.1), (1.0, 0.0), r) is None
    # Sliding along the side from a point on it: singular contact.
    h = ray_rect_intersection((0.25, 0.1), (0.0, 1.0), r)
    assert h is not None and h.kind == CORNER
