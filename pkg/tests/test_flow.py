"""Flow engines: cell traversal vs brute force, trap orbit, reversibility,
exact/float agreement, determinism."""

import math
import random
from fractions import Fraction

import numpy as np
import pytest

from windtree.flow import (BUDGET, CELL, COLLISION, SINGULAR, Budget,
                           ExactEngine, PhasePoint, flow_until, iter_events,
                           next_event, traverse_cells)
from windtree.table import (EMPTY, Explicit, IidRandom, Table, constant_table,
                            rect_spec)

F = Fraction


def w_half() -> Table:
    return constant_table(F(1, 2), F(1, 2))


# ---------------------------------------------------------------------------
# Brute-force traversal oracle: slab-test every cell in the bounding box.


def brute_traverse(origin, direction, max_len):
    ox, oy = origin
    dx, dy = direction
    t_end = max_len / math.hypot(dx, dy)
    ex, ey = ox + t_end * dx, oy + t_end * dy
    i_lo = math.floor(min(ox, ex) - 1)
    i_hi = math.ceil(max(ox, ex) + 1)
    j_lo = math.floor(min(oy, ey) - 1)
    j_hi = math.ceil(max(oy, ey) + 1)
    found = []
    for i in range(i_lo, i_hi + 1):
        for j in range(j_lo, j_hi + 1):
            t0, t1 = 0.0, t_end
            ok = True
            for o, d, lo, hi in ((ox, dx, i - 0.5, i + 0.5),
                                 (oy, dy, j - 0.5, j + 0.5)):
                if d == 0:
                    if o < lo or o > hi:
                        ok = False
                        break
                else:
                    a, b = (lo - o) / d, (hi - o) / d
                    if a > b:
                        a, b = b, a
                    t0, t1 = max(t0, a), min(t1, b)
            if ok and t0 <= t1:
                found.append((t0, (i, j)))
    found.sort(key=lambda p: (p[0], p[1]))
    return [c for _, c in found]


def test_traverse_examples():
    assert traverse_cells((0.0, 0.0), (1.0, 0.0), 2.6) == \
        [(0, 0), (1, 0), (2, 0), (3, 0)]
    cells = traverse_cells((0.5, 0.5), (1.0, 0.0), 1.0)
    assert (0, 0) in cells and (0, 1) in cells
    assert (1, 0) in cells and (1, 1) in cells


def test_traverse_diagonal_vs_oracle():
    s = math.sqrt(2) / 2
    got = traverse_cells((0.1, 0.0), (s, s), 3.0)
    assert got == brute_traverse((0.1, 0.0), (s, s), 3.0)


def test_traverse_random_vs_oracle():
    rng = random.Random(99)
    for _ in range(3000):
        ox, oy = rng.uniform(-4, 4), rng.uniform(-4, 4)
        th = rng.uniform(0, 2 * math.pi)
        d = (math.cos(th), math.sin(th))
        ln = rng.uniform(0.1, 6.0)
        assert traverse_cells((ox, oy), d, ln) == brute_traverse((ox, oy), d, ln)


def test_traverse_exact_matches_float():
    got = traverse_cells((F(1, 2), F(1, 2)), (1, 0), F(1))
    assert got == traverse_cells((0.5, 0.5), (1.0, 0.0), 1.0)
    got = traverse_cells((F(1, 10), F(0)), (1, 1), F(3))
    assert got == brute_traverse((0.1, 0.0), (1.0, 1.0), 3.0)


# ---------------------------------------------------------------------------
# Trap orbit and singular starts


def test_trap_orbit_float():
    res = _run_collisions(w_half(), PhasePoint(0.5, 0.0, 1.0, 0.0), 4, "float")
    xs = [e.point[0] for e in res.events if e.kind == COLLISION]
    assert xs == [0.75, 0.25, 0.75, 0.25]
    times = [e.time for e in res.events if e.kind == COLLISION]
    assert times == [0.25, 0.75, 1.25, 1.75]


def test_trap_orbit_exact():
    res = _run_collisions(w_half(), PhasePoint(F(1, 2), F(0), 1, 0), 4, "exact")
    pts = [e.point for e in res.events if e.kind == COLLISION]
    assert pts == [(0.75, 0.0), (0.25, 0.0), (0.75, 0.0), (0.25, 0.0)]
    assert res.path_param == F(7, 4)


def _run_collisions(table, phase, k, engine, budget=None):
    seen = [0]

    def stop(ev):
        if ev.kind == COLLISION:
            seen[0] += 1
        return seen[0] >= k

    return flow_until(table, phase, stop, budget or Budget(), engine=engine)


def test_grazing_is_singular():
    ev = next_event(w_half(), PhasePoint(0.5, 0.25, -1.0, 0.0), Budget())
    assert ev.kind == SINGULAR
    ev = next_event(w_half(), PhasePoint(F(1, 2), F(1, 4), -1, 0), Budget(),
                    engine="exact")
    assert ev.kind == SINGULAR


def test_empty_table_hits_radius_budget():
    empty = Table("square", Explicit({}, EMPTY))
    res = flow_until(empty, PhasePoint(0.0, 0.0, 1.0, 0.0),
                     lambda ev: False, Budget(max_radius=50))
    assert res.status == BUDGET
    assert res.n_collisions == 0
    assert res.events[-1].reason == "radius"


def test_next_event_trap():
    ev = next_event(w_half(), PhasePoint(0.5, 0.0, 1.0, 0.0), Budget())
    assert ev.kind == COLLISION and ev.site == (1, 0)
    assert ev.time == 0.25 and ev.point == (0.75, 0.0)


# ---------------------------------------------------------------------------
# Reversibility and engine agreement


def rational_phase(rng, denom=64, box=3):
    while True:
        x = F(rng.randrange(-denom * box, denom * box + 1), denom)
        y = F(rng.randrange(-denom * box, denom * box + 1), denom)
        # Outside the closed obstacle of the nearest sites.
        i, j = round(float(x)), round(float(y))
        if max(abs(x - i), abs(y - j)) > F(1, 4):
            p = rng.randrange(1, 12)
            q = rng.randrange(1, 12)
            g = math.gcd(p, q)
            sx = rng.choice((1, -1))
            sy = rng.choice((1, -1))
            return PhasePoint(x, y, sx * (p // g), sy * (q // g))


def test_time_reversibility_exact():
    rng = random.Random(5)
    table = w_half()
    n_checked = 0
    while n_checked < 50:
        ph = rational_phase(rng)
        res = _run_collisions(table, ph, 30, "exact")
        if res.status != "stopped":
            continue
        back = _run_collisions(table, res.final.reversed(), res.n_collisions,
                               "exact")
        if back.status != "stopped":
            continue
        # The reversed run ends at the first forward collision; the residual
        # free flight back to the start has parameter = first flight param.
        first = next(e for e in res.events if e.kind == COLLISION)
        dp = res.path_param - back.path_param
        fx = back.final.x + dp * back.final.dx
        fy = back.final.y + dp * back.final.dy
        assert (fx, fy) == (ph.x, ph.y)
        assert (back.final.dx, back.final.dy) == (-ph.dx, -ph.dy)
        n_checked += 1


def test_time_reversibility_float():
    rng = random.Random(6)
    table = w_half()
    n_checked = 0
    while n_checked < 50:
        ph0 = rational_phase(rng)
        n = math.hypot(ph0.dx, ph0.dy)
        ph = PhasePoint(float(ph0.x), float(ph0.y), ph0.dx / n, ph0.dy / n)
        res = _run_collisions(table, ph, 30, "float")
        if res.status != "stopped":
            continue
        back = _run_collisions(table, res.final.reversed(), res.n_collisions,
                               "float")
        if back.status != "stopped":
            continue
        resid = res.path_length - back.path_length
        fx = back.final.x + resid * back.final.dx
        fy = back.final.y + resid * back.final.dy
        tol = 1e-9 * max(1.0, res.path_length)
        assert abs(fx - ph.x) < tol and abs(fy - ph.y) < tol
        n_checked += 1


def test_engine_agreement_short():
    rng = random.Random(7)
    table = w_half()
    n_checked = 0
    while n_checked < 10:
        ph = rational_phase(rng)
        res_e = _run_collisions(table, ph, 200, "exact")
        if res_e.status != "stopped":
            continue
        n = math.hypot(ph.dx, ph.dy)
        phf = PhasePoint(float(ph.x), float(ph.y), ph.dx / n, ph.dy / n)
        res_f = _run_collisions(table, phf, 200, "float")
        assert res_f.status == "stopped"
        assert abs(float(res_e.final.x) - res_f.final.x) < 1e-8
        assert abs(float(res_e.final.y) - res_f.final.y) < 1e-8
        n_checked += 1


def test_four_direction_invariant_along_trajectory():
    rng = random.Random(8)
    table = w_half()
    ph = rational_phase(rng)
    n = math.hypot(ph.dx, ph.dy)
    phf = PhasePoint(float(ph.x), float(ph.y), ph.dx / n, ph.dy / n)
    mags = (abs(phf.dx), abs(phf.dy))
    x, y, dx, dy = phf.x, phf.y, phf.dx, phf.dy
    from windtree.geometry import reflect_rect
    count = 0
    for ev in iter_events(table, phf, Budget(max_collisions=2000,
                                             max_radius=10.0 ** 7)):
        if ev.kind == COLLISION:
            dx, dy = reflect_rect((dx, dy), ev.normal)
            assert (abs(dx), abs(dy)) == mags
            count += 1
    assert count == 2000


def test_determinism_across_runs():
    table = Table("square", IidRandom(((rect_spec(F(1, 2), F(1, 2)), 0.5),
                                       (EMPTY, 0.5)), seed=3))
    ph = PhasePoint(0.1, 0.2, math.cos(0.3), math.sin(0.3))
    r1 = _run_collisions(table, ph, 100, "float")
    r2 = _run_collisions(table, ph, 100, "float")
    assert [e for e in r1.events] == [e for e in r2.events]
    assert r1.final == r2.final


def test_broad_phase_soundness_random():
    # The collision next_event finds equals the brute-force minimum over all
    # obstacles within range.
    rng = random.Random(10)
    table = Table("square", IidRandom(((rect_spec(F(1, 2), F(1, 4)), 0.7),
                                       (EMPTY, 0.3)), seed=17))
    from windtree.geometry import Rect, ray_rect_intersection
    for _ in range(300):
        while True:
            x, y = rng.uniform(-5, 5), rng.uniform(-5, 5)
            i, j = round(x), round(y)
            spec = table.spec_at((i, j))
            if spec.is_empty or max(abs(x - i) - float(spec.dims[0]) / 2,
                                    abs(y - j) - float(spec.dims[1]) / 2) > 0:
                break
        th = rng.uniform(0, 2 * math.pi)
        d = (math.cos(th), math.sin(th))
        ev = next_event(table, PhasePoint(x, y, *d),
                        Budget(max_radius=40, max_path_length=30))
        best = None
        for ii in range(-42, 43):
            for jj in range(-42, 43):
                spec = table.spec_at((ii, jj))
                if spec.is_empty:
                    continue
                hw, hh = float(spec.dims[0]) / 2, float(spec.dims[1]) / 2
                h = ray_rect_intersection((x, y), d, Rect(ii, jj, hw, hh))
                if h is not None and h.time <= 30 and (best is None or h.time < best):
                    best = h.time
        if ev.kind == COLLISION:
            assert best is not None and abs(ev.time - best) < 1e-9
        elif ev.kind == CELL:
            assert best is None or best > ev.time - 1.5
