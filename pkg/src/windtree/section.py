"""Ring section curves, first-return maps, and recurrence statistics.

The ring curve of index N is the closed curve made of the diamond
|x| + |y| = N outside all obstacles, with the portion inside each obstacle
centered on a ring site (|i| + |j| = N) replaced by the outward-facing part
of that obstacle's boundary.  It separates the table into a finite and an
infinite part; section points on it carry a transverse direction tagged by
the side it points into.

The first-return map sends a section point to the next crossing of its
curve along the flow.  Return detection intersects flight chords with curve
pieces (no proximity thresholds), so the exact engine supports invertibility
checks with exact state equality.
"""

from __future__ import annotations

import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .flow import Budget, ExactEngine, FloatEngine, traverse_cells
from .geometry import REGULAR, reflect_disk, reflect_rect
from .table import SQUARE, Table, TableError, ring_sites, sample_seed

OUTER = "outer"
INNER = "inner"

DIAMOND = "diamond"
BOUNDARY = "boundary"

JUNCTION_TOL = 1e-12

# Sampled base points land on a dyadic grid of each piece, so the exact
# engine sees small denominators.
OFFSET_GRID = 1 << 16
# Rationalized sampled directions: primitive integer vectors on this grid.
DIRECTION_GRID = 1 << 10

Z95 = 1.959963984540054


@dataclass(frozen=True)
class Piece:
    """One curve piece: a straight segment or a circular arc.

    Segments have exact endpoints on rational tables.  Arcs (disk tables,
    float-only) run counterclockwise from angle a0 to a1 > a0.
    """

    kind: str                  # 'seg' | 'arc'
    tag: str                   # DIAMOND | BOUNDARY
    p0: Tuple[object, object] = None
    p1: Tuple[object, object] = None
    normal: Tuple[int, int] = None   # outward normal (segments; unnormalized)
    center: Tuple[float, float] = None
    radius: float = 0.0
    a0: float = 0.0
    a1: float = 0.0

    def length(self) -> float:
        if self.kind == "seg":
            return math.hypot(float(self.p1[0]) - float(self.p0[0]),
                              float(self.p1[1]) - float(self.p0[1]))
        return self.radius * (self.a1 - self.a0)

    def point_at(self, frac):
        if self.kind == "seg":
            return (self.p0[0] + frac * (self.p1[0] - self.p0[0]),
                    self.p0[1] + frac * (self.p1[1] - self.p0[1]))
        a = self.a0 + float(frac) * (self.a1 - self.a0)
        return (self.center[0] + self.radius * math.cos(a),
                self.center[1] + self.radius * math.sin(a))

    def outward_at(self, point) -> Tuple[float, float]:
        if self.kind == "seg":
            return (float(self.normal[0]), float(self.normal[1]))
        return ((float(point[0]) - self.center[0]) / self.radius,
                (float(point[1]) - self.center[1]) / self.radius)


@dataclass(frozen=True)
class SectionCurve:
    n: int
    pieces: Tuple[Piece, ...]
    total_length: float
    cum_lengths: Tuple[float, ...]

    def arc_position(self, piece_index: int, point) -> float:
        base = self.cum_lengths[piece_index]
        pc = self.pieces[piece_index]
        if pc.kind == "seg":
            return base + math.hypot(float(point[0]) - float(pc.p0[0]),
                                     float(point[1]) - float(pc.p0[1]))
        a = math.atan2(float(point[1]) - pc.center[1],
                       float(point[0]) - pc.center[0])
        while a < pc.a0:
            a += 2 * math.pi
        return base + pc.radius * (a - pc.a0)


@dataclass(frozen=True)
class SectionPoint:
    piece_index: int
    point: Tuple[object, object]
    direction: Tuple[object, object]
    side: str
    s: float


@dataclass(frozen=True)
class ReturnOutcome:
    status: str  # 'returned' | 'escaped' | 'budget' | 'singular'
    section_point: Optional[SectionPoint] = None
    time: float = 0.0
    collisions: int = 0


@dataclass(frozen=True)
class FractionEstimate:
    n_ring: int
    m_outer: int
    n_samples: int
    n_returned: int
    n_escaped: int
    n_budget: int
    n_singular: int
    point: float
    ci_low: float
    ci_high: float
    seed: int

    def record(self) -> dict:
        return {"N": self.n_ring, "M": self.m_outer, "n": self.n_samples,
                "returned": self.n_returned, "escaped": self.n_escaped,
                "singular": self.n_singular, "budget": self.n_budget,
                "point": self.point, "ci_low": self.ci_low,
                "ci_high": self.ci_high, "seed": self.seed}


def wilson_interval(k: int, n: int, z: float = Z95) -> Tuple[float, float]:
    """Wilson score interval for a binomial proportion; valid near 0 and 1."""
    if n == 0:
        return (0.0, 1.0)
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


# ---------------------------------------------------------------------------
# Curve construction: square lattice, rectangle/empty obstacles, exact.


def _diamond_point(n: int, g: Fraction) -> Tuple[Fraction, Fraction]:
    """Point of the diamond at parameter g in [0, 4n); one unit of g moves
    one coordinate unit along an edge, counterclockwise from (n, 0)."""
    g = g % (4 * n)
    edge, f = divmod(g, n)
    if edge == 0:
        return (n - f, f)
    if edge == 1:
        return (-f, n - f)
    if edge == 2:
        return (f - n, -f)
    return (f, f - n)


_EDGE_NORMALS = ((1, 1), (-1, 1), (-1, -1), (1, -1))


def _site_param(n: int, site: Tuple[int, int]) -> Fraction:
    i, j = site
    if i > 0 and j >= 0:
        return Fraction(j)
    if i <= 0 and j > 0:
        return Fraction(n - i)
    if i < 0 and j <= 0:
        return Fraction(2 * n - j)
    return Fraction(3 * n + i)


def _rect_detour(site, hw: Fraction, hh: Fraction, a_pt, b_pt) -> List[Piece]:
    """Boundary walk from a_pt to b_pt counterclockwise around the rectangle:
    with the diamond oriented counterclockwise this is the outward-facing
    part."""
    i, j = site
    se = (i + hw, j - hh)
    ne = (i + hw, j + hh)
    nw = (i - hw, j + hh)
    sw = (i - hw, j - hh)
    # Sides in ccw order: (start corner, end corner, outward normal).
    sides = [(se, ne, (1, 0)), (ne, nw, (0, 1)),
             (nw, sw, (-1, 0)), (sw, se, (0, -1))]

    def side_of(pt):
        for k, (c0, c1, nrm) in enumerate(sides):
            if nrm[0] != 0:
                if pt[0] == c0[0] and min(c0[1], c1[1]) <= pt[1] <= max(c0[1], c1[1]):
                    return k
            else:
                if pt[1] == c0[1] and min(c0[0], c1[0]) <= pt[0] <= max(c0[0], c1[0]):
                    return k
        raise AssertionError("detour endpoint not on the obstacle boundary")

    # A corner point belongs to two sides; start on the side LEAVING the
    # corner ccw, end on the side ARRIVING at it.
    sa = side_of(a_pt)
    if a_pt == sides[sa][1]:
        sa = (sa + 1) % 4
    sb = side_of(b_pt)
    if b_pt == sides[sb][0]:
        sb = (sb - 1) % 4
    pieces = []
    cur = a_pt
    k = sa
    while k != sb:
        end = sides[k][1]
        if cur != end:
            pieces.append(Piece("seg", BOUNDARY, cur, end, sides[k][2]))
        cur = end
        k = (k + 1) % 4
    if cur != b_pt:
        pieces.append(Piece("seg", BOUNDARY, cur, b_pt, sides[k][2]))
    return pieces


def build_ring_curve(table: Table, n: int) -> SectionCurve:
    """Ring curve of index n for a square-lattice rectangle table, exact."""
    if table.lattice != SQUARE or not table.is_rect_table():
        raise TableError("exact ring curves require square-lattice rectangle tables")
    if n < 1:
        raise TableError("ring index must be >= 1")

    # Covered parameter intervals, one per occupied ring site.
    intervals = []  # (g_lo, g_hi, site, hw, hh)
    for site in ring_sites(n):
        spec = table.spec_at(site)
        if spec.is_empty:
            continue
        hw = spec.dims[0] / 2
        hh = spec.dims[1] / 2
        c = min(hw, hh)
        g = _site_param(n, site)
        intervals.append((g - c, g + c, site, hw, hh))
    intervals.sort(key=lambda iv: iv[0])
    for (a0, a1, s0, _, _), (b0, b1, s1, _, _) in zip(intervals, intervals[1:]):
        if b0 < a1:
            raise AssertionError(f"ring obstacles {s0} and {s1} overlap the curve")

    pieces: List[Piece] = []

    def add_diamond_run(g_from: Fraction, g_to: Fraction):
        # Straight diamond segments from g_from to g_to, split at the
        # diamond's own corners (multiples of n).
        assert g_to >= g_from
        g = g_from
        while g < g_to:
            nxt = min(g_to, Fraction(n * (math.floor(g / n) + 1)))
            p0 = _diamond_point(n, g)
            p1 = _diamond_point(n, nxt)
            edge = int((g % (4 * n)) // n)
            pieces.append(Piece("seg", DIAMOND, p0, p1, _EDGE_NORMALS[edge]))
            g = nxt

    if not intervals:
        add_diamond_run(Fraction(0), Fraction(4 * n))
    else:
        # Walk from the end of each detour to the start of the next.
        first_lo = intervals[0][0]
        prev_hi = first_lo - 4 * n  # sentinel for the wrap-around
        for idx, (g_lo, g_hi, site, hw, hh) in enumerate(intervals):
            if idx > 0:
                add_diamond_run(prev_hi, g_lo)
            a_pt = _diamond_point(n, g_lo)
            b_pt = _diamond_point(n, g_hi)
            pieces.extend(_rect_detour(site, hw, hh, a_pt, b_pt))
            prev_hi = g_hi
        add_diamond_run(prev_hi, first_lo + 4 * n)

    # Closure check: consecutive pieces share endpoints exactly.
    for k, pc in enumerate(pieces):
        nxt = pieces[(k + 1) % len(pieces)]
        if pc.p1 != nxt.p0:
            raise AssertionError("ring curve is not closed")

    lengths = [pc.length() for pc in pieces]
    cum = [0.0]
    for l in lengths:
        cum.append(cum[-1] + l)
    return SectionCurve(n, tuple(pieces), cum[-1], tuple(cum[:-1]))


# ---------------------------------------------------------------------------
# Sampling with the invariant cross-section measure


def _rational_direction(angle: float) -> Tuple[int, int]:
    dx = round(math.cos(angle) * DIRECTION_GRID)
    dy = round(math.sin(angle) * DIRECTION_GRID)
    g = math.gcd(abs(dx), abs(dy))
    if g == 0:
        return (0, 0)
    return (dx // g, dy // g)


def sample_section(curve: SectionCurve, side: str, n: int, seed: int,
                   exact: bool = False) -> List[SectionPoint]:
    """Independent section samples: base point uniform in arc length,
    direction cosine-weighted about the curve normal on the chosen side.

    Inner-side base points live on diamond pieces only (at an obstacle
    boundary piece every table direction points into the infinite part).
    With ``exact`` the base point lands on a dyadic grid of its piece and
    the direction is a nearby primitive integer vector, so the exact engine
    can run the sample.
    """
    if side not in (OUTER, INNER):
        raise ValueError(f"unknown side {side!r}")
    usable = [k for k, pc in enumerate(curve.pieces)
              if side == OUTER or pc.tag == DIAMOND]
    weights = [curve.pieces[k].length() for k in usable]
    total = sum(weights)
    out: List[SectionPoint] = []
    k_draw = 0
    while len(out) < n:
        rng = random.Random(sample_seed(seed, k_draw))
        k_draw += 1
        sp = _draw_one(curve, usable, weights, total, side, rng, exact)
        if sp is not None:
            out.append(sp)
    return out


def _draw_one(curve, usable, weights, total, side, rng, exact):
    r = rng.random() * total
    idx = 0
    while idx < len(usable) - 1 and r > weights[idx]:
        r -= weights[idx]
        idx += 1
    piece_index = usable[idx]
    pc = curve.pieces[piece_index]
    plen = weights[idx]
    if exact:
        k = rng.randrange(1, OFFSET_GRID)
        frac = Fraction(k, OFFSET_GRID)
    else:
        frac = rng.random()
    # Junction guard: keep clear of piece endpoints.
    if float(frac) * plen < JUNCTION_TOL or (1 - float(frac)) * plen < JUNCTION_TOL:
        return None
    point = pc.point_at(frac)
    outward = pc.outward_at(point)
    base_angle = math.atan2(outward[1], outward[0])
    if side == INNER:
        base_angle += math.pi
    theta = math.asin(2.0 * rng.random() - 1.0)
    angle = base_angle + theta
    if exact:
        d = _rational_direction(angle)
        if d == (0, 0):
            return None
        nx, ny = (pc.normal if pc.kind == "seg" else
                  (point[0] - pc.center[0], point[1] - pc.center[1]))
        dot = d[0] * nx + d[1] * ny
        if side == INNER:
            dot = -dot
        if dot <= 0:
            return None  # rounded onto or across the tangent; redraw
        direction = d
    else:
        direction = (math.cos(angle), math.sin(angle))
    return SectionPoint(piece_index, point, direction, side,
                        curve.arc_position(piece_index, point))


# ---------------------------------------------------------------------------
# Crossing detection


def _build_piece_index(curves: Sequence[Tuple[str, SectionCurve]]):
    """cell -> ((curve_key, piece_index), ...) with a one-cell fat margin."""
    index: Dict[Tuple[int, int], list] = {}
    for key, curve in curves:
        for k, pc in enumerate(curve.pieces):
            if pc.kind == "seg":
                p0 = (float(pc.p0[0]), float(pc.p0[1]))
                p1 = (float(pc.p1[0]), float(pc.p1[1]))
                d = (p1[0] - p0[0], p1[1] - p0[1])
                ln = math.hypot(*d)
                cells = traverse_cells(p0, (d[0] / ln, d[1] / ln), ln)
            else:
                cells = set()
                steps = max(4, int(pc.length() * 4) + 1)
                for m in range(steps + 1):
                    px, py = pc.point_at(m / steps)
                    cells.add((round(px), round(py)))
                cells = list(cells)
            for (ci, cj) in cells:
                for di in (-1, 0, 1):
                    for dj in (-1, 0, 1):
                        index.setdefault((ci + di, cj + dj), []).append((key, k))
    return {cell: tuple(dict.fromkeys(v)) for cell, v in index.items()}


def _seg_cross(a, b, c, d):
    """Intersection of segments a-b and c-d; returns (s, u, point) with
    s, u in [0,1], or 'overlap' for collinear overlap, or None.

    Exact for Fraction/int inputs; float inputs get an endpoint slack of
    1e-12 length units so contacts computed along a different code path
    (engine hit points) are not lost to rounding."""
    rx, ry = b[0] - a[0], b[1] - a[1]
    sx, sy = d[0] - c[0], d[1] - c[1]
    denom = rx * sy - ry * sx
    qpx, qpy = c[0] - a[0], c[1] - a[1]
    if denom == 0:
        if qpx * ry - qpy * rx != 0:
            return None
        # Collinear: overlapping in more than a point?
        rr = rx * rx + ry * ry
        t0 = (qpx * rx + qpy * ry)
        t1 = t0 + (sx * rx + sy * ry)
        lo, hi = min(t0, t1), max(t0, t1)
        if hi < 0 or lo > rr:
            return None
        if hi == 0 or lo == rr:
            # Touching at a single shared endpoint.
            t = 0 if hi == 0 else 1
            pt = (a[0] + t * rx, a[1] + t * ry)
            u = 0 if (pt[0] == c[0] and pt[1] == c[1]) else 1
            return (t, u, pt)
        return "overlap"
    exact = not any(isinstance(v, float) for v in (a[0], a[1], c[0], c[1],
                                                   rx, ry, sx, sy))
    if exact:
        s = Fraction(qpx * sy - qpy * sx, denom)
        u = Fraction(qpx * ry - qpy * rx, denom)
        if 0 <= s <= 1 and 0 <= u <= 1:
            return (s, u, (a[0] + s * rx, a[1] + s * ry))
        return None
    s = (qpx * sy - qpy * sx) / denom
    u = (qpx * ry - qpy * rx) / denom
    eps_s = JUNCTION_TOL / math.hypot(rx, ry)
    eps_u = JUNCTION_TOL / math.hypot(sx, sy)
    if -eps_s <= s <= 1 + eps_s and -eps_u <= u <= 1 + eps_u:
        s = min(max(s, 0.0), 1.0)
        u = min(max(u, 0.0), 1.0)
        return (s, u, (a[0] + s * rx, a[1] + s * ry))
    return None


def _seg_arc_cross(a, b, pc: Piece):
    """Min-s intersection of segment a-b with the arc piece, float.

    Roots within 1e-12 length units of the segment ends are accepted and
    clamped, so a contact computed by the engine's own quadratic is found
    even when the two code paths differ by a few ulps."""
    ax, ay = float(a[0]), float(a[1])
    dx, dy = float(b[0]) - ax, float(b[1]) - ay
    fx, fy = ax - pc.center[0], ay - pc.center[1]
    qa = dx * dx + dy * dy
    qb = fx * dx + fy * dy
    qc = fx * fx + fy * fy - pc.radius * pc.radius
    disc = qb * qb - qa * qc
    if disc < 0 or qa == 0:
        return None
    sq = math.sqrt(disc)
    tol_t = JUNCTION_TOL / math.sqrt(qa)
    best = None
    for t in ((-qb - sq) / qa, (-qb + sq) / qa):
        if -tol_t <= t <= 1 + tol_t:
            t = min(max(t, 0.0), 1.0)
            px, py = ax + t * dx, ay + t * dy
            ang = math.atan2(py - pc.center[1], px - pc.center[0])
            while ang < pc.a0 - 1e-12:
                ang += 2 * math.pi
            if ang <= pc.a1 + 1e-12:
                u = (ang - pc.a0) / (pc.a1 - pc.a0)
                if best is None or t < best[0]:
                    best = (t, min(max(u, 0.0), 1.0), (px, py))
    return best


# ---------------------------------------------------------------------------
# First-return runner


class EstimatorError(RuntimeError):
    """Raised when an estimate is statistically unusable (singular pile-up)."""


class _ReturnRunner:
    """Shared state for repeated first-return runs on one (N, M) pair."""

    def __init__(self, table: Table, curve_n: SectionCurve,
                 curve_m: Optional[SectionCurve], engine: str):
        self.table = table
        self.curve_n = curve_n
        self.curve_m = curve_m
        self.engine = engine
        curves = [("n", curve_n)]
        if curve_m is not None:
            curves.append(("m", curve_m))
        self.index = _build_piece_index(curves)
        self.float_engine = FloatEngine(table)
        self._float_pieces = {}
        for key, curve in curves:
            for k, pc in enumerate(curve.pieces):
                if pc.kind == "seg":
                    self._float_pieces[(key, k)] = (
                        pc, (float(pc.p0[0]), float(pc.p0[1])),
                        (float(pc.p1[0]), float(pc.p1[1])))
                else:
                    self._float_pieces[(key, k)] = (pc, None, None)
        self._scaled_cache = {}

    def curve(self, key: str) -> SectionCurve:
        return self.curve_n if key == "n" else self.curve_m

    # -- classification helpers

    def _classify_side(self, key: str, piece_index: int, u, point, direction):
        """Side the direction points into after crossing, or None if the
        crossing is ambiguous (junction with mixed signs / tangential)."""
        curve = self.curve(key)
        pieces_to_check = [piece_index]
        at_junction = False
        plen = curve.pieces[piece_index].length()
        uf = float(u)
        if uf * plen < JUNCTION_TOL:
            pieces_to_check.append((piece_index - 1) % len(curve.pieces))
            at_junction = True
        elif (1.0 - uf) * plen < JUNCTION_TOL:
            pieces_to_check.append((piece_index + 1) % len(curve.pieces))
            at_junction = True
        sign = 0
        for k in pieces_to_check:
            pc = curve.pieces[k]
            if pc.kind == "seg":
                dot = direction[0] * pc.normal[0] + direction[1] * pc.normal[1]
                dot = float(dot)
            else:
                nx, ny = pc.outward_at(point)
                dot = float(direction[0]) * nx + float(direction[1]) * ny
            s = 0 if dot == 0 else (1 if dot > 0 else -1)
            if s == 0:
                return None
            if sign == 0:
                sign = s
            elif sign != s:
                return None
        return OUTER if sign > 0 else INNER

    # -- float path

    def run_float(self, sp: SectionPoint, budget: Budget) -> ReturnOutcome:
        x, y = float(sp.point[0]), float(sp.point[1])
        dxv, dyv = sp.direction
        nrm = math.hypot(float(dxv), float(dyv))
        dxv, dyv = float(dxv) / nrm, float(dyv) / nrm
        t_total = 0.0
        n_coll = 0
        eng = self.float_engine
        while True:
            if n_coll >= budget.max_collisions or \
                    t_total >= budget.max_path_length:
                return ReturnOutcome("budget", time=t_total, collisions=n_coll)
            cells: List[tuple] = []
            res = eng.collide(x, y, dxv, dyv, budget.max_path_length - t_total,
                              budget.max_radius, cells_out=cells)
            if res[0] == "hit":
                _, hit, site, shape_kind = res
                end = hit.point
                chord_len = hit.time
            else:
                end = (res[2], res[3])
                chord_len = res[1]
            cross = self._find_crossing_float((x, y), end, cells)
            if cross == "overlap":
                return ReturnOutcome("singular", time=t_total, collisions=n_coll)
            if cross is not None:
                s, u, pt, key, pidx = cross
                ends_here = res[0] == "hit" and \
                    abs(pt[0] - end[0]) < JUNCTION_TOL and \
                    abs(pt[1] - end[1]) < JUNCTION_TOL
                pc = self.curve(key).pieces[pidx]
                if pc.tag == BOUNDARY and not ends_here:
                    return ReturnOutcome("singular", time=t_total,
                                         collisions=n_coll)
                if ends_here:
                    if hit.kind != REGULAR:
                        return ReturnOutcome("singular", time=t_total,
                                             collisions=n_coll)
                    if shape_kind == "rect":
                        d_after = reflect_rect((dxv, dyv), hit.normal)
                    else:
                        d_after = _unit2(*reflect_disk((dxv, dyv), hit.normal))
                    n_after = n_coll + 1
                else:
                    d_after = (dxv, dyv)
                    n_after = n_coll
                side = self._classify_side(key, pidx, u, pt, d_after)
                if side is None:
                    return ReturnOutcome("singular", time=t_total,
                                         collisions=n_coll)
                t_at = t_total + s * chord_len
                if key == "m":
                    return ReturnOutcome("escaped", time=t_at,
                                         collisions=n_after)
                spt = SectionPoint(pidx, pt, d_after, side,
                                   self.curve_n.arc_position(pidx, pt))
                return ReturnOutcome("returned", spt, t_at, n_after)
            if res[0] == "hit":
                if hit.kind != REGULAR:
                    return ReturnOutcome("singular", time=t_total + hit.time,
                                         collisions=n_coll)
                t_total += hit.time
                x, y = end
                if shape_kind == "rect":
                    dxv, dyv = reflect_rect((dxv, dyv), hit.normal)
                else:
                    dxv, dyv = _unit2(*reflect_disk((dxv, dyv), hit.normal))
                n_coll += 1
            else:
                return ReturnOutcome("budget", time=t_total + chord_len,
                                     collisions=n_coll)

    def _find_crossing_float(self, start, end, cells):
        # Contacts at the chord start are skipped: a boundary contact there
        # was already classified on the previous chord (or is the excluded
        # launch contact of the run).
        if start == end:
            return None
        cand = []
        seen = set()
        index = self.index
        for cell in cells:
            entries = index.get((cell[0], cell[1]))
            if entries:
                for e in entries:
                    if e not in seen:
                        seen.add(e)
                        cand.append(e)
        best = None
        for key, pidx in cand:
            pc, p0f, p1f = self._float_pieces[(key, pidx)]
            if pc.kind == "seg":
                r = _seg_cross(start, end, p0f, p1f)
            else:
                r = _seg_arc_cross(start, end, pc)
            if r == "overlap":
                return "overlap"
            if r is None:
                continue
            s, u, pt = r
            if abs(pt[0] - start[0]) < JUNCTION_TOL and \
                    abs(pt[1] - start[1]) < JUNCTION_TOL:
                continue
            if best is None or s < best[0]:
                best = (s, u, pt, key, pidx)
        return best

    # -- exact path

    def _scaled_pieces(self, scale: int):
        cached = self._scaled_cache.get(scale)
        if cached is None:
            cached = {}
            for key, curve in (("n", self.curve_n), ("m", self.curve_m)):
                if curve is None:
                    continue
                for k, pc in enumerate(curve.pieces):
                    p0 = (_scale_coord(pc.p0[0], scale),
                          _scale_coord(pc.p0[1], scale))
                    p1 = (_scale_coord(pc.p1[0], scale),
                          _scale_coord(pc.p1[1], scale))
                    cached[(key, k)] = (p0, p1)
            self._scaled_cache[scale] = cached
        return cached

    def run_exact(self, sp: SectionPoint, budget: Budget) -> ReturnOutcome:
        eng = ExactEngine(self.table, Fraction(sp.point[0]),
                          Fraction(sp.point[1]),
                          (int(sp.direction[0]), int(sp.direction[1])))
        scaled = self._scaled_pieces(eng.scale)
        scale = eng.scale
        x, y = eng.x0, eng.y0
        dxv, dyv = eng.dx0, eng.dy0
        param = Fraction(0)
        max_param = Fraction(budget.max_path_length) / eng.norm
        n_coll = 0
        while True:
            if n_coll >= budget.max_collisions:
                return ReturnOutcome("budget", time=float(param * eng.norm),
                                     collisions=n_coll)
            cells: List[tuple] = []
            res = eng.step(x, y, dxv, dyv, budget.max_radius,
                           max_param=max_param - param, cells_out=cells)
            if res[0] == "hit":
                _, px, py, axis, corner, site = res
                end = (px, py)
                dparam = Fraction(px - x, dxv * scale) if dxv else \
                    Fraction(py - y, dyv * scale)
            elif res[0] == "singular":
                return ReturnOutcome("singular", time=float(param * eng.norm),
                                     collisions=n_coll)
            else:
                # Budget stop: the truncated chord can still cross a curve.
                if res[0] == "radius":
                    t_scaled = Fraction(res[3], res[4])
                else:
                    t_scaled = (max_param - param) * scale
                end = (x + t_scaled * dxv, y + t_scaled * dyv)
                dparam = t_scaled / scale
                axis = None
                corner = False
            cross = self._find_crossing_exact(scaled, (x, y), end, cells)
            if cross == "overlap":
                return ReturnOutcome("singular", time=float(param * eng.norm),
                                     collisions=n_coll)
            if cross is not None:
                s, u, pt, key, pidx = cross
                ends_here = axis is not None and \
                    pt == (Fraction(end[0]), Fraction(end[1]))
                pc = self.curve(key).pieces[pidx]
                if pc.tag == BOUNDARY and not ends_here:
                    return ReturnOutcome("singular", time=float(param * eng.norm),
                                         collisions=n_coll)
                if ends_here:
                    if corner:
                        return ReturnOutcome("singular",
                                             time=float(param * eng.norm),
                                             collisions=n_coll)
                    d_after = (-dxv, dyv) if axis == "x" else (dxv, -dyv)
                    n_after = n_coll + 1
                else:
                    d_after = (dxv, dyv)
                    n_after = n_coll
                side = self._classify_side(key, pidx, u,
                                           (pt[0] / scale, pt[1] / scale),
                                           d_after)
                if side is None:
                    return ReturnOutcome("singular", time=float(param * eng.norm),
                                         collisions=n_coll)
                t_at = float((param + s * dparam) * eng.norm)
                if key == "m":
                    return ReturnOutcome("escaped", time=t_at, collisions=n_after)
                point = (Fraction(pt[0], 1) / scale, Fraction(pt[1], 1) / scale)
                spt = SectionPoint(pidx, point, d_after, side,
                                   self.curve_n.arc_position(pidx, point))
                return ReturnOutcome("returned", spt, t_at, n_after)
            if axis is None:
                return ReturnOutcome("budget",
                                     time=float((param + dparam) * eng.norm),
                                     collisions=n_coll)
            if corner:
                return ReturnOutcome("singular",
                                     time=float((param + dparam) * eng.norm),
                                     collisions=n_coll)
            param += dparam
            x, y = end
            if axis == "x":
                dxv = -dxv
            else:
                dyv = -dyv
            n_coll += 1

    def _find_crossing_exact(self, scaled, start, end, cells):
        # Chord-start contacts were classified on the previous chord (or are
        # the excluded launch contact).
        cand = []
        seen = set()
        for cell in cells:
            entries = self.index.get(cell)
            if entries:
                for e in entries:
                    if e not in seen:
                        seen.add(e)
                        cand.append(e)
        best = None
        for key, pidx in cand:
            p0, p1 = scaled[(key, pidx)]
            r = _seg_cross(start, end, p0, p1)
            if r == "overlap":
                return "overlap"
            if r is None:
                continue
            s, u, pt = r
            if pt[0] == start[0] and pt[1] == start[1]:
                continue
            if best is None or s < best[0]:
                best = (s, u, pt, key, pidx)
        return best


def _scale_coord(v, scale: int) -> int:
    f = Fraction(v) * scale
    if f.denominator != 1:
        raise AssertionError("curve coordinate does not scale to an integer")
    return f.numerator


def _unit2(dxv: float, dyv: float) -> Tuple[float, float]:
    n = math.hypot(dxv, dyv)
    return dxv / n, dyv / n


def first_return(table: Table, sp: SectionPoint, curve_n: SectionCurve,
                 m_outer: int, budget: Budget, engine: str = "float",
                 curve_m: Optional[SectionCurve] = None,
                 runner: Optional[_ReturnRunner] = None) -> ReturnOutcome:
    """Run the first-return map from section point ``sp`` on ``curve_n``.

    Returned at the first crossing of the curve after leaving it (the launch
    contact is excluded); Escaped when the ring-``m_outer`` curve is crossed
    first; budget and singular outcomes as produced by the flow.
    """
    if runner is None:
        if curve_m is None and m_outer is not None:
            curve_m = build_ring_curve(table, m_outer)
        runner = _ReturnRunner(table, curve_n, curve_m, engine)
    if engine == "exact":
        return runner.run_exact(sp, budget)
    return runner.run_float(sp, budget)


# ---------------------------------------------------------------------------
# Recurrence estimation


def sample_at_index(curve: SectionCurve, side: str, seed: int, index: int,
                    exact: bool = False) -> SectionPoint:
    """Deterministic indexed sample: the first accepted draw from the
    index-derived RNG stream."""
    rng = random.Random(sample_seed(seed, index))
    usable = [k for k, pc in enumerate(curve.pieces)
              if side == OUTER or pc.tag == DIAMOND]
    weights = [curve.pieces[k].length() for k in usable]
    total = sum(weights)
    while True:
        sp = _draw_one(curve, usable, weights, total, side, rng, exact)
        if sp is not None:
            return sp


def ring_curve_for(table: Table, n: int) -> SectionCurve:
    """Ring curve with the builder the table supports: exact for
    square-lattice rectangle tables, float (with arcs) for disk tables."""
    if table.lattice == SQUARE and table.is_rect_table():
        return build_ring_curve(table, n)
    from .lorentz import build_ring_curve_float
    return build_ring_curve_float(table, n)


def _statuses_for_indices(table, n_ring, m_outer, seed, indices, budget,
                          engine, side) -> List[str]:
    curve_n = ring_curve_for(table, n_ring)
    curve_m = ring_curve_for(table, m_outer)
    runner = _ReturnRunner(table, curve_n, curve_m, engine)
    out = []
    for k in indices:
        sp = sample_at_index(curve_n, side, seed, k, exact=(engine == "exact"))
        oc = runner.run_exact(sp, budget) if engine == "exact" \
            else runner.run_float(sp, budget)
        out.append(oc.status)
    return out


def _worker_statuses(args):
    return _statuses_for_indices(*args)


def recurrence_fraction(table: Table, n_ring: int, m_outer: int,
                        n_samples: int, seed: int,
                        budget: Optional[Budget] = None,
                        engine: str = "float", threads: int = 1,
                        side: str = OUTER) -> FractionEstimate:
    """Estimate the fraction of section samples that return to the ring-N
    curve before crossing the ring-M curve.

    Singular samples are discarded and replaced by further indexed draws
    (their count is reported); a singular rate above 1% aborts.  Results are
    independent of ``threads``.
    """
    if m_outer <= n_ring:
        raise ValueError("m_outer must exceed n_ring")
    if budget is None:
        budget = Budget()
    budget = Budget(budget.max_collisions, budget.max_path_length,
                    max_radius=max(budget.max_radius, m_outer + 5))

    counts = {"returned": 0, "escaped": 0, "budget": 0, "singular": 0}
    needed = n_samples
    next_index = 0
    while needed > 0:
        indices = list(range(next_index, next_index + needed))
        next_index += needed
        statuses = _run_status_batch(table, n_ring, m_outer, seed, indices,
                                     budget, engine, side, threads)
        for st in statuses:
            counts[st] += 1
        needed = sum(1 for st in statuses if st == "singular")
        if counts["singular"] > max(10, 0.01 * n_samples):
            raise EstimatorError(
                f"singular sample rate too high: {counts['singular']} singular "
                f"in {next_index} draws; geometry or tolerance problem likely")
    k = counts["returned"]
    lo, hi = wilson_interval(k, n_samples)
    return FractionEstimate(n_ring, m_outer, n_samples, k, counts["escaped"],
                            counts["budget"], counts["singular"],
                            k / n_samples, lo, hi, seed)


def _run_status_batch(table, n_ring, m_outer, seed, indices, budget, engine,
                      side, threads) -> List[str]:
    if threads <= 1 or len(indices) < 32:
        return _statuses_for_indices(table, n_ring, m_outer, seed, indices,
                                     budget, engine, side)
    chunk = max(16, len(indices) // (threads * 8))
    chunks = [indices[i:i + chunk] for i in range(0, len(indices), chunk)]
    args = [(table, n_ring, m_outer, seed, c, budget, engine, side)
            for c in chunks]
    out: List[str] = []
    with ProcessPoolExecutor(max_workers=threads) as ex:
        for statuses in ex.map(_worker_statuses, args):
            out.extend(statuses)
    return out


# ---------------------------------------------------------------------------
# Annulus width search


@dataclass(frozen=True)
class AnnulusCertificate:
    certified: bool
    n_ring: int
    epsilon: float
    n1: Optional[int]
    estimate: Optional[FractionEstimate]
    trace: Tuple[FractionEstimate, ...]

    def record(self) -> dict:
        return {"certified": self.certified, "N": self.n_ring,
                "epsilon": self.epsilon, "N1": self.n1,
                "estimate": self.estimate.record() if self.estimate else None,
                "trace": [e.record() for e in self.trace]}


def find_annulus_width(table: Table, n_ring: int, epsilon: float,
                       n_samples: int, seed: int,
                       budget: Optional[Budget] = None,
                       max_doublings: int = 7, engine: str = "float",
                       threads: int = 1) -> AnnulusCertificate:
    """Doubling search for an annulus outer ring: the first M in 2N, 4N, ...
    whose return-fraction estimate has ci_low >= 1 - epsilon.

    Never certifies silently: past the doubling cap it returns an explicit
    uncertified result carrying the full search trace.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    target = 1.0 - epsilon
    trace: List[FractionEstimate] = []
    m = 2 * n_ring
    for _ in range(max_doublings):
        est = recurrence_fraction(table, n_ring, m, n_samples,
                                  sample_seed(seed, m), budget=budget,
                                  engine=engine, threads=threads)
        trace.append(est)
        if est.ci_low >= target:
            return AnnulusCertificate(True, n_ring, epsilon, m, est,
                                      tuple(trace))
        m *= 2
    return AnnulusCertificate(False, n_ring, epsilon, None, None, tuple(trace))
