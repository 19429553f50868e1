"""Disk-scatterer tables: triangular and square lattices, horizon probing,
and the recurrence estimator over ring curves with circular arcs.

The ring polygon on the square lattice is the diamond |x|+|y| = n; on the
triangular lattice it is the hexagon through the sites at lattice-graph
distance n.  Portions of the polygon inside a disk are replaced by the
outward-facing arc, mirroring the rectangle construction.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .flow import Budget, FloatEngine
from .section import (BOUNDARY, DIAMOND, FractionEstimate, Piece,
                      SectionCurve, recurrence_fraction)
from .table import (Constant, SQUARE, TRIANGULAR, TRI_ROW_HEIGHT, Table,
                    TableError, ObstacleSpec, sample_seed)

# Largest radius (2% safety margin off the disjointness limit 1/2) for which
# the full-occupancy triangular table keeps positive separation; it exceeds
# the sqrt(3)/4 row-blocking threshold, so the full table has finite horizon.
TRIANGULAR_DEFAULT_RADIUS = 0.49

# Five-disk cluster defaults: center disk plus corner disks at (+-1/2,+-1/2).
# Axis corridors are blocked by 0.4 + 0.15 > 1/2 and diagonal corridors by
# 0.4 > 1/(2 sqrt(2)); neighbors share coincident corner disks.
FIVE_DISK_CENTER_RADIUS = 0.4
FIVE_DISK_CORNER_RADIUS = 0.15


def triangular_table(radius: float = TRIANGULAR_DEFAULT_RADIUS) -> Table:
    if not 0 < radius < 0.5:
        raise TableError("triangular disks must have radius in (0, 1/2)")
    return Table(TRIANGULAR, Constant(ObstacleSpec(kind="disk", radius=radius)))


def five_disk_table(center_radius: float = FIVE_DISK_CENTER_RADIUS,
                    corner_radius: float = FIVE_DISK_CORNER_RADIUS) -> Table:
    return Table(SQUARE, Constant(ObstacleSpec(
        kind="five_disk", center_radius=center_radius,
        corner_radius=corner_radius)))


# ---------------------------------------------------------------------------
# Ring polygon and float curve construction


def _ring_polygon(table: Table, n: int) -> List[Tuple[float, float]]:
    if table.lattice == SQUARE:
        return [(float(n), 0.0), (0.0, float(n)),
                (-float(n), 0.0), (0.0, -float(n))]
    corners_axial = [(n, 0), (0, n), (-n, n), (-n, 0), (0, -n), (n, -n)]
    return [table.site_position(c) for c in corners_axial]


def _collect_disks(table: Table, n: int) -> List[Tuple[float, float, float]]:
    """Disks (cx, cy, r) of obstacles near the ring, coincident duplicates
    removed."""
    eng = FloatEngine(table)
    sites = set()
    if table.lattice == SQUARE:
        for m in (n - 1, n, n + 1):
            if m >= 1:
                from .table import ring_sites
                sites.update(ring_sites(m))
    else:
        # Hexagonal rings n-1, n, n+1 in axial coordinates.
        for m in (n - 1, n, n + 1):
            if m < 1:
                continue
            for i in range(-m, m + 1):
                for j in range(-m, m + 1):
                    if max(abs(i), abs(j), abs(i + j)) == m:
                        sites.add((i, j))
    disks = {}
    for site in sites:
        for shape in eng._site_shapes(site):
            if shape[0] != "disk":
                raise TableError("ring curves with arcs need disk obstacles")
            key = (round(shape[1], 12), round(shape[2], 12), round(shape[3], 12))
            disks[key] = (shape[1], shape[2], shape[3])
    return list(disks.values())


def build_ring_curve_float(table: Table, n: int) -> SectionCurve:
    """Ring curve for a disk table: polygon pieces plus outward arcs, float."""
    if n < 1:
        raise TableError("ring index must be >= 1")
    poly = _ring_polygon(table, n)
    k_edges = len(poly)
    edges = []
    cum = [0.0]
    for k in range(k_edges):
        a = poly[k]
        b = poly[(k + 1) % k_edges]
        ln = math.hypot(b[0] - a[0], b[1] - a[1])
        edges.append((a, b, ln))
        cum.append(cum[-1] + ln)
    total = cum[-1]

    def point_at(g: float) -> Tuple[float, float]:
        g = g % total
        for k in range(k_edges):
            if g <= cum[k + 1] or k == k_edges - 1:
                a, b, ln = edges[k]
                f = (g - cum[k]) / ln
                return (a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]))
        raise AssertionError

    def edge_normal(k: int) -> Tuple[float, float]:
        a, b, ln = edges[k]
        # Outward normal of a ccw polygon edge.
        return ((b[1] - a[1]) / ln, -(b[0] - a[0]) / ln)

    # Covered parameter intervals per disk.
    intervals = []
    for cx, cy, r in _collect_disks(table, n):
        roots = []
        for k in range(k_edges):
            a, b, ln = edges[k]
            dx = (b[0] - a[0]) / ln
            dy = (b[1] - a[1]) / ln
            fx, fy = a[0] - cx, a[1] - cy
            qb = fx * dx + fy * dy
            qc = fx * fx + fy * fy - r * r
            disc = qb * qb - qc
            if disc <= 0:
                continue
            sq = math.sqrt(disc)
            for t in (-qb - sq, -qb + sq):
                if -1e-9 <= t <= ln + 1e-9:
                    roots.append(cum[k] + min(max(t, 0.0), ln))
        if not roots:
            continue
        if len(roots) != 2:
            raise AssertionError(
                f"disk at ({cx}, {cy}) meets the ring polygon in "
                f"{len(roots)} points; expected a single chord")
        g1, g2 = sorted(roots)
        # The covered arc is the one whose midpoint lies inside the disk.
        mid = point_at((g1 + g2) / 2)
        if math.hypot(mid[0] - cx, mid[1] - cy) <= r:
            intervals.append((g1, g2, (cx, cy, r)))
        else:
            intervals.append((g2, g1 + total, (cx, cy, r)))
    intervals.sort()
    for (a0, a1, d0), (b0, b1, d1) in zip(intervals, intervals[1:]):
        if b0 < a1 - 1e-12:
            raise AssertionError(f"ring disks {d0} and {d1} overlap the curve")
    if intervals and intervals[0][0] + total < intervals[-1][1] - 1e-12:
        raise AssertionError("wrap-around ring disks overlap the curve")

    pieces: List[Piece] = []

    def add_polygon_run(g_from: float, g_to: float):
        g = g_from
        while g < g_to - 1e-12:
            # Edge containing g (wrapped), split runs at polygon corners.
            gw = g % total
            k = 0
            while gw > cum[k + 1] - 1e-12 and k < k_edges - 1:
                k += 1
            edge_end = g - gw + cum[k + 1]
            nxt = min(g_to, edge_end)
            p0 = point_at(g)
            p1 = point_at(nxt)
            if math.hypot(p1[0] - p0[0], p1[1] - p0[1]) > 1e-12:
                pieces.append(Piece("seg", DIAMOND, p0, p1, edge_normal(k)))
            g = nxt

    def add_arc(disk, a_pt, b_pt):
        cx, cy, r = disk
        a0 = math.atan2(a_pt[1] - cy, a_pt[0] - cx)
        a1 = math.atan2(b_pt[1] - cy, b_pt[0] - cx)
        while a1 <= a0:
            a1 += 2 * math.pi
        pieces.append(Piece("arc", BOUNDARY, a_pt, b_pt, None,
                            center=(cx, cy), radius=r, a0=a0, a1=a1))

    if not intervals:
        add_polygon_run(0.0, total)
    else:
        prev_hi = None
        first_lo = intervals[0][0]
        for idx, (g_lo, g_hi, disk) in enumerate(intervals):
            if idx > 0:
                add_polygon_run(prev_hi, g_lo)
            add_arc(disk, point_at(g_lo), point_at(g_hi))
            prev_hi = g_hi
        add_polygon_run(prev_hi, first_lo + total)

    lengths = [pc.length() for pc in pieces]
    cums = [0.0]
    for l in lengths:
        cums.append(cums[-1] + l)
    return SectionCurve(n, tuple(pieces), cums[-1], tuple(cums[:-1]))


# ---------------------------------------------------------------------------
# Horizon probing


@dataclass(frozen=True)
class HorizonReport:
    n_lines: int
    probe_len: float
    max_gap: float
    n_unbounded_suspects: int
    unbounded_suspects: Tuple[dict, ...]
    min_obstacle_separation: float
    seed: int

    def record(self) -> dict:
        return {"n_lines": self.n_lines, "probe_len": self.probe_len,
                "max_gap": self.max_gap,
                "n_unbounded": self.n_unbounded_suspects,
                "unbounded_suspects": list(self.unbounded_suspects),
                "min_separation": self.min_obstacle_separation,
                "seed": self.seed}


def _fundamental_point(table: Table, rng: random.Random) -> Tuple[float, float]:
    u, v = rng.random(), rng.random()
    if table.lattice == SQUARE:
        return (u, v)
    return (u + 0.5 * v, v * TRI_ROW_HEIGHT)


def min_obstacle_separation(table: Table, window: int = 3) -> float:
    """Smallest boundary-to-boundary distance between distinct obstacles in
    a validation window around the origin; coincident disks count as one."""
    eng = FloatEngine(table)
    disks = {}
    if table.lattice == SQUARE:
        sites = [(i, j) for i in range(-window, window + 1)
                 for j in range(-window, window + 1)]
    else:
        sites = [(i, j) for i in range(-window, window + 1)
                 for j in range(-window, window + 1)
                 if max(abs(i), abs(j), abs(i + j)) <= window]
    for site in sites:
        for shape in eng._site_shapes(site):
            key = (round(shape[1], 12), round(shape[2], 12), round(shape[3], 12))
            disks[key] = (shape[1], shape[2], shape[3])
    ds = list(disks.values())
    best = math.inf
    for a in range(len(ds)):
        for b in range(a + 1, len(ds)):
            d = math.hypot(ds[a][0] - ds[b][0], ds[a][1] - ds[b][1]) \
                - ds[a][2] - ds[b][2]
            best = min(best, d)
    return best


def horizon_probe(table: Table, n_lines: int, probe_len: float,
                  seed: int) -> HorizonReport:
    """Cast random lines and measure gaps between consecutive obstacle
    crossings within the probe length.

    A line with fewer than two obstacle crossings is an unbounded suspect.
    The classification is empirical: a finite probe cannot certify an
    unbounded gap.
    """
    if probe_len <= 0:
        raise ValueError("probe_len must be positive")
    eng = FloatEngine(table)
    max_gap = 0.0
    n_unbounded = 0
    suspects: List[dict] = []
    for k in range(n_lines):
        rng = random.Random(sample_seed(seed, k))
        base = _fundamental_point(table, rng)
        angle = rng.random() * 2.0 * math.pi
        d = (math.cos(angle), math.sin(angle))
        start = (base[0] - 0.5 * probe_len * d[0],
                 base[1] - 0.5 * probe_len * d[1])
        intervals = _line_disk_intervals(eng, start, d, probe_len)
        if len(intervals) < 2:
            n_unbounded += 1
            if len(suspects) < 32:
                suspects.append({"point": [base[0], base[1]], "angle": angle,
                                 "crossings": len(intervals)})
            max_gap = max(max_gap, probe_len)
            continue
        for (a0, a1), (b0, b1) in zip(intervals, intervals[1:]):
            max_gap = max(max_gap, max(0.0, b0 - a1))
    return HorizonReport(n_lines, probe_len, max_gap, n_unbounded,
                         tuple(suspects), min_obstacle_separation(table), seed)


def _line_disk_intervals(eng: FloatEngine, start, d, length):
    """Sorted merged (t_in, t_out) crossing intervals along the segment."""
    from .flow import traverse_cells
    cells = traverse_cells(start, d, length)
    seen = set()
    intervals = []
    for cell in cells:
        for shape in eng.shapes_for_cell(cell):
            key = (round(shape[1], 12), round(shape[2], 12), round(shape[3], 12))
            if key in seen:
                continue
            seen.add(key)
            cx, cy, r = shape[1], shape[2], shape[3]
            fx, fy = start[0] - cx, start[1] - cy
            qb = fx * d[0] + fy * d[1]
            qc = fx * fx + fy * fy - r * r
            disc = qb * qb - qc
            if disc <= 0:
                continue
            sq = math.sqrt(disc)
            t0, t1 = -qb - sq, -qb + sq
            if t1 < 0 or t0 > length:
                continue
            intervals.append((max(t0, 0.0), min(t1, length)))
    intervals.sort()
    return intervals


def lorentz_recurrence(table: Table, n_ring: int, m_outer: int,
                       n_samples: int, seed: int,
                       budget: Optional[Budget] = None,
                       threads: int = 1) -> FractionEstimate:
    """Return-fraction estimate for disk tables; same contract as the
    rectangle estimator, float engine only."""
    return recurrence_fraction(table, n_ring, m_outer, n_samples, seed,
                               budget=budget, engine="float", threads=threads)
