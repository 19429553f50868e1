"""Event-driven propagation of the billiard flow on an infinite table.

Broad phase walks the unit-cell grid along the ray (cells are centered on
lattice sites, cell(i,j) = [i-1/2, i+1/2] x [j-1/2, j+1/2]); narrow phase
intersects the obstacles overlapping each traversed cell.  Two engines:

* FloatEngine: float positions and directions, any obstacle kind, any
  lattice.  Positions are recomputed from the last collision point, so error
  grows per collision, not per grid step.
* ExactEngine: square-lattice rectangle tables with rational data only.
  State is scaled to integers (all collision coordinates of a rational-slope
  orbit on a rational table lie on a fixed lattice), so state comparison is
  exact integer equality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, List, Optional, Tuple

from .geometry import (REGULAR, Disk, Rect, ray_disk_intersection,
                       ray_rect_intersection, reflect_disk, reflect_rect)
from .table import SQUARE, TRI_ROW_HEIGHT, Table, TableError

Site = Tuple[int, int]

COLLISION = "collision"
CELL = "cell"
SINGULAR = "singular"

STOPPED = "stopped"
BUDGET = "budget"
SINGULAR_STATUS = "singular"


@dataclass(frozen=True)
class Budget:
    """Finite truncation of the non-compact dynamics; all caps positive."""

    max_collisions: int = 10 ** 6
    max_path_length: float = 10.0 ** 6
    max_radius: float = 10.0 ** 3


@dataclass(frozen=True)
class PhasePoint:
    """Position plus direction.  Floats in the float engine; Fractions with a
    primitive integer direction vector in the exact engine."""

    x: object
    y: object
    dx: object
    dy: object

    def reversed(self) -> "PhasePoint":
        return PhasePoint(self.x, self.y, -self.dx, -self.dy)


@dataclass(frozen=True)
class Event:
    kind: str
    time: float
    point: Tuple[float, float]
    site: Optional[Site] = None
    normal: Optional[Tuple[float, float]] = None
    reason: str = ""


@dataclass
class FlowResult:
    events: List[Event]
    final: PhasePoint
    status: str
    n_collisions: int
    path_length: float
    path_param: Optional[Fraction] = None  # exact engine: length = param*|dir|


# ---------------------------------------------------------------------------
# Public broad-phase operation


def _half(v):
    return Fraction(1, 2) if isinstance(v, (int, Fraction)) else 0.5


def _cells_at(x, y) -> List[Site]:
    # Cells whose closed box contains (x, y): 1, 2 on an edge, 4 on a corner.
    hx, hy = _half(x), _half(y)
    xi_lo, xi_hi = math.ceil(x - hx), math.floor(x + hx)
    yi_lo, yi_hi = math.ceil(y - hy), math.floor(y + hy)
    return [(i, j) for i in range(xi_lo, xi_hi + 1) for j in range(yi_lo, yi_hi + 1)]


def traverse_cells(origin, direction, max_len) -> List[Site]:
    """All cells whose closed box the segment meets, ordered by entry.

    The segment runs from ``origin`` for ``max_len`` length units along
    ``direction`` (unit float vector, or an integer vector whose length
    rescales the parameter).  Grid-line coincidences include both adjacent
    cells; entry ties are broken by site index.
    """
    if max_len <= 0:
        raise ValueError("max_len must be positive")
    ox, oy = origin
    dxv, dyv = direction
    exact = all(isinstance(v, (int, Fraction)) for v in (ox, oy, dxv, dyv))
    dd = dxv * dxv + dyv * dyv
    if dd == 0:
        raise ValueError("zero direction")

    def within(t) -> bool:
        return t * t * dd <= max_len * max_len

    # Instants carry the exactly-known boundary coordinate of their axis so
    # recomputing the point in float cannot drift off the grid line.
    instants = [(0 if exact else 0.0, None, None)]

    def axis_instants(o, d, is_x):
        out = []
        if d == 0:
            return out
        half = _half(o)
        if d > 0:
            k = math.floor(o + half)
            while True:
                b = k + half
                t = (b - o) / d
                if not within(t):
                    break
                out.append((t, b, None) if is_x else (t, None, b))
                k += 1
        else:
            k = math.ceil(o - half)
            while True:
                b = k - half
                t = (b - o) / d
                if not within(t):
                    break
                out.append((t, b, None) if is_x else (t, None, b))
                k -= 1
        return out

    instants.extend(axis_instants(ox, dxv, True))
    instants.extend(axis_instants(oy, dyv, False))
    # Endpoint instant, when exactly representable (always for floats; for
    # integer directions only when |direction| is an integer).
    if exact:
        r = math.isqrt(int(dd))
        if r * r == dd:
            instants.append((Fraction(max_len, r), None, None))
    else:
        instants.append((max_len / math.sqrt(dd), None, None))
    instants.sort(key=lambda inst: inst[0])

    first_seen = {}
    idx = -1
    prev_t = None
    for t, bx, by in instants:
        if t != prev_t:
            idx += 1
            prev_t = t
        px = bx if bx is not None else ox + t * dxv
        py = by if by is not None else oy + t * dyv
        for cell in _cells_at(px, py):
            if cell not in first_seen or first_seen[cell][0] > idx:
                first_seen[cell] = (idx, cell)
    return [c for _, c in sorted(first_seen.values())]


# ---------------------------------------------------------------------------
# Float engine


class FloatEngine:
    """Collision stepper with float arithmetic; works for every table."""

    def __init__(self, table: Table):
        self.table = table
        self._shape_cache = {}
        self._reach = table.max_reach()
        if table.lattice == SQUARE:
            extra = max(0, math.ceil(self._reach - 0.5 + 1e-9))
            self._offsets = [(di, dj)
                             for di in range(-extra, extra + 1)
                             for dj in range(-extra, extra + 1)]

    def _site_shapes(self, site: Site):
        spec = self.table.spec_at(site)
        if spec.is_empty:
            return ()
        px, py = self.table.site_position(site)
        if spec.kind == "rect":
            hw = float(spec.dims[0]) / 2.0
            hh = float(spec.dims[1]) / 2.0
            return (("rect", px - hw, py - hh, px + hw, py + hh, site),)
        if spec.kind == "disk":
            return (("disk", px, py, spec.radius, site),)
        shapes = [("disk", px, py, spec.center_radius, site)]
        for sx in (-0.5, 0.5):
            for sy in (-0.5, 0.5):
                shapes.append(("disk", px + sx, py + sy, spec.corner_radius, site))
        return tuple(shapes)

    def shapes_for_cell(self, cell: Site):
        cached = self._shape_cache.get(cell)
        if cached is not None:
            return cached
        i, j = cell
        if self.table.lattice == SQUARE:
            shapes = []
            for di, dj in self._offsets:
                shapes.extend(self._site_shapes((i + di, j + dj)))
        else:
            # Triangular sites whose obstacle could overlap the cell box.
            r = self._reach
            shapes = []
            j_lo = math.ceil((j - 0.5 - r) / TRI_ROW_HEIGHT)
            j_hi = math.floor((j + 0.5 + r) / TRI_ROW_HEIGHT)
            for sj in range(j_lo, j_hi + 1):
                x_lo = i - 0.5 - r - 0.5 * sj
                x_hi = i + 0.5 + r - 0.5 * sj
                for si in range(math.ceil(x_lo), math.floor(x_hi) + 1):
                    shapes.extend(self._site_shapes((si, sj)))
        shapes = tuple(shapes)
        self._shape_cache[cell] = shapes
        return shapes

    def collide(self, x: float, y: float, dxv: float, dyv: float,
                max_t: float, radius_cap: float,
                cells_out: Optional[list] = None):
        """Walk cells from (x, y) until the first obstacle contact.

        Returns one of
          ('hit', Hit, site, shape_kind)
          ('cap', max_t, px, py)        flight length budget exhausted
          ('radius', t, px, py)         walk entered a cell beyond the cap
        ``cells_out`` collects (i, j, t_enter) tuples for every cell walked.
        """
        if dxv > 0:
            i = math.floor(x + 0.5)
            t_x = (i + 0.5 - x) / dxv
            dt_x, step_x = 1.0 / dxv, 1
        elif dxv < 0:
            i = math.ceil(x - 0.5)
            t_x = (i - 0.5 - x) / dxv
            dt_x, step_x = -1.0 / dxv, -1
        else:
            i = math.floor(x + 0.5)
            t_x, dt_x, step_x = math.inf, math.inf, 0
        if dyv > 0:
            j = math.floor(y + 0.5)
            t_y = (j + 0.5 - y) / dyv
            dt_y, step_y = 1.0 / dyv, 1
        elif dyv < 0:
            j = math.ceil(y - 0.5)
            t_y = (j - 0.5 - y) / dyv
            dt_y, step_y = -1.0 / dyv, -1
        else:
            j = math.floor(y + 0.5)
            t_y, dt_y, step_y = math.inf, math.inf, 0

        best = None  # (Hit, site, kind)
        tested = set()
        t_enter = 0.0
        origin = (x, y)
        direction = (dxv, dyv)
        shapes_for_cell = self.shapes_for_cell
        while True:
            if abs(i) + abs(j) > radius_cap:
                return ("radius", t_enter, x + t_enter * dxv, y + t_enter * dyv)
            if cells_out is not None:
                cells_out.append((i, j, t_enter))
            for shape in shapes_for_cell((i, j)):
                key = (shape[1], shape[2]) if shape[0] == "disk" else shape[-1]
                if key in tested:
                    continue
                tested.add(key)
                if shape[0] == "rect":
                    hit = ray_rect_intersection(
                        origin, direction,
                        Rect((shape[1] + shape[3]) / 2, (shape[2] + shape[4]) / 2,
                             (shape[3] - shape[1]) / 2, (shape[4] - shape[2]) / 2))
                else:
                    hit = ray_disk_intersection(
                        origin, direction, Disk(shape[1], shape[2], shape[3]))
                if hit is not None and (best is None or hit.time < best[0].time):
                    best = (hit, shape[-1], shape[0])
            t_next = t_x if t_x < t_y else t_y
            if best is not None and best[0].time <= t_next:
                if best[0].time > max_t:
                    return ("cap", max_t, x + max_t * dxv, y + max_t * dyv)
                return ("hit",) + best
            if t_next > max_t:
                return ("cap", max_t, x + max_t * dxv, y + max_t * dyv)
            if t_x < t_y:
                i += step_x
                t_enter = t_x
                t_x += dt_x
            else:
                j += step_y
                t_enter = t_y
                t_y += dt_y


def _unit(dxv: float, dyv: float) -> Tuple[float, float]:
    n = math.hypot(dxv, dyv)
    return dxv / n, dyv / n


def _float_stream(table: Table, phase: PhasePoint, budget: Budget,
                  emit_cells: bool) -> Iterator[Tuple[Event, tuple]]:
    """Yield (event, state-after) pairs; state is (x, y, dx, dy) floats."""
    eng = FloatEngine(table)
    x, y = float(phase.x), float(phase.y)
    dxv, dyv = _unit(float(phase.dx), float(phase.dy))
    t_total = 0.0
    n_coll = 0
    while n_coll < budget.max_collisions and t_total < budget.max_path_length:
        cells: List[tuple] = [] if emit_cells else None
        res = eng.collide(x, y, dxv, dyv, budget.max_path_length - t_total,
                          budget.max_radius, cells_out=cells)
        if emit_cells:
            for (ci, cj, ct) in cells[1:]:
                t_at = t_total + ct
                pt = (x + ct * dxv, y + ct * dyv)
                yield Event(CELL, t_at, pt, site=(ci, cj)), (pt[0], pt[1], dxv, dyv)
        if res[0] == "hit":
            _, hit, site, shape_kind = res
            t_total += hit.time
            x, y = hit.point
            if hit.kind != REGULAR:
                yield (Event(SINGULAR, t_total, (x, y), site=site, reason=hit.kind),
                       (x, y, dxv, dyv))
                return
            if shape_kind == "rect":
                dxv, dyv = reflect_rect((dxv, dyv), hit.normal)
            else:
                dxv, dyv = _unit(*reflect_disk((dxv, dyv), hit.normal))
            n_coll += 1
            yield (Event(COLLISION, t_total, (x, y), site=site, normal=hit.normal),
                   (x, y, dxv, dyv))
        else:
            _, t, px, py = res
            t_total += t
            reason = "radius" if res[0] == "radius" else "length"
            yield (Event(CELL, t_total, (px, py), reason=reason),
                   (px, py, dxv, dyv))
            return
    return


# ---------------------------------------------------------------------------
# Exact engine (square lattice, rational rectangles)


def primitive_direction(dxv: int, dyv: int) -> Tuple[int, int]:
    g = math.gcd(abs(dxv), abs(dyv))
    if g == 0:
        raise ValueError("zero direction")
    return dxv // g, dyv // g


class ExactEngine:
    """Integer-scaled exact stepper for rational rectangle tables.

    With primitive direction (p, q) on a table whose side coordinates have
    denominators dividing L, every collision coordinate of an orbit started
    at rational (x0, y0) lies on (1/D)Z with D = 2|p||q|lcm(L, den x0,
    den y0), so positions scale to plain integers.
    """

    def __init__(self, table: Table, start_x: Fraction, start_y: Fraction,
                 direction: Tuple[int, int]):
        if table.lattice != SQUARE or not table.is_rect_table():
            raise TableError("exact engine requires a square-lattice rectangle table")
        dxv, dyv = direction
        if not (isinstance(dxv, int) and isinstance(dyv, int)):
            raise TableError("exact engine needs an integer direction vector")
        self.table = table
        self.dx0, self.dy0 = primitive_direction(dxv, dyv)
        start_x = Fraction(start_x)
        start_y = Fraction(start_y)
        l = math.lcm(table.denominator_lcm(),
                     start_x.denominator, start_y.denominator)
        self.scale = 2 * max(abs(self.dx0), 1) * max(abs(self.dy0), 1) * l
        self.half = self.scale // 2
        self.x0 = int(start_x * self.scale)
        self.y0 = int(start_y * self.scale)
        self.norm = math.hypot(self.dx0, self.dy0)
        self._box_cache = {}

    def box_for_site(self, site: Site):
        box = self._box_cache.get(site)
        if box is None:
            spec = self.table.spec_at(site)
            if spec.is_empty:
                box = ()
            else:
                a, b = spec.dims
                off_x = (a.numerator * self.scale) // (2 * a.denominator)
                off_y = (b.numerator * self.scale) // (2 * b.denominator)
                i, j = site
                box = (i * self.scale - off_x, j * self.scale - off_y,
                       i * self.scale + off_x, j * self.scale + off_y)
            self._box_cache[site] = box
        return box

    def cell_index(self, v: int, d: int) -> int:
        # Cell whose interior the point is in / about to enter along d.
        q, r = divmod(v + self.half, self.scale)
        if r == 0 and d < 0:
            return q - 1
        return q

    def _ray_box(self, x: int, y: int, dxv: int, dyv: int, box):
        """Exact slab intersection.

        Returns None (miss), ('slide',) for a boundary slide, or
        (t_num, t_den, axis, grazing) for the entering contact.
        """
        lo_x, lo_y, hi_x, hi_y = box
        if dxv > 0:
            ax0, ax1, adn = lo_x - x, hi_x - x, dxv
        elif dxv < 0:
            ax0, ax1, adn = x - hi_x, x - lo_x, -dxv
        else:
            if x < lo_x or x > hi_x:
                return None
            ax0 = None
        if dyv > 0:
            ay0, ay1, ady = lo_y - y, hi_y - y, dyv
        elif dyv < 0:
            ay0, ay1, ady = y - hi_y, y - lo_y, -dyv
        else:
            if y < lo_y or y > hi_y:
                return None
            ay0 = None

        grazing = (dxv == 0 and (x == lo_x or x == hi_x)) or \
                  (dyv == 0 and (y == lo_y or y == hi_y))
        if ax0 is None and ay0 is None:
            return None
        if ax0 is None:
            t_num, t_den, axis = ay0, ady, "y"
            e_num, e_den = ay1, ady
        elif ay0 is None:
            t_num, t_den, axis = ax0, adn, "x"
            e_num, e_den = ax1, adn
        else:
            if ax0 * ady >= ay0 * adn:
                t_num, t_den, axis = ax0, adn, "x"
            else:
                t_num, t_den, axis = ay0, ady, "y"
            if ax1 * ady <= ay1 * adn:
                e_num, e_den = ax1, adn
            else:
                e_num, e_den = ay1, ady
        if t_num * e_den > e_num * t_den or e_num < 0:
            return None
        if t_num < 0:
            if e_num <= 0:
                return None  # touching at the start while leaving
            if not grazing:
                raise AssertionError("ray origin inside an obstacle")
            return ("slide",)
        return (t_num, t_den, axis, grazing)

    def step(self, x: int, y: int, dxv: int, dyv: int, radius_cap: float,
             max_param: Optional[Fraction] = None,
             cells_out: Optional[list] = None):
        """Advance one flight from scaled state (x, y) along (dxv, dyv).

        Returns one of
          ('hit', px, py, axis, corner, site)   integer hit coordinates
          ('singular', site)                     boundary slide
          ('radius', i, j, adv_num, adv_den)     cell beyond the radius cap
          ('cap',)                               flight parameter budget hit
        The flight parameter of a hit is (px - x)/dxv (or the y analogue),
        in scaled units; divide by ``scale`` for lattice units.
        """
        scale = self.scale
        half = self.half
        i = self.cell_index(x, dxv)
        j = self.cell_index(y, dyv)
        adv = (0, 1)  # parameter at which the current cell was entered
        while True:
            if abs(i) + abs(j) > radius_cap:
                return ("radius", i, j, adv[0], adv[1])
            if cells_out is not None:
                cells_out.append((i, j))
            box = self.box_for_site((i, j))
            if box:
                res = self._ray_box(x, y, dxv, dyv, box)
                if res is not None:
                    if res[0] == "slide":
                        return ("singular", (i, j))
                    t_num, t_den, axis, grazing = res
                    if max_param is not None and \
                            Fraction(t_num, t_den * scale) > max_param:
                        return ("cap",)
                    if grazing:
                        return ("singular", (i, j))
                    lo_x, lo_y, hi_x, hi_y = box
                    if axis == "x":
                        px = lo_x if dxv > 0 else hi_x
                        off, rem = divmod((px - x) * dyv, dxv)
                        if rem:
                            raise AssertionError("collision point off lattice")
                        py = y + off
                    else:
                        py = lo_y if dyv > 0 else hi_y
                        off, rem = divmod((py - y) * dxv, dyv)
                        if rem:
                            raise AssertionError("collision point off lattice")
                        px = x + off
                    entering = True
                    if t_num == 0:
                        nx = ((-1 if dxv > 0 else 1), 0) if axis == "x" else \
                            (0, (-1 if dyv > 0 else 1))
                        entering = dxv * nx[0] + dyv * nx[1] < 0
                    if entering:
                        corner = (px in (lo_x, hi_x)) and (py in (lo_y, hi_y))
                        return ("hit", px, py, axis, corner, (i, j))
            # Advance to the next cell boundary.
            if dxv > 0:
                nx_num, nx_den = (2 * i + 1) * half - x, dxv
            elif dxv < 0:
                nx_num, nx_den = x - (2 * i - 1) * half, -dxv
            else:
                nx_num = None
            if dyv > 0:
                ny_num, ny_den = (2 * j + 1) * half - y, dyv
            elif dyv < 0:
                ny_num, ny_den = y - (2 * j - 1) * half, -dyv
            else:
                ny_num = None
            if nx_num is None and ny_num is None:
                raise AssertionError("zero direction")
            if ny_num is None or (nx_num is not None and
                                  nx_num * ny_den <= ny_num * nx_den):
                adv = (nx_num, nx_den)
                i += 1 if dxv > 0 else -1
            else:
                adv = (ny_num, ny_den)
                j += 1 if dyv > 0 else -1
            if max_param is not None and \
                    Fraction(adv[0], adv[1] * scale) > max_param:
                return ("cap",)


def _exact_stream(table: Table, phase: PhasePoint,
                  budget: Budget) -> Iterator[Tuple[Event, tuple]]:
    """Yield (event, state-after); state is exact (x, y, dx, dy), positions
    Fractions.  Cell-crossing granularity is not emitted by this engine."""
    eng = ExactEngine(table, Fraction(phase.x), Fraction(phase.y),
                      (int(phase.dx), int(phase.dy)))
    x, y = eng.x0, eng.y0
    dxv, dyv = eng.dx0, eng.dy0
    scale = eng.scale
    param = Fraction(0)
    n_coll = 0
    max_param = Fraction(budget.max_path_length) / eng.norm
    while n_coll < budget.max_collisions:
        res = eng.step(x, y, dxv, dyv, budget.max_radius,
                       max_param=max_param - param)
        if res[0] == "hit":
            _, px, py, axis, corner, site = res
            param += Fraction(px - x, dxv * scale) if dxv else \
                Fraction(py - y, dyv * scale)
            x, y = px, py
            t = float(param * eng.norm)
            point = (px / scale, py / scale)
            if corner:
                yield (Event(SINGULAR, t, point, site=site, reason="corner"),
                       (Fraction(x, scale), Fraction(y, scale), dxv, dyv, param))
                return
            normal = ((-1 if dxv > 0 else 1), 0) if axis == "x" else \
                (0, (-1 if dyv > 0 else 1))
            if axis == "x":
                dxv = -dxv
            else:
                dyv = -dyv
            n_coll += 1
            yield (Event(COLLISION, t, point, site=site, normal=normal),
                   (Fraction(x, scale), Fraction(y, scale), dxv, dyv, param))
        elif res[0] == "singular":
            yield (Event(SINGULAR, float(param * eng.norm),
                         (x / scale, y / scale), site=res[1], reason="grazing"),
                   (Fraction(x, scale), Fraction(y, scale), dxv, dyv, param))
            return
        elif res[0] == "radius":
            _, ci, cj, a_num, a_den = res
            tau = Fraction(a_num, a_den * scale)
            param += tau
            fx = Fraction(x, scale) + tau * dxv
            fy = Fraction(y, scale) + tau * dyv
            yield (Event(CELL, float(param * eng.norm),
                         (float(fx), float(fy)), site=(ci, cj),
                         reason="radius"),
                   (fx, fy, dxv, dyv, param))
            return
        else:
            tau = max_param - param
            fx = Fraction(x, scale) + tau * dxv
            fy = Fraction(y, scale) + tau * dyv
            yield (Event(CELL, float(max_param * eng.norm),
                         (float(fx), float(fy)), reason="length"),
                   (fx, fy, dxv, dyv, max_param))
            return
    return


# ---------------------------------------------------------------------------
# Public flow operations


def iter_events(table: Table, phase: PhasePoint, budget: Budget,
                engine: str = "float") -> Iterator[Event]:
    """Stream events in time order without storing the trajectory."""
    if engine == "exact":
        stream = _exact_stream(table, phase, budget)
    else:
        stream = _float_stream(table, phase, budget, emit_cells=True)
    for ev, _state in stream:
        yield ev


def next_event(table: Table, phase: PhasePoint, budget: Budget,
               engine: str = "float") -> Optional[Event]:
    """First collision/singular/budget event of the flow from ``phase``."""
    if engine == "exact":
        stream = _exact_stream(table, phase, budget)
    else:
        stream = _float_stream(table, phase, budget, emit_cells=False)
    for ev, _state in stream:
        if ev.kind != CELL or ev.reason:
            return ev
    return None


def flow_until(table: Table, phase: PhasePoint, stop: Callable[[Event], bool],
               budget: Budget, engine: str = "float") -> FlowResult:
    """Run the flow until ``stop`` fires on an event, or budget/singularity.

    The final phase point sits at the last event's position (post-reflection
    for collisions).  Identical inputs reproduce identical results.
    """
    events: List[Event] = []
    status = BUDGET
    n_coll = 0
    final_state = None
    param = None
    if engine == "exact":
        stream = _exact_stream(table, phase, budget)
    else:
        stream = _float_stream(table, phase, budget, emit_cells=True)
    for ev, state in stream:
        events.append(ev)
        final_state = state
        if ev.kind == COLLISION:
            n_coll += 1
        elif ev.kind == SINGULAR:
            status = SINGULAR_STATUS
            break
        if stop(ev):
            status = STOPPED
            break
    if final_state is None:
        x, y, dxv, dyv = phase.x, phase.y, phase.dx, phase.dy
        t_final = 0.0
    elif engine == "exact":
        x, y, dxv, dyv, param = final_state
        t_final = events[-1].time
    else:
        x, y, dxv, dyv = final_state
        t_final = events[-1].time
    return FlowResult(events, PhasePoint(x, y, dxv, dyv), status, n_coll,
                      t_final, path_param=param)
