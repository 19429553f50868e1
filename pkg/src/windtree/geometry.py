"""Ray/obstacle intersection and specular reflection primitives.

All functions are pure and work on plain scalar pairs.  They accept either
floats or ``fractions.Fraction`` values; with Fraction inputs every
intersection is computed exactly (disk intersections are the exception and
are float-only, since the roots are algebraic).

Conventions: obstacles are closed sets, trajectories live in the complement
of their open interiors and reflect at the boundary.  A ray origin may lie
on an obstacle boundary; a hit at time 0 is returned only when the ray
points into the obstacle (the caller reflects in place).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Tuple

# Float-engine tolerances, lattice units.  Singular sets have measure zero,
# so a tight cutoff only discards a negligible fraction of samples.
CORNER_TOL = 1e-12
TANGENT_TOL = 1e-12

REGULAR = "regular"
CORNER = "corner"
TANGENT = "tangent"

Scalar = object  # float or Fraction
Vec = Tuple[Scalar, Scalar]


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle: center plus half-extents (half_w, half_h)."""

    cx: Scalar
    cy: Scalar
    half_w: Scalar
    half_h: Scalar

    def bounds(self):
        return (self.cx - self.half_w, self.cy - self.half_h,
                self.cx + self.half_w, self.cy + self.half_h)


@dataclass(frozen=True)
class Disk:
    cx: float
    cy: float
    radius: float


@dataclass(frozen=True)
class Hit:
    """First boundary contact of a ray: flight parameter, point, outward normal.

    ``time`` is the ray parameter t (equal to arc length when the direction
    is unit).  ``kind`` flags singular contacts: ``corner`` for rectangle
    vertices, ``tangent`` for grazing disk contacts.
    """

    time: Scalar
    point: Vec
    normal: Vec
    kind: str = REGULAR


def dot(a: Vec, b: Vec):
    return a[0] * b[0] + a[1] * b[1]


def reflect_rect(direction: Vec, normal: Vec) -> Vec:
    """Specular reflection off an axis-aligned side: flip one component.

    ``normal`` must be axis-aligned with direction entering (dir.normal < 0).
    """
    nx, ny = normal
    if nx != 0 and ny != 0:
        raise ValueError("corner normal: reflection undefined")
    if dot(direction, normal) >= 0:
        raise ValueError("direction does not enter the side")
    dxv, dyv = direction
    if nx != 0:
        return (-dxv, dyv)
    return (dxv, -dyv)


def reflect_disk(direction: Vec, normal: Vec) -> Vec:
    """Reflect across a unit normal: d - 2 (d.n) n."""
    d = dot(direction, normal)
    if d >= 0:
        raise ValueError("direction does not enter the disk")
    return (direction[0] - 2 * d * normal[0], direction[1] - 2 * d * normal[1])


def _is_exact(*values) -> bool:
    return all(isinstance(v, (Fraction, int)) for v in values)


def ray_rect_intersection(origin: Vec, direction: Vec, rect: Rect,
                          corner_tol: float = CORNER_TOL) -> Optional[Hit]:
    """First contact of the ray origin + t*direction, t >= 0, with the rectangle.

    Returns None when the ray misses or only leaves the rectangle.  The hit
    carries the outward normal of the struck side; a vertex contact (exact
    for Fraction inputs, within ``corner_tol`` otherwise) is kind=corner.
    A ray starting on the boundary and pointing inward yields a time-0 hit.
    """
    ox, oy = origin
    dxv, dyv = direction
    lo_x, lo_y, hi_x, hi_y = rect.bounds()
    exact = _is_exact(ox, oy, dxv, dyv, lo_x, lo_y, hi_x, hi_y)

    # Slab intervals [t_enter, t_exit] per axis; None bounds mean +/-inf.
    # on_x / on_y flag rays running along a slab boundary line (grazing).
    if dxv > 0:
        tx0, tx1 = (lo_x - ox) / dxv, (hi_x - ox) / dxv
    elif dxv < 0:
        tx0, tx1 = (hi_x - ox) / dxv, (lo_x - ox) / dxv
    else:
        if ox < lo_x or ox > hi_x:
            return None
        tx0 = tx1 = None
    if dyv > 0:
        ty0, ty1 = (lo_y - oy) / dyv, (hi_y - oy) / dyv
    elif dyv < 0:
        ty0, ty1 = (hi_y - oy) / dyv, (lo_y - oy) / dyv
    else:
        if oy < lo_y or oy > hi_y:
            return None
        ty0 = ty1 = None

    if tx0 is None and ty0 is None:
        return None  # degenerate zero direction
    if tx0 is None:
        t_enter, t_exit, axis = ty0, ty1, "y"
    elif ty0 is None:
        t_enter, t_exit, axis = tx0, tx1, "x"
    else:
        if tx0 >= ty0:
            t_enter, axis = tx0, "x"
        else:
            t_enter, axis = ty0, "y"
        t_exit = tx1 if tx1 <= ty1 else ty1

    if t_enter > t_exit or t_exit < 0:
        return None

    # Grazing along a slab boundary (dx == 0 with x on a side line, or the
    # symmetric case): the ray runs along the side's supporting line.
    grazing = (dxv == 0 and (ox == lo_x or ox == hi_x)) or \
              (dyv == 0 and (oy == lo_y or oy == hi_y))

    if t_enter < 0:
        # Origin strictly outside the open rectangle, yet both slabs straddle
        # zero: the origin sits on a side and slides along it.  Report the
        # contact as a corner-kind hit at time 0 so callers flag it singular.
        if not grazing:
            return None
        normal = (1 if ox == hi_x else -1, 0) if dxv == 0 else \
                 (0, 1 if oy == hi_y else -1)
        return Hit(time=0 * t_exit, point=(ox, oy), normal=normal, kind=CORNER)

    # The entering coordinate lies exactly on the struck side; snapping it
    # (instead of reconstructing origin + t*direction) keeps float collision
    # points exactly on the boundary line, like the exact engine's.
    if axis == "x":
        px = lo_x if dxv > 0 else hi_x
        py = oy + t_enter * dyv
        normal = (-1, 0) if dxv > 0 else (1, 0)
    else:
        px = ox + t_enter * dxv
        py = lo_y if dyv > 0 else hi_y
        normal = (0, -1) if dyv > 0 else (0, 1)

    if exact:
        at_corner = (px == lo_x or px == hi_x) and (py == lo_y or py == hi_y)
    else:
        at_corner = (min(abs(px - lo_x), abs(px - hi_x)) < corner_tol and
                     min(abs(py - lo_y), abs(py - hi_y)) < corner_tol)
    kind = CORNER if (at_corner or grazing) else REGULAR

    if t_enter == 0 and dot(direction, normal) >= 0:
        return None  # on the boundary, pointing away
    return Hit(time=t_enter, point=(px, py), normal=normal, kind=kind)


def ray_disk_intersection(origin: Vec, direction: Vec, disk: Disk,
                          tangent_tol: float = TANGENT_TOL) -> Optional[Hit]:
    """First contact with a disk boundary; float arithmetic only.

    The direction must be unit length.  Grazing contacts (perpendicular
    distance within ``tangent_tol`` of the radius) are kind=tangent.
    """
    ox = origin[0] - disk.cx
    oy = origin[1] - disk.cy
    dxv, dyv = direction
    # |o + t d|^2 = r^2 with |d| = 1.
    b = ox * dxv + oy * dyv
    c = ox * ox + oy * oy - disk.radius * disk.radius
    disc = b * b - c
    if disc < 0:
        return None
    sq = math.sqrt(disc)
    t = -b - sq
    if t < 0:
        if c < 0 or (c == 0 and b < 0):
            t = 0.0  # on or inside the boundary, pointing inward
        else:
            return None
    px = origin[0] + t * dxv
    py = origin[1] + t * dyv
    inv_r = 1.0 / disk.radius
    normal = ((px - disk.cx) * inv_r, (py - disk.cy) * inv_r)
    # Perpendicular distance of the full line from the center.
    h = abs(ox * dyv - oy * dxv)
    kind = TANGENT if abs(h - disk.radius) < tangent_tol else REGULAR
    if t == 0 and dot(direction, normal) >= 0:
        return None
    return Hit(time=t, point=(px, py), normal=normal, kind=kind)
