"""Exact periodic-orbit detection on square-tiled tables.

On a table whose rectangle dims all satisfy the odd/even parity condition,
an orbit with rational slope confined to a bounded region passes through
finitely many exact states (collision point + outgoing direction), so it is
periodic iff a state repeats, and the integer-scaled engine detects the
repetition by exact equality.  No floating-point value enters a state
comparison.
"""

from __future__ import annotations

import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from .flow import Budget, ExactEngine
from .section import OUTER, SectionCurve, build_ring_curve, sample_at_index
from .table import (AnnulusPatched, EMPTY, SQUARE, Table, TableError,
                    rect_spec, sample_seed, tiling_denominator)

PERIODIC = "periodic"
ESCAPED = "escaped"
BUDGET = "budget"
SINGULAR = "singular"


@dataclass(frozen=True)
class OrbitResult:
    status: str
    period_length: float = 0.0
    period_param: Optional[Fraction] = None  # length = param * |direction|
    period_collisions: int = 0
    n_states: int = 0

    def record(self) -> dict:
        out = {"status": self.status, "states": self.n_states}
        if self.status == PERIODIC:
            out["period_length"] = self.period_length
            out["collisions"] = self.period_collisions
        return out


@dataclass(frozen=True)
class DirectionReport:
    slope: Tuple[int, int]          # (p, q): slope p/q, direction (q, p)
    n_samples: int
    n_periodic: int
    n_escaped: int
    n_budget: int
    n_singular: int
    witnesses: Tuple[dict, ...]

    @property
    def fraction(self) -> float:
        return self.n_periodic / self.n_samples if self.n_samples else 0.0

    def record(self) -> dict:
        return {"slope": f"{self.slope[0]}/{self.slope[1]}",
                "samples": self.n_samples, "periodic": self.n_periodic,
                "escaped": self.n_escaped, "budget": self.n_budget,
                "singular": self.n_singular, "fraction": self.fraction,
                "witnesses": list(self.witnesses)}


def require_square_tiled(table: Table) -> int:
    """Validate the table family and return the tiling denominator."""
    if table.lattice != SQUARE or not table.is_rect_table():
        raise TableError("square-tiled tables have square-lattice rectangles")
    return tiling_denominator(table.family())


def exact_orbit(table: Table, start_x: Fraction, start_y: Fraction,
                direction: Tuple[int, int], bound: int,
                budget: Budget) -> OrbitResult:
    """Run the exact flow until a state repeats, the orbit leaves the
    |i|+|j| <= bound region, a corner is hit, or the budget runs out.

    An exact repetition of (collision point, outgoing direction) certifies
    periodicity; the first repetition closes the cycle because the dynamics
    is invertible.
    """
    require_square_tiled(table)
    eng = ExactEngine(table, Fraction(start_x), Fraction(start_y), direction)
    x, y = eng.x0, eng.y0
    dxv, dyv = eng.dx0, eng.dy0
    scale = eng.scale
    param = Fraction(0)
    seen: Dict[tuple, Tuple[int, Fraction]] = {}
    n_coll = 0
    while n_coll < budget.max_collisions:
        res = eng.step(x, y, dxv, dyv, bound)
        if res[0] == "radius":
            return OrbitResult(ESCAPED, n_states=len(seen))
        if res[0] == "singular":
            return OrbitResult(SINGULAR, n_states=len(seen))
        if res[0] == "cap":
            return OrbitResult(BUDGET, n_states=len(seen))
        _, px, py, axis, corner, _site = res
        if corner:
            return OrbitResult(SINGULAR, n_states=len(seen))
        param += Fraction(px - x, dxv * scale) if dxv else \
            Fraction(py - y, dyv * scale)
        x, y = px, py
        if axis == "x":
            dxv = -dxv
        else:
            dyv = -dyv
        n_coll += 1
        state = (x, y, dxv, dyv)
        prev = seen.get(state)
        if prev is not None:
            period_param = param - prev[1]
            return OrbitResult(PERIODIC,
                               period_length=float(period_param * eng.norm),
                               period_param=period_param,
                               period_collisions=n_coll - prev[0],
                               n_states=len(seen))
        seen[state] = (n_coll, param)
    return OrbitResult(BUDGET, n_states=len(seen))


def _reduced_slope(p: int, q: int) -> Tuple[int, int]:
    g = math.gcd(p, q)
    return (p // g, q // g) if g else (p, q)


def _draw_start(table: Table, rng: random.Random, bound: int,
                denom: int) -> Tuple[Fraction, Fraction]:
    """Rational start inside the |x|+|y| < bound region, strictly outside
    every obstacle."""
    lim = bound * denom
    while True:
        x = Fraction(rng.randrange(-lim, lim + 1), denom)
        y = Fraction(rng.randrange(-lim, lim + 1), denom)
        if abs(x) + abs(y) >= bound:
            continue
        i, j = round(x), round(y)
        clear = True
        for si in (i - 1, i, i + 1):
            for sj in (j - 1, j, j + 1):
                spec = table.spec_at((si, sj))
                if spec.is_empty:
                    continue
                hw, hh = spec.dims[0] / 2, spec.dims[1] / 2
                if abs(x - si) <= hw and abs(y - sj) <= hh:
                    clear = False
        if clear:
            return x, y


def check_direction_periodicity(table: Table, slope: Tuple[int, int],
                                n_samples: int, bound: int, seed: int,
                                budget: Budget,
                                max_witnesses: int = 5) -> DirectionReport:
    """Periodic fraction over random rational starts flowed in the given
    slope direction.

    Singular runs are discarded and replaced by further indexed draws; they
    are reported separately.  Start denominators are capped at 64 times the
    tiling denominator to keep the exact arithmetic small.
    """
    q_tile = require_square_tiled(table)
    p, q = slope
    if q <= 0 or p < 0:
        raise ValueError("slope must be p/q with q >= 1, p >= 0")
    p, q = _reduced_slope(p, q)
    direction = (q, p)
    denom = 64 * q_tile
    # A periodic loop can extend well past the region its start point lies
    # in; escape therefore fires on a much larger ring than the start ball.
    escape_bound = max(4 * bound, bound + 64)
    counts = {PERIODIC: 0, ESCAPED: 0, BUDGET: 0, SINGULAR: 0}
    witnesses: List[dict] = []
    needed = n_samples
    index = 0
    while needed > 0:
        rng = random.Random(sample_seed(seed, index))
        index += 1
        if index > 50 * n_samples:
            break  # degenerate input: report what we have
        x, y = _draw_start(table, rng, bound, denom)
        res = exact_orbit(table, x, y, direction, escape_bound, budget)
        counts[res.status] += 1
        if res.status == SINGULAR:
            continue
        needed -= 1
        if res.status == PERIODIC and len(witnesses) < max_witnesses:
            witnesses.append({"start": [str(x), str(y)],
                              "period_length": res.period_length,
                              "collisions": res.period_collisions})
    n_valid = n_samples - needed
    return DirectionReport(slope=(p, q), n_samples=n_valid,
                           n_periodic=counts[PERIODIC],
                           n_escaped=counts[ESCAPED],
                           n_budget=counts[BUDGET],
                           n_singular=counts[SINGULAR],
                           witnesses=tuple(witnesses))


def _scan_worker(args):
    table, slope, n_samples, bound, seed, budget = args
    return check_direction_periodicity(table, slope, n_samples, bound,
                                       sample_seed(seed, slope[0] * 1000 + slope[1]),
                                       budget)


def scan_periodic_directions(table: Table, max_q: int, n_samples: int,
                             bound: int, seed: int, budget: Budget,
                             threads: int = 1) -> List[DirectionReport]:
    """Check every reduced slope p/q with 0 <= p <= q <= max_q; slopes are
    returned sorted by periodic fraction, descending."""
    require_square_tiled(table)
    slopes = []
    for q in range(1, max_q + 1):
        for p in range(0, q + 1):
            if math.gcd(p, q) == 1:
                slopes.append((p, q))
    args = [(table, s, n_samples, bound, seed, budget) for s in slopes]
    if threads <= 1:
        reports = [_scan_worker(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            reports = list(ex.map(_scan_worker, args))
    reports.sort(key=lambda r: (-r.fraction, r.slope))
    return reports


# ---------------------------------------------------------------------------
# Annulus periodicity experiment


@dataclass(frozen=True)
class AnnulusExperiment:
    table: Table
    curve: SectionCurve
    mid_ring: int
    inner: int
    outer: int


def make_annulus_experiment(dims: Tuple[Fraction, Fraction], mid_ring: int,
                            margin: int) -> AnnulusExperiment:
    """Table empty except for an annulus of full-occupancy dims around the
    mid ring, plus the section curve on that ring.

    Inside the annulus the table agrees with the full-occupancy reference;
    the hole and the exterior are empty, so any orbit certification there
    comes from the annulus alone.
    """
    if margin < 1 or mid_ring - margin < 1:
        raise ValueError("need 1 <= margin < mid_ring")
    inner = mid_ring - margin
    outer = mid_ring + margin
    base = rect_spec(*dims)
    table = Table(SQUARE, AnnulusPatched(base, ((inner, outer),),
                                         patch={}, default=EMPTY))
    curve = build_ring_curve(table, mid_ring)
    return AnnulusExperiment(table, curve, mid_ring, inner, outer)


def annulus_periodicity(exp: AnnulusExperiment, slope: Tuple[int, int],
                        n_samples: int, seed: int,
                        budget: Budget) -> DirectionReport:
    """Flow exact orbits from points of the mid-ring curve in one rational
    direction; on a wide enough annulus every regular orbit is periodic."""
    p, q = _reduced_slope(*slope)
    direction = (q, p)
    counts = {PERIODIC: 0, ESCAPED: 0, BUDGET: 0, SINGULAR: 0}
    witnesses: List[dict] = []
    needed = n_samples
    index = 0
    while needed > 0:
        sp = sample_at_index(exp.curve, OUTER, seed, index, exact=True)
        index += 1
        if index > 50 * n_samples:
            break
        x, y = Fraction(sp.point[0]), Fraction(sp.point[1])
        res = exact_orbit(exp.table, x, y, direction, exp.outer + 2, budget)
        counts[res.status] += 1
        if res.status == SINGULAR:
            continue
        needed -= 1
        if res.status == PERIODIC and len(witnesses) < 5:
            witnesses.append({"start": [str(x), str(y)],
                              "period_length": res.period_length,
                              "collisions": res.period_collisions})
    n_valid = n_samples - needed
    return DirectionReport(slope=(p, q), n_samples=n_valid,
                           n_periodic=counts[PERIODIC],
                           n_escaped=counts[ESCAPED],
                           n_budget=counts[BUDGET],
                           n_singular=counts[SINGULAR],
                           witnesses=tuple(witnesses))
