"""Infinite lattice obstacle configurations.

A table assigns an obstacle spec to every lattice site through a generator
that is deterministic given its parameters, so arbitrary sites of an
infinite table can be evaluated lazily and in any order.  Rectangle
dimensions are exact rationals throughout; no float round-trip happens on
the way from a config file to the engine.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

SQUARE = "square"
TRIANGULAR = "triangular"

Site = Tuple[int, int]

# Triangular lattice basis: site (i, j) -> (i + j/2, j*sqrt(3)/2), unit spacing.
TRI_ROW_HEIGHT = math.sqrt(3.0) / 2.0


class TableError(ValueError):
    """Invalid obstacle family or table configuration."""


@dataclass(frozen=True)
class ObstacleSpec:
    """Scatterer at one lattice site.

    kind 'empty' encodes dimension (0,0), a site without obstacle.
    kind 'rect' has exact rational dims (a, b) in (0,1)^2.
    kind 'disk' has a float radius; kind 'five_disk' is one center disk plus
    four corner disks at (+-1/2, +-1/2) offsets.
    """

    kind: str = "empty"
    dims: Optional[Tuple[Fraction, Fraction]] = None
    radius: float = 0.0
    center_radius: float = 0.0
    corner_radius: float = 0.0

    def __post_init__(self):
        if self.kind == "rect":
            a, b = self.dims
            if not (0 < a < 1 and 0 < b < 1):
                raise TableError(f"rectangle dims must lie in (0,1)^2, got ({a}, {b})")
        elif self.kind == "disk":
            if self.radius <= 0:
                raise TableError("disk radius must be positive")
        elif self.kind == "five_disk":
            if self.center_radius <= 0 or self.corner_radius <= 0:
                raise TableError("five_disk radii must be positive")
        elif self.kind != "empty":
            raise TableError(f"unknown obstacle kind {self.kind!r}")

    @property
    def is_empty(self) -> bool:
        return self.kind == "empty"


EMPTY = ObstacleSpec()


def rect_spec(a, b) -> ObstacleSpec:
    return ObstacleSpec(kind="rect", dims=(Fraction(a), Fraction(b)))


def is_odd_even_dims(a: Fraction, b: Fraction) -> bool:
    """Check the parity condition on exact dims (p/q, r/s), reduced.

    True when both numerators are odd and both denominators even, with
    0 < p/q < 1 and 0 < r/s < 1.  Full-occupancy tables with such dims are
    the known-recurrent reference family.
    """
    for f in (a, b):
        if not isinstance(f, Fraction):
            raise TableError("dims must be exact Fractions")
        if not 0 < f < 1:
            raise TableError(f"dimension {f} outside (0,1)")
    return (a.numerator % 2 == 1 and b.numerator % 2 == 1
            and a.denominator % 2 == 0 and b.denominator % 2 == 0)


def tiling_denominator(family: Iterable[ObstacleSpec]) -> int:
    """Smallest Q such that every table over the family tiles by 1/Q squares.

    Q is the lcm of the rectangle denominators; empty cells are trivially
    tiled and are ignored.  Rejects families with no rectangle or with a
    rectangle failing the parity condition.
    """
    q = 1
    saw_rect = False
    for spec in family:
        if spec.is_empty:
            continue
        if spec.kind != "rect":
            raise TableError("square tiling requires rectangle obstacles")
        a, b = spec.dims
        if not is_odd_even_dims(a, b):
            raise TableError(f"dims ({a}, {b}) fail the odd/even parity condition")
        saw_rect = True
        q = math.lcm(q, a.denominator, b.denominator)
    if not saw_rect:
        raise TableError("family contains no rectangle obstacle")
    return q


def ring_sites(n: int) -> List[Site]:
    """Sites with |i|+|j| = n, counterclockwise from (n, 0).  Length 4n."""
    if n < 1:
        raise TableError("ring index must be >= 1")
    sites: List[Site] = []
    for k in range(n):
        sites.append((n - k, k))
    for k in range(n):
        sites.append((-k, n - k))
    for k in range(n):
        sites.append((k - n, -k))
    for k in range(n):
        sites.append((k, k - n))
    return sites


def ball_sites(n: int) -> List[Site]:
    """Sites with |i|+|j| < n."""
    out = [(0, 0)]
    for m in range(1, n):
        out.extend(ring_sites(m))
    return out


def _site_hash_unit(seed: int, i: int, j: int) -> float:
    """Deterministic uniform in [0,1) from (seed, i, j); random access, no RNG state."""
    digest = hashlib.sha256(struct.pack(">Qqq", seed % 2 ** 64, i, j)).digest()
    return int.from_bytes(digest[:8], "big") / 2.0 ** 64


def sample_seed(seed: int, index: int) -> int:
    """Stable per-sample RNG seed, independent of evaluation order."""
    digest = hashlib.sha256(struct.pack(">Qq", seed % 2 ** 64, index)).digest()
    return int.from_bytes(digest[:8], "big")


# ---------------------------------------------------------------------------
# Generators


@dataclass(frozen=True)
class Constant:
    spec: ObstacleSpec

    def spec_at(self, site: Site) -> ObstacleSpec:
        return self.spec

    def family(self) -> Tuple[ObstacleSpec, ...]:
        return (self.spec,)


@dataclass(frozen=True)
class IidRandom:
    """Independent site specs drawn from weighted entries, hash-addressed.

    Each site's draw is a pure function of (seed, i, j), so any site of the
    infinite table is evaluable without enumerating the others.
    """

    entries: Tuple[Tuple[ObstacleSpec, float], ...]
    seed: int = 0

    def __post_init__(self):
        total = sum(w for _, w in self.entries)
        if not self.entries or total <= 0:
            raise TableError("iid generator needs positive total weight")

    def spec_at(self, site: Site) -> ObstacleSpec:
        u = _site_hash_unit(self.seed, site[0], site[1])
        total = sum(w for _, w in self.entries)
        acc = 0.0
        for spec, w in self.entries:
            acc += w / total
            if u < acc:
                return spec
        return self.entries[-1][0]

    def family(self) -> Tuple[ObstacleSpec, ...]:
        return tuple(spec for spec, _ in self.entries)


@dataclass(frozen=True)
class AnnulusPatched:
    """Base spec on every listed annulus (n0 <= |i|+|j| < n1), patch elsewhere.

    Sites outside all annuli take the patch value when listed, otherwise the
    default spec.
    """

    base: ObstacleSpec
    annuli: Tuple[Tuple[int, int], ...]
    patch: Dict[Site, ObstacleSpec] = field(default_factory=dict)
    default: ObstacleSpec = EMPTY

    def __post_init__(self):
        for n0, n1 in self.annuli:
            if not 1 <= n0 < n1:
                raise TableError(f"invalid annulus bounds ({n0}, {n1})")

    def spec_at(self, site: Site) -> ObstacleSpec:
        r = abs(site[0]) + abs(site[1])
        for n0, n1 in self.annuli:
            if n0 <= r < n1:
                return self.base
        return self.patch.get(site, self.default)

    def family(self) -> Tuple[ObstacleSpec, ...]:
        return (self.base, self.default, *self.patch.values())


@dataclass(frozen=True)
class Explicit:
    cells: Dict[Site, ObstacleSpec]
    default: ObstacleSpec = EMPTY

    def spec_at(self, site: Site) -> ObstacleSpec:
        return self.cells.get(site, self.default)

    def family(self) -> Tuple[ObstacleSpec, ...]:
        return (self.default, *self.cells.values())


# ---------------------------------------------------------------------------
# Runtime table


@dataclass(frozen=True)
class Table:
    """Immutable lattice table: a generator plus the lattice it lives on."""

    lattice: str
    generator: object

    def __post_init__(self):
        if self.lattice not in (SQUARE, TRIANGULAR):
            raise TableError(f"unknown lattice {self.lattice!r}")
        if self.lattice == TRIANGULAR:
            for spec in self.family():
                if spec.kind == "rect":
                    raise TableError("rectangle obstacles require the square lattice")

    def spec_at(self, site: Site) -> ObstacleSpec:
        return self.generator.spec_at(site)

    def family(self) -> Tuple[ObstacleSpec, ...]:
        return self.generator.family()

    def site_position(self, site: Site) -> Tuple[float, float]:
        i, j = site
        if self.lattice == SQUARE:
            return (float(i), float(j))
        return (i + 0.5 * j, j * TRI_ROW_HEIGHT)

    def is_rect_table(self) -> bool:
        return all(s.kind in ("rect", "empty") for s in self.family())

    def denominator_lcm(self) -> int:
        """LCM of all rational data denominators over the spec family.

        Covers obstacle side coordinates i +- a/2: returns L such that every
        side coordinate has denominator dividing L.
        """
        if not self.is_rect_table():
            raise TableError("exact denominators defined for rectangle tables only")
        l = 2
        for spec in self.family():
            if spec.kind == "rect":
                a, b = spec.dims
                l = math.lcm(l, 2 * a.denominator, 2 * b.denominator)
        return l

    def max_reach(self) -> float:
        """Largest distance any obstacle part extends from its own site."""
        reach = 0.0
        for spec in self.family():
            if spec.kind == "rect":
                reach = max(reach, float(max(spec.dims)) / 2.0)
            elif spec.kind == "disk":
                reach = max(reach, spec.radius)
            elif spec.kind == "five_disk":
                reach = max(reach, spec.center_radius,
                            math.sqrt(0.5) + spec.corner_radius)
        return reach


def constant_table(a, b) -> Table:
    """Full-occupancy square-lattice table with one rectangle size everywhere."""
    return Table(SQUARE, Constant(rect_spec(a, b)))
