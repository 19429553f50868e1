"""Obstacle family predicates, generators, and ring enumeration."""

from fractions import Fraction

import pytest

from windtree.table import (EMPTY, AnnulusPatched, Constant, Explicit,
                            IidRandom, Table, TableError, ball_sites,
                            constant_table, is_odd_even_dims, rect_spec,
                            ring_sites, tiling_denominator)

F = Fraction


def test_parity_predicate():
    assert is_odd_even_dims(F(1, 2), F(1, 2))
    assert not is_odd_even_dims(F(2, 3), F(1, 2))
    assert not is_odd_even_dims(F(1, 3), F(1, 2))
    assert is_odd_even_dims(F(3, 4), F(1, 6))
    with pytest.raises(TableError):
        is_odd_even_dims(F(3, 2), F(1, 2))


def test_tiling_denominator():
    assert tiling_denominator([rect_spec(F(1, 2), F(1, 2))]) == 2
    assert tiling_denominator([rect_spec(F(1, 2), F(1, 2)),
                               rect_spec(F(3, 4), F(1, 6))]) == 12
    # Empty members are ignored.
    assert tiling_denominator([EMPTY, rect_spec(F(1, 2), F(1, 2))]) == 2
    with pytest.raises(TableError):
        tiling_denominator([rect_spec(F(2, 3), F(1, 2))])
    with pytest.raises(TableError):
        tiling_denominator([EMPTY])


def test_ring_sites():
    assert ring_sites(1) == [(1, 0), (0, 1), (-1, 0), (0, -1)]
    assert len(ring_sites(2)) == 8
    assert all(abs(i) + abs(j) == 3 for i, j in ring_sites(3))
    assert len(set(ring_sites(5))) == 20
    with pytest.raises(TableError):
        ring_sites(0)


def test_ring_union_partitions_ball():
    for n in range(1, 6):
        ball = set(ball_sites(n))
        ring = set(ring_sites(n))
        assert not ball & ring
        assert ball | ring == set(ball_sites(n + 1))


def test_constant_generator():
    t = constant_table(F(1, 2), F(1, 2))
    assert t.spec_at((7, -3)) == rect_spec(F(1, 2), F(1, 2))
    assert t.spec_at((0, 0)).dims == (F(1, 2), F(1, 2))


def test_annulus_patched():
    base = rect_spec(F(1, 2), F(1, 2))
    gen = AnnulusPatched(base, ((2, 5),), patch={(0, 0): EMPTY}, default=EMPTY)
    t = Table("square", gen)
    for i, j in ring_sites(3):
        assert t.spec_at((i, j)) == base
    for n in (2, 3, 4):
        for s in ring_sites(n):
            assert t.spec_at(s) == base
    assert t.spec_at((0, 0)) == EMPTY
    assert t.spec_at((1, 0)) == EMPTY
    assert t.spec_at((5, 0)) == EMPTY


def test_iid_determinism_and_mix():
    gen = IidRandom(((rect_spec(F(1, 2), F(1, 2)), 1.0), (EMPTY, 1.0)), seed=42)
    t1 = Table("square", gen)
    t2 = Table("square", IidRandom(((rect_spec(F(1, 2), F(1, 2)), 1.0),
                                    (EMPTY, 1.0)), seed=42))
    window = [(i, j) for i in range(-50, 50) for j in range(-50, 50)]
    specs1 = [t1.spec_at(s) for s in window]
    specs2 = [t2.spec_at(s) for s in window]
    assert specs1 == specs2
    assert t1.spec_at((0, 0)) == t1.spec_at((0, 0))
    n_rect = sum(1 for s in specs1 if not s.is_empty)
    # Weighted half/half: the rectangle count should land near 5000.
    assert 4500 < n_rect < 5500
    # A different seed gives a different table.
    t3 = Table("square", IidRandom(((rect_spec(F(1, 2), F(1, 2)), 1.0),
                                    (EMPTY, 1.0)), seed=43))
    assert [t3.spec_at(s) for s in window] != specs1


def test_obstacles_disjoint_on_square_lattice():
    # Any two rectangle obstacles from dims < 1 are separated on the lattice.
    t = constant_table(F(9, 10), F(9, 10))
    for (i, j) in [(0, 0), (3, -2)]:
        spec = t.spec_at((i, j))
        hw = float(spec.dims[0]) / 2
        assert hw < 0.5
        # Gap to the neighbor obstacle along an axis: 1 - 2*hw > 0.
        assert 1.0 - 2 * hw > 0


def test_triangular_rejects_rectangles():
    with pytest.raises(TableError):
        Table("triangular", Constant(rect_spec(F(1, 2), F(1, 2))))


def test_explicit_default():
    t = Table("square", Explicit({(0, 0): rect_spec(F(1, 2), F(1, 2))}, EMPTY))
    assert not t.spec_at((0, 0)).is_empty
    assert t.spec_at((1, 0)).is_empty
