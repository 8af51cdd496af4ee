"""Lattice algebra tests with brute-force membership oracles."""

import itertools
import math
import random

import pytest

from lorentzgas.lattice import (
    AffineLattice,
    affine_support,
    as_vec,
    hnf_basis,
    lattice_index,
)


def brute_force_member(generators, v, bound=10):
    """Oracle: is v an integer combination with coefficients in [-bound, bound]?

    Independent of the HNF code path: plain exhaustive search.
    """
    if not generators:
        return not any(v)
    for coeffs in itertools.product(range(-bound, bound + 1),
                                    repeat=len(generators)):
        s = [0] * len(v)
        for c, g in zip(coeffs, generators):
            for j in range(len(v)):
                s[j] += c * g[j]
        if tuple(s) == tuple(v):
            return True
    return False


def test_hnf_canonical_example():
    lat = hnf_basis([(2, 0), (0, 2), (1, 1)])
    assert lat.basis == ((1, 1), (0, 2))
    assert lattice_index(lat) == 2


def test_hnf_identity_and_empty():
    lat = hnf_basis([(1, 0), (0, 1)])
    assert lat.basis == ((1, 0), (0, 1))
    assert lattice_index(lat) == 1
    empty = hnf_basis([], dim=2)
    assert empty.rank == 0 and empty.basis == ()


def test_hnf_idempotent_random():
    rnd = random.Random(20240811)
    for _ in range(200):
        k = rnd.randint(1, 4)
        gens = [tuple(rnd.randint(-5, 5) for _ in range(2)) for _ in range(k)]
        lat = hnf_basis(gens, dim=2)
        again = hnf_basis(lat.basis, dim=2)
        assert again.basis == lat.basis


def test_hnf_form_invariants():
    rnd = random.Random(7)
    for _ in range(200):
        gens = [tuple(rnd.randint(-6, 6) for _ in range(2))
                for _ in range(rnd.randint(1, 3))]
        basis = hnf_basis(gens, dim=2).basis
        pivots = []
        for row in basis:
            col = next(j for j in range(2) if row[j] != 0)
            assert all(row[j] == 0 for j in range(col))
            assert row[col] > 0
            pivots.append((col, row[col]))
        assert [c for c, _ in pivots] == sorted({c for c, _ in pivots})
        # entries above a pivot reduced modulo it
        for i, (col, g) in enumerate(pivots):
            for k in range(i):
                assert 0 <= basis[k][col] < g


def test_membership_matches_brute_force():
    rnd = random.Random(99)
    for _ in range(30):
        gens = [tuple(rnd.randint(-3, 3) for _ in range(2))
                for _ in range(rnd.randint(0, 3))]
        lat = hnf_basis(gens, dim=2)
        for v in itertools.product(range(-4, 5), repeat=2):
            assert lat.contains(v) == brute_force_member(gens, v)


def test_reduce_is_coset_invariant_and_idempotent():
    rnd = random.Random(5)
    lat = hnf_basis([(2, 1), (0, 3)])
    for _ in range(300):
        v = (rnd.randint(-20, 20), rnd.randint(-20, 20))
        red = lat.reduce(v)
        assert lat.reduce(red) == red
        assert lat.contains(tuple(a - b for a, b in zip(v, red)))
    # adding basis vectors never changes the reduced representative
    for v in [(3, 4), (-7, 2), (0, 0)]:
        for row in lat.basis:
            w = tuple(a + b for a, b in zip(v, row))
            assert lat.reduce(w) == lat.reduce(v)


def test_affine_support_walk_steps():
    # walk steps have odd coordinate sum: checkerboard sublattice of index 2
    sup = affine_support([(1, 0), (-1, 0), (0, 1), (0, -1)])
    assert sup.basis == ((1, 1), (0, 2))
    assert lattice_index(sup) == 2
    # the canonical residue of (1, 0) is (0, 1); both are the same coset
    assert sup.translation == (0, 1)
    assert sup.coset_contains((1, 0))
    for p in [(1, 0), (-1, 0), (0, 1), (0, -1)]:
        assert sup.coset_contains(p)
    assert not sup.coset_contains((0, 0))
    assert not sup.coset_contains((1, 1))


def test_affine_support_single_point_and_empty():
    sup = affine_support([(0,)])
    assert sup.rank == 0
    assert sup.translation == (0,)
    with pytest.raises(ValueError, match="no samples"):
        affine_support([])


def test_lattice_index_rank_deficient():
    lat = hnf_basis([(2, 4)])
    assert lattice_index(lat) == math.inf


def test_coset_shift_law_under_sumsets():
    """Points supported on V + r have pairwise sums supported on V + 2r."""
    rnd = random.Random(321)
    for _ in range(20):
        base = hnf_basis([(rnd.randint(1, 3), rnd.randint(0, 2)),
                          (0, rnd.randint(1, 3))])
        r = (rnd.randint(-2, 2), rnd.randint(-2, 2))
        pts = []
        for _ in range(6):
            c1, c2 = rnd.randint(-3, 3), rnd.randint(-3, 3)
            v = [r[j] + c1 * base.basis[0][j] + c2 * base.basis[1][j]
                 for j in range(2)]
            pts.append(tuple(v))
        sup = affine_support(pts)
        sums = [tuple(a + b for a, b in zip(p, q)) for p in pts for q in pts]
        sup2 = affine_support(sums)
        # same group, doubled translation
        assert sup2.basis == sup.basis
        doubled = sup.reduce(tuple(2 * t for t in sup.translation))
        assert sup2.translation == AffineLattice(sup2.basis, (0, 0), 2).reduce(doubled)


def test_n_fold_sum_coset():
    pts = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    sup = affine_support(pts)
    current = pts
    for n in range(2, 5):
        current = [tuple(a + b for a, b in zip(p, q))
                   for p in current for q in pts]
        sup_n = affine_support(sorted(set(current)))
        assert sup_n.basis == sup.basis
        expected = sup.reduce(tuple(n * t for t in sup.translation))
        assert sup_n.translation == expected


def test_as_vec_rejects_non_integers():
    with pytest.raises(ValueError):
        as_vec((0.5, 1))
    assert as_vec((2.0, -3)) == (2, -3)
