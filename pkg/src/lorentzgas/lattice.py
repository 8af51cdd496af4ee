"""Exact integer-lattice algebra: Hermite normal form, affine supports, cosets.

An ``AffineLattice`` is an integer lattice ``V`` (spanned by a canonical
Hermite-normal-form basis) together with a translation vector ``r`` reduced
into the fundamental cell, i.e. the coset ``V + r``.  These objects record
the support structure of integer-valued observables: the set of values of a
lattice-valued function lives on some ``V + r``, and its n-step sums then
live on ``V + n*r``.

Everything in this module is exact integer arithmetic; no floats enter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

Vec = tuple  # d-tuple of Python ints


def as_vec(v) -> Vec:
    """Coerce to a tuple of exact ints, rejecting non-integral coordinates."""
    out = []
    for x in v:
        xi = int(x)
        if xi != x:
            raise ValueError(f"lattice coordinate {x!r} is not an exact integer")
        out.append(xi)
    return tuple(out)


def _hnf_rows(rows, dim):
    """Row-style Hermite normal form of the lattice generated by ``rows``.

    Returns rows with strictly increasing pivot columns, positive pivots,
    and entries above each pivot reduced into ``[0, pivot)``.
    """
    work = [list(r) for r in rows if any(r)]
    basis = []
    for col in range(dim):
        live = [r for r in work if r[col] != 0]
        rest = [r for r in work if r[col] == 0]
        if not live:
            work = rest
            continue
        # Euclidean elimination in this column; rows that zero out here may
        # still carry later columns, so they rejoin the remaining work.
        while len(live) > 1:
            live.sort(key=lambda r: abs(r[col]))
            r0 = live[0]
            keep = [r0]
            for r in live[1:]:
                q = r[col] // r0[col]
                for j in range(dim):
                    r[j] -= q * r0[j]
                if r[col] != 0:
                    keep.append(r)
                elif any(r):
                    rest.append(r)
            live = keep
        pivot = live[0]
        if pivot[col] < 0:
            pivot = [-x for x in pivot]
        basis.append(pivot)
        work = rest
    # Reduce entries above each pivot.
    for i in range(len(basis)):
        ci = next(j for j in range(dim) if basis[i][j] != 0)
        g = basis[i][ci]
        for k in range(i):
            q = basis[k][ci] // g
            if q:
                for j in range(dim):
                    basis[k][j] -= q * basis[i][j]
    return [tuple(r) for r in basis]


@dataclass(frozen=True)
class AffineLattice:
    """Integer lattice in HNF plus a reduced translation: the coset V + r."""

    basis: tuple
    translation: Vec
    dim: int

    @property
    def rank(self) -> int:
        return len(self.basis)

    def _pivots(self):
        for row in self.basis:
            col = next(j for j in range(self.dim) if row[j] != 0)
            yield col, row[col], row

    def contains(self, v) -> bool:
        """Membership of ``v`` in the lattice V (ignoring the translation)."""
        v = list(as_vec(v))
        if len(v) != self.dim:
            raise ValueError("dimension mismatch")
        for col, g, row in self._pivots():
            if v[col] % g == 0:
                q = v[col] // g
                for j in range(self.dim):
                    v[j] -= q * row[j]
        return not any(v)

    def coset_contains(self, v) -> bool:
        """Membership of ``v`` in the coset V + translation."""
        v = as_vec(v)
        return self.contains(tuple(a - b for a, b in zip(v, self.translation)))

    def reduce(self, v) -> Vec:
        """Unique representative of ``v``'s coset in the fundamental cell.

        Forward substitution along pivot columns: after reduction the entry
        in each pivot column lies in ``[0, pivot)``.
        """
        v = list(as_vec(v))
        if len(v) != self.dim:
            raise ValueError("dimension mismatch")
        for col, g, row in self._pivots():
            q = v[col] // g  # floor division: canonical residue
            if q:
                for j in range(self.dim):
                    v[j] -= q * row[j]
        return tuple(v)

    def shift(self, v) -> "AffineLattice":
        """The coset V + (translation + v)."""
        v = as_vec(v)
        t = self.reduce(tuple(a + b for a, b in zip(self.translation, v)))
        return AffineLattice(self.basis, t, self.dim)


def hnf_basis(vectors, dim=None) -> AffineLattice:
    """Canonical HNF lattice generated by ``vectors`` (translation zero).

    Empty input yields the rank-0 lattice.  Idempotent: feeding a canonical
    basis back in returns the same basis.
    """
    vecs = [as_vec(v) for v in vectors]
    if dim is None:
        if not vecs:
            raise ValueError("dimension required for empty generating set")
        dim = len(vecs[0])
    if any(len(v) != dim for v in vecs):
        raise ValueError("mixed dimensions in generating set")
    basis = _hnf_rows(vecs, dim)
    return AffineLattice(tuple(basis), (0,) * dim, dim)


def affine_support(points) -> AffineLattice:
    """Smallest coset V + r of the integer lattice containing all ``points``.

    V is generated by the differences from the first point; r is the first
    point reduced modulo V.
    """
    pts = [as_vec(p) for p in points]
    if not pts:
        raise ValueError("no samples")
    dim = len(pts[0])
    p0 = pts[0]
    diffs = [tuple(a - b for a, b in zip(p, p0)) for p in pts[1:]]
    lat = hnf_basis(diffs, dim=dim)
    return AffineLattice(lat.basis, lat.reduce(p0), dim)


def lattice_index(lat: AffineLattice):
    """Index of V in Z^d: product of HNF pivots, or ``math.inf`` if rank < d."""
    if lat.rank < lat.dim:
        return math.inf
    out = 1
    for _, g, _ in lat._pivots():
        out *= g
    return out
