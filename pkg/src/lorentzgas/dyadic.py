"""Doubling-map toy systems with integer observables and exact oracles.

A ``DyadicSystem`` is the map ``x -> 2x mod 1`` on ``[0,1)`` together with an
integer-valued observable that is constant on the ``2^m`` dyadic intervals of
depth ``m``.  Under Lebesgue measure the binary digits of ``x`` are iid fair
bits, so the observable along an orbit is a sliding-window function of an iid
bit stream.  That makes every distributional quantity exactly computable in
rational arithmetic: Birkhoff-sum laws by dynamic programming over the
``(m-1)``-bit window, autocovariances by finite enumeration.  These exact
values serve as ground truth for the spectral machinery.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import StateSpaceError
from .lattice import AffineLattice, affine_support

# Hard cap on (window state) x (partial sum) pairs held by the DP.
_MAX_STATES = 4_000_000


@dataclass(frozen=True)
class DyadicSystem:
    """Doubling map with a depth-m piecewise-constant integer observable."""

    values: tuple

    def __post_init__(self):
        n = len(self.values)
        if n < 2 or n & (n - 1):
            raise ValueError("need 2^m observable values with m >= 1")
        if any(int(v) != v for v in self.values):
            raise ValueError("observable values must be exact integers")
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))

    @property
    def depth(self) -> int:
        return len(self.values).bit_length() - 1

    @property
    def mean(self) -> Fraction:
        return Fraction(sum(self.values), len(self.values))

    @property
    def max_abs(self) -> int:
        return max(abs(v) for v in self.values)

    def support_lattice(self) -> AffineLattice:
        """Coset V + r of Z carrying the observable's values."""
        return affine_support([(v,) for v in self.values])


def exact_birkhoff_distribution(sys: DyadicSystem, n: int) -> dict:
    """Exact law of the n-step sum: mapping integer -> rational probability.

    DP over the sliding window of binary digits.  State = (last m-1 bits,
    partial sum); each path carries weight 2^-(n+m-1).  Probabilities are
    exact ``Fraction``s and sum to one.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    m = sys.depth
    if n == 0:
        return {0: Fraction(1)}
    spread = max(sys.values) - min(sys.values)
    if 2 ** max(m - 1, 0) * (n * spread + 1) > _MAX_STATES:
        raise StateSpaceError("state space too large")
    nwin = 1 << (m - 1)
    mask = nwin - 1
    # counts[(window, sum)] = number of bit strings
    counts = {(w, 0): 1 for w in range(nwin)}
    for _ in range(n):
        nxt = {}
        for (w, s), c in counts.items():
            for b in (0, 1):
                j = (w << 1) | b
                key = (j & mask, s + sys.values[j])
                nxt[key] = nxt.get(key, 0) + c
        counts = nxt
    total_bits = n + m - 1
    denom = 1 << total_bits
    dist = {}
    for (_, s), c in counts.items():
        dist[s] = dist.get(s, 0) + c
    return {s: Fraction(c, denom) for s, c in sorted(dist.items())}


def exact_correlation(sys: DyadicSystem, j: int) -> Fraction:
    """Exact autocovariance C_j = E[f * f o T^j] - E[f]^2.

    For a depth-m observable the orbit values at lag j >= m use disjoint
    digit windows, so C_j = 0 exactly there.  For j < m the two windows
    overlap in m - j digits and the expectation is a finite sum.
    """
    if j < 0:
        raise ValueError("lag must be >= 0")
    m = sys.depth
    mean = sys.mean
    if j >= m:
        return Fraction(0)
    overlap = m - j
    lowmask = (1 << overlap) - 1
    total = 0
    for u in range(1 << m):
        head = (u & lowmask) << j
        s = 0
        for tail in range(1 << j):
            s += sys.values[head | tail]
        total += sys.values[u] * s
    return Fraction(total, 1 << (m + j)) - mean * mean


def green_kubo_sigma2(sys: DyadicSystem) -> Fraction:
    """Summed-autocovariance variance rate: C_0 + 2 * sum_{j>=1} C_j (exact)."""
    m = sys.depth
    out = exact_correlation(sys, 0)
    for j in range(1, m):
        out += 2 * exact_correlation(sys, j)
    return out


def exact_variance(sys: DyadicSystem, n: int) -> Fraction:
    """Exact variance of the n-step sum, from the exact distribution."""
    dist = exact_birkhoff_distribution(sys, n)
    mu = sum(p * s for s, p in dist.items())
    return sum(p * (s - mu) ** 2 for s, p in dist.items())


def char_function_exact(sys: DyadicSystem, n: int, t: float) -> complex:
    """E[exp(i t S_n)] evaluated from the exact distribution."""
    dist = exact_birkhoff_distribution(sys, n)
    return sum(float(p) * np.exp(1j * t * s) for s, p in dist.items())


def sample_stream(sys: DyadicSystem, n: int, rng) -> np.ndarray:
    """Stationary observable stream f, f o T, ..., f o T^(n-1) (one orbit).

    Sampled symbolically: a fresh iid bit stream stands in for the binary
    digits of a Lebesgue-random point, which avoids the float collapse of
    literally iterating x -> 2x mod 1.
    """
    m = sys.depth
    bits = rng.integers(0, 2, size=n + m - 1, dtype=np.int64)
    idx = np.zeros(n, dtype=np.int64)
    for i in range(m):
        idx = (idx << 1) | bits[i : i + n]
    values = np.asarray(sys.values, dtype=np.int64)
    return values[idx]
