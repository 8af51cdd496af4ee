"""Dyadic toy systems: exact DP distributions against brute-force cylinders."""

from fractions import Fraction

import numpy as np
import pytest

from lorentzgas.dyadic import (
    DyadicSystem,
    char_function_exact,
    exact_birkhoff_distribution,
    exact_correlation,
    exact_variance,
    green_kubo_sigma2,
    sample_stream,
)
from lorentzgas.errors import StateSpaceError
from lorentzgas.lattice import affine_support

PM1 = DyadicSystem((1, -1))
STEP2 = DyadicSystem((2, 0, 0, -2))
MINIMAL = DyadicSystem((1, 0, 0, -1))


def cylinder_distribution(sys, n):
    """Oracle: enumerate every depth-(n+m-1) binary cylinder directly."""
    m = sys.depth
    bits_total = n + m - 1
    out = {}
    for word in range(1 << bits_total):
        bits = [(word >> (bits_total - 1 - i)) & 1 for i in range(bits_total)]
        s = 0
        for k in range(n):
            idx = 0
            for i in range(m):
                idx = (idx << 1) | bits[k + i]
            s += sys.values[idx]
        out[s] = out.get(s, 0) + 1
    return {s: Fraction(c, 1 << bits_total) for s, c in sorted(out.items())}


def cylinder_correlation(sys, j):
    """Oracle: E[f * f o T^j] - E[f]^2 by enumerating depth-(j+m) cylinders."""
    m = sys.depth
    bits_total = j + m
    acc = 0
    for word in range(1 << bits_total):
        bits = [(word >> (bits_total - 1 - i)) & 1 for i in range(bits_total)]
        i0 = 0
        ij = 0
        for i in range(m):
            i0 = (i0 << 1) | bits[i]
            ij = (ij << 1) | bits[j + i]
        acc += sys.values[i0] * sys.values[ij]
    mean = Fraction(sum(sys.values), 1 << m)
    return Fraction(acc, 1 << bits_total) - mean * mean


def test_distribution_pm1_two_steps():
    assert exact_birkhoff_distribution(PM1, 2) == {
        -2: Fraction(1, 4), 0: Fraction(1, 2), 2: Fraction(1, 4)}


def test_distribution_pm1_one_step():
    assert exact_birkhoff_distribution(PM1, 1) == {
        -1: Fraction(1, 2), 1: Fraction(1, 2)}


def test_distribution_depth2_one_step():
    assert exact_birkhoff_distribution(STEP2, 1) == {
        -2: Fraction(1, 4), 0: Fraction(1, 2), 2: Fraction(1, 4)}


@pytest.mark.parametrize("sys", [PM1, STEP2, MINIMAL, DyadicSystem((3, 1, 0, 2))])
@pytest.mark.parametrize("n", [0, 1, 2, 3, 5, 8])
def test_distribution_matches_cylinder_oracle(sys, n):
    assert exact_birkhoff_distribution(sys, n) == cylinder_distribution(sys, n)


def test_distribution_normalization_exact():
    for sys in (PM1, STEP2, DyadicSystem((5, -1, 2, 2))):
        for n in (1, 4, 9):
            assert sum(exact_birkhoff_distribution(sys, n).values()) == 1


def test_state_space_guard():
    with pytest.raises(StateSpaceError, match="state space too large"):
        exact_birkhoff_distribution(DyadicSystem((100, -100)), 10 ** 6)


def test_correlations_depth2():
    assert exact_correlation(STEP2, 0) == 2
    assert exact_correlation(STEP2, 1) == 1
    assert exact_correlation(STEP2, 2) == 0
    assert exact_correlation(STEP2, 7) == 0


def test_correlations_pm1():
    assert exact_correlation(PM1, 0) == 1
    assert exact_correlation(PM1, 1) == 0


def test_correlation_constant_observable():
    const = DyadicSystem((3, 3))
    for j in range(4):
        assert exact_correlation(const, j) == 0


@pytest.mark.parametrize("sys", [PM1, STEP2, MINIMAL, DyadicSystem((1, 2, 4, -3))])
@pytest.mark.parametrize("j", [0, 1, 2, 3])
def test_correlation_matches_cylinder_oracle(sys, j):
    assert exact_correlation(sys, j) == cylinder_correlation(sys, j)


def test_variance_growth_matches_summed_correlations():
    """Past the dependence depth, the variance grows by sigma^2 per step."""
    for sys in (PM1, STEP2, DyadicSystem((4, 1, -3, 0))):
        sigma2 = green_kubo_sigma2(sys)
        m = sys.depth
        for n in range(m - 1, m + 4):
            if n < 1:
                continue
            assert exact_variance(sys, n + 1) - exact_variance(sys, n) == sigma2
    assert green_kubo_sigma2(PM1) == 1
    assert green_kubo_sigma2(STEP2) == 4


def test_sum_support_follows_coset_shift():
    lat = affine_support([(v,) for v in PM1.values])
    for n in (1, 2, 3, 6):
        support = [(s,) for s in exact_birkhoff_distribution(PM1, n)]
        sup_n = affine_support(support)
        assert sup_n.basis == lat.basis
        assert sup_n.translation == lat.reduce((n * lat.translation[0],))


def test_char_function_values():
    assert char_function_exact(PM1, 3, 0.0) == pytest.approx(1.0)
    for t in (0.1, 0.7, 2.0):
        assert char_function_exact(PM1, 1, t) == pytest.approx(np.cos(t), abs=1e-14)
        assert char_function_exact(PM1, 5, t) == pytest.approx(np.cos(t) ** 5,
                                                               abs=1e-13)


def test_char_function_modulus_bounded():
    for t in np.linspace(-3, 3, 11):
        assert abs(char_function_exact(STEP2, 4, t)) <= 1 + 1e-12


def test_system_validation():
    with pytest.raises(ValueError):
        DyadicSystem((1, 2, 3))
    with pytest.raises(ValueError):
        DyadicSystem((1,))
    with pytest.raises(ValueError):
        DyadicSystem((0.5, 1.5))


def test_sample_stream_statistics():
    rng = np.random.Generator(np.random.Philox(key=2024))
    stream = sample_stream(STEP2, 200_000, rng)
    assert stream.mean() == pytest.approx(0.0, abs=0.05)
    # lag-1 autocovariance should be near the exact value 1
    x = stream.astype(np.float64)
    c1 = np.mean(x[:-1] * x[1:])
    assert c1 == pytest.approx(1.0, abs=0.05)
    # values only from the configured alphabet
    assert set(np.unique(stream)) <= {-2, 0, 2}
