"""Exact and Monte Carlo statistics for lattice-valued Birkhoff sums.

Three layers live here:

* exact random-walk oracles (simple symmetric walk on Z and Z^2) computed in
  rational arithmetic — the ground truth every estimator is checked against;
* generic estimators: summed-autocovariance (Green-Kubo) covariance with
  batch-means errors, empirical distributions with coset discipline, the
  normalized local-limit point statistic, global-CLT comparison, recurrence
  and joint-return statistics;
* ensemble drivers that feed the billiard kernels and the walk generators
  into those estimators with counter-based, scheduling-independent seeding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import stats as sps

from . import _kernels
from .billiard import ScattererConfig, mu1_initial_conditions, validate_config
from .errors import HorizonGuardError, StateSpaceError
from .lattice import AffineLattice, affine_support, lattice_index

_Z95 = 1.959963984540054  # two-sided 95% normal quantile


# ---------------------------------------------------------------------------
# simple symmetric random walk: exact oracles

def ssrw_step_lattice(d: int = 2) -> AffineLattice:
    """Affine support of one walk step (the checkerboard coset for d = 2)."""
    steps = []
    for j in range(d):
        e = [0] * d
        e[j] = 1
        steps.append(tuple(e))
        steps.append(tuple(-x for x in e))
    return affine_support(steps)


def ssrw_exact(n: int, d: int = 2) -> Fraction:
    """Exact return probability P(W_n = 0) for the walk on Z^d, d in {1, 2}.

    Odd n gives 0 by parity.  For even n the d = 2 walk splits into two
    independent one-dimensional walks along the diagonals, so
    P = (C(n, n/2) 2^-n)^2; d = 1 is the plain central binomial.
    """
    if d not in (1, 2):
        raise ValueError("d must be 1 or 2")
    if n < 0:
        raise ValueError("n must be >= 0")
    if n % 2:
        return Fraction(0)
    one_d = Fraction(math.comb(n, n // 2), 2 ** n)
    return one_d if d == 1 else one_d * one_d


def ssrw_distribution(n: int, d: int = 2) -> dict:
    """Full exact law of W_n by dynamic-programming convolution over Z^d.

    Path counts are exact integers over the denominator (2d)^n.  The state
    space grows like n^d, so this is guarded; use ``ssrw_exact`` (and the
    diagonal product identity it is tested against) for large n.
    """
    if d not in (1, 2):
        raise ValueError("d must be 1 or 2")
    if n < 0:
        raise ValueError("n must be >= 0")
    if (d == 1 and n > 4096) or (d == 2 and n > 64):
        raise StateSpaceError("state space too large")
    steps = []
    for j in range(d):
        e = [0] * d
        e[j] = 1
        steps.append(tuple(e))
        steps.append(tuple(-x for x in e))
    counts = {(0,) * d: 1}
    for _ in range(n):
        nxt = {}
        for pos, c in counts.items():
            for s in steps:
                key = tuple(p + q for p, q in zip(pos, s))
                nxt[key] = nxt.get(key, 0) + c
        counts = nxt
    denom = (2 * d) ** n
    return {pos: Fraction(c, denom) for pos, c in sorted(counts.items())}


def ssrw_return_curve(n_max: int, d: int = 2) -> np.ndarray:
    """Cumulative return-probability sums: out[N] = sum_{k=1..N} P(W_k = 0).

    Each term is exact; only the running sum is carried in floats.
    """
    out = np.zeros(n_max + 1)
    acc = 0.0
    for k in range(1, n_max + 1):
        if k % 2 == 0:
            acc += float(ssrw_exact(k, d))
        out[k] = acc
    return out


def ssrw_checkpoint_sums(seed, n_traj: int, checkpoints, d: int = 2) -> np.ndarray:
    """Monte Carlo walk positions at the given times, shape (n_traj, C, d).

    Trajectory i always consumes steps [i*n_max, (i+1)*n_max) of the Philox
    stream keyed by ``seed``, independent of internal chunking.
    """
    cps = sorted(int(c) for c in checkpoints)
    if not cps or cps[0] < 1:
        raise ValueError("checkpoints must be >= 1")
    n_max = cps[-1]
    gen = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    out = np.empty((n_traj, len(cps), d), dtype=np.int64)
    dx = np.array([1, -1, 0, 0][: 2 * d], dtype=np.int64)
    dy = np.array([0, 0, 1, -1], dtype=np.int64)
    chunk = max(1, 2_000_000 // n_max)
    done = 0
    while done < n_traj:
        b = min(chunk, n_traj - done)
        moves = gen.integers(0, 2 * d, size=(b, n_max), dtype=np.int8)
        x = np.cumsum(dx[moves], axis=1)
        for ci, k in enumerate(cps):
            out[done:done + b, ci, 0] = x[:, k - 1]
        if d == 2:
            y = np.cumsum(dy[moves], axis=1)
            for ci, k in enumerate(cps):
                out[done:done + b, ci, 1] = y[:, k - 1]
        done += b
    return out


# ---------------------------------------------------------------------------
# covariance estimation

@dataclass(frozen=True)
class CovarianceEstimate:
    sigma: np.ndarray  # d x d, symmetric
    lags: int  # truncation of the autocovariance sum
    stderr: np.ndarray  # batch-means standard error per entry
    n_samples: int


def _lagged_cov(x, mean, lags):
    """C_0 and the symmetrized lag sum for one stream (rows = time)."""
    t, d = x.shape
    xc = x - mean
    sigma = (xc.T @ xc) / t
    for j in range(1, lags + 1):
        cj = (xc[:-j].T @ xc[j:]) / (t - j)
        sigma = sigma + cj + cj.T
    return sigma


def green_kubo_covariance(stream, lags: int, n_batches: int = 16) -> CovarianceEstimate:
    """Summed-autocovariance estimate C_0 + sum_j (C_j + C_j^T) up to ``lags``.

    ``stream`` is a (T,) or (T, d) array of stationary observations (or a
    list of such).  Standard errors come from batch means: the estimator is
    recomputed on contiguous batches and their spread is scaled by 1/sqrt(B).
    """
    streams = stream if isinstance(stream, (list, tuple)) else [stream]
    arrs = []
    for s in streams:
        a = np.asarray(s, dtype=np.float64)
        if a.ndim == 1:
            a = a[:, None]
        arrs.append(a)
    total = sum(a.shape[0] for a in arrs)
    if total - lags * len(arrs) < 100 * max(lags, 1):
        raise ValueError(
            f"insufficient data: {total} samples for {lags} lags")
    d = arrs[0].shape[1]
    mean = sum(a.sum(axis=0) for a in arrs) / total
    sigma = np.zeros((d, d))
    for a in arrs:
        sigma += a.shape[0] * _lagged_cov(a, mean, lags)
    sigma /= total
    # batch means across equal slices of every stream
    batches = []
    for a in arrs:
        blen = a.shape[0] // n_batches
        if blen <= lags + 1:
            continue
        for b in range(n_batches):
            seg = a[b * blen:(b + 1) * blen]
            batches.append(_lagged_cov(seg, seg.mean(axis=0), lags))
    if len(batches) >= 2:
        stderr = np.std(np.stack(batches), axis=0, ddof=1) / math.sqrt(len(batches))
    else:
        stderr = np.full((d, d), np.nan)
    return CovarianceEstimate(sigma=sigma, lags=lags, stderr=stderr,
                              n_samples=total)


# ---------------------------------------------------------------------------
# empirical distributions and the local-limit statistic

@dataclass(frozen=True)
class EmpiricalDistribution:
    n: int  # Birkhoff length the samples were taken at
    counts: dict  # integer vector -> count
    samples: int
    lattice: AffineLattice = None  # step-observable support, for coset checks


def empirical_distribution(samples, n: int, lattice: AffineLattice = None):
    """Tally integer sum vectors; enforce the single-coset support law.

    When a step lattice (V, r) is supplied, every observed S_n must lie in
    V + n r; a violation is a hard error, not a statistic.
    """
    arr = np.asarray(samples, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[:, None]
    counts = {}
    for row in arr:
        key = tuple(int(v) for v in row)
        counts[key] = counts.get(key, 0) + 1
    if lattice is not None:
        nr = tuple(n * t for t in lattice.translation)
        expected = lattice.reduce(nr)
        for key in counts:
            if lattice.reduce(key) != expected:
                raise ValueError(
                    f"sample {key} escapes the coset V + {n}r "
                    f"(residue {lattice.reduce(key)} != {expected})")
    return EmpiricalDistribution(n=n, counts=counts, samples=int(arr.shape[0]),
                                 lattice=lattice)


def lclt_normalized_statistic(n, count, samples, cov, covol=1.0, d=2):
    """n^(d/2) * P_hat * (2 pi)^(d/2) * sqrt(det cov) / covol, with binomial CI.

    Converges to the Gaussian density ratio (1 at the center) when the local
    limit law holds.  A zero count reports statistic 0 with a one-sided
    rule-of-three upper bound.
    """
    sigma = getattr(cov, "sigma", cov)
    sigma = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
    det = float(np.linalg.det(sigma))
    if det <= 0.0:
        raise ValueError("degenerate covariance")
    scale = n ** (d / 2.0) * (2.0 * math.pi) ** (d / 2.0) * math.sqrt(det) / covol
    phat = count / samples
    if count == 0:
        return 0.0, (0.0, scale * 3.0 / samples)
    se = math.sqrt(phat * (1.0 - phat) / samples)
    return scale * phat, (scale * (phat - _Z95 * se), scale * (phat + _Z95 * se))


def lclt_point_statistic(dist: EmpiricalDistribution, cov, k):
    """Normalized local-limit statistic at lattice point k (see above)."""
    key = tuple(int(v) for v in k)
    d = len(key)
    covol = 1.0
    if dist.lattice is not None:
        idx = lattice_index(dist.lattice)
        if not math.isfinite(idx):
            raise ValueError("degenerate step lattice")
        covol = float(idx)
    return lclt_normalized_statistic(dist.n, dist.counts.get(key, 0),
                                     dist.samples, cov, covol=covol, d=d)


@dataclass(frozen=True)
class CltComparison:
    ks_stats: tuple  # per-axis Kolmogorov-Smirnov distances
    ks_pvalues: tuple
    cov_ratio: np.ndarray  # empirical covariance over target, entrywise
    max_scaled_dev: float  # max |emp - target| / sqrt(target_ii target_jj)


def clt_compare(samples, cov) -> CltComparison:
    """Compare rescaled sums against the centered normal with covariance cov."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    sigma = getattr(cov, "sigma", cov)
    sigma = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
    d = arr.shape[1]
    ks, pv = [], []
    for j in range(d):
        res = sps.kstest(arr[:, j], "norm", args=(0.0, math.sqrt(sigma[j, j])))
        ks.append(float(res.statistic))
        pv.append(float(res.pvalue))
    emp = np.cov(arr, rowvar=False).reshape(d, d)
    scale = np.sqrt(np.outer(np.diag(sigma), np.diag(sigma)))
    ratio = emp / np.where(scale > 0, sigma, np.nan)
    dev = float(np.max(np.abs(emp - sigma) / scale))
    return CltComparison(ks_stats=tuple(ks), ks_pvalues=tuple(pv),
                         cov_ratio=ratio, max_scaled_dev=dev)


# ---------------------------------------------------------------------------
# recurrence statistics

@dataclass(frozen=True)
class RecurrenceStats:
    """Return-time statistics of an ensemble of lattice walks.

    ``hit_counts[k]`` counts trajectories whose running sum is zero at step
    k; ``first_return[i]`` is trajectory i's first such k (-1 if none);
    ``pair_counts[a, b]`` counts trajectories at zero at both grid times.
    """

    samples: int
    n_steps: int
    hit_counts: np.ndarray
    first_return: np.ndarray
    grid: np.ndarray
    pair_counts: np.ndarray
    guards: int = 0

    def returned_fraction(self, n: int = None) -> float:
        n = self.n_steps if n is None else n
        ok = (self.first_return > 0) & (self.first_return <= n)
        return float(np.count_nonzero(ok)) / self.samples

    def sum_pa(self, n: int = None) -> float:
        n = self.n_steps if n is None else n
        return float(self.hit_counts[1:n + 1].sum()) / self.samples

    def lamperti_ratio(self) -> float:
        """sum_{a,b} P(A_a and A_b) / (sum_a P(A_a))^2 over the grid times."""
        p = self.hit_counts[self.grid] / self.samples
        denom = float(p.sum()) ** 2
        if denom == 0.0:
            return math.nan
        num = float(self.pair_counts.sum()) / self.samples
        return num / denom

    def cumulative_curve(self) -> np.ndarray:
        return np.cumsum(self.hit_counts) / self.samples


def _pair_counts_from_masks(masks, n_grid):
    bits = ((masks[:, None] >> np.arange(n_grid, dtype=np.uint64)) &
            np.uint64(1)).astype(np.int64)
    return bits.T @ bits


def default_return_grid(n_steps, points=24):
    """Roughly geometric subsample of [1, n_steps] for pair statistics."""
    g = np.unique(np.geomspace(1, n_steps, points).astype(np.int64))
    return g[g >= 1]


def log_fit(ns, values):
    """Least-squares fit value ~ slope * ln(n) + intercept; returns (slope, r2)."""
    x = np.log(np.asarray(ns, dtype=np.float64))
    y = np.asarray(values, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else math.nan
    return float(slope), float(r2)


def ssrw_lamperti_ratio_exact(n_steps, grid=None, d: int = 2) -> float:
    """Exact walk version of the pair-sum ratio, via independent increments."""
    if grid is None:
        grid = default_return_grid(n_steps)
    grid = np.asarray(grid)
    p = np.array([float(ssrw_exact(int(k), d)) for k in grid])
    num = 0.0
    for a, ka in enumerate(grid):
        for kb in grid:
            lo, hi = min(int(ka), int(kb)), max(int(ka), int(kb))
            num += float(ssrw_exact(lo, d)) * float(ssrw_exact(hi - lo, d))
    denom = float(p.sum()) ** 2
    return num / denom


# ---------------------------------------------------------------------------
# joint returns

@dataclass(frozen=True)
class JointReturnStatistic:
    ratio: float  # P(A_m and A_n) / (P(A_m) P(A_n))
    ci: tuple  # delta-method 95% interval
    p_m: float
    p_n: float
    p_both: float
    samples: int


def joint_return_statistic(count_m, count_n, count_both, samples) -> JointReturnStatistic:
    """Factorization ratio of joint returns with a delta-method interval."""
    if count_m == 0 or count_n == 0:
        raise ValueError("zero denominator: no returns observed at a marginal time")
    pm, pn, pb = (count_m / samples, count_n / samples, count_both / samples)
    ratio = pb / (pm * pn)
    g = np.array([1.0 / (pm * pn), -pb / (pm * pm * pn), -pb / (pm * pn * pn)])
    cov = np.array([
        [pb * (1 - pb), pb * (1 - pm), pb * (1 - pn)],
        [pb * (1 - pm), pm * (1 - pm), pb - pm * pn],
        [pb * (1 - pn), pb - pm * pn, pn * (1 - pn)],
    ])
    var = float(g @ cov @ g) / samples
    half = _Z95 * math.sqrt(max(var, 0.0))
    return JointReturnStatistic(ratio=float(ratio), ci=(ratio - half, ratio + half),
                                p_m=pm, p_n=pn, p_both=pb, samples=samples)


def ssrw_joint_exact_ratio(m: int, n: int, d: int = 2) -> float:
    """Exact factorization ratio for the walk: P(W_{n-m}=0) / P(W_n=0)."""
    return float(ssrw_exact(n - m, d) / ssrw_exact(n, d))


# ---------------------------------------------------------------------------
# billiard ensemble drivers

_BATCH = 1 << 20


def _geometry(cfg: ScattererConfig):
    validate_config(cfg)
    centers, radii = cfg.arrays()
    return centers, radii, float(cfg.tau_max_hint)


def billiard_zero_counts(cfg, seed, n_traj, checkpoints):
    """Counts of S_n = 0 at each checkpoint over a fresh ensemble."""
    centers, radii, cap = _geometry(cfg)
    cps = np.asarray(sorted(int(c) for c in checkpoints), dtype=np.int64)
    counts = np.zeros(len(cps), dtype=np.int64)
    guards = 0
    done = 0
    while done < n_traj:
        b = min(_BATCH, n_traj - done)
        disks, thetas, phis = mu1_initial_conditions(cfg, seed, done, b)
        c, g = _kernels.ensemble_zero_counts(centers, radii, cap,
                                             disks, thetas, phis, cps)
        counts += c.sum(axis=0)
        guards += int(g.sum())
        done += b
    return counts, guards


def billiard_checkpoint_sums(cfg, seed, n_traj, checkpoints):
    """Per-trajectory displacement sums at each checkpoint, shape (N, C, 2)."""
    centers, radii, cap = _geometry(cfg)
    cps = np.asarray(sorted(int(c) for c in checkpoints), dtype=np.int64)
    out = np.empty((n_traj, len(cps), 2), dtype=np.int64)
    guards = 0
    done = 0
    while done < n_traj:
        b = min(_BATCH, n_traj - done)
        disks, thetas, phis = mu1_initial_conditions(cfg, seed, done, b)
        sums, status = _kernels.ensemble_checkpoint_sums(centers, radii, cap,
                                                         disks, thetas, phis, cps)
        out[done:done + b] = sums
        guards += int(np.count_nonzero(status))
        done += b
    return out, guards


def billiard_joint_counts(cfg, seed, n_traj, m, n):
    """(count_m, count_n, count_both) for returns at collision times m < n."""
    if not 0 < m < n:
        raise ValueError("need 0 < m < n")
    cm = cn = cb = 0
    done = 0
    while done < n_traj:
        b = min(_BATCH, n_traj - done)
        sums, _ = billiard_checkpoint_sums_batch(cfg, seed, done, b, (m, n))
        zm = (sums[:, 0, 0] == 0) & (sums[:, 0, 1] == 0)
        zn = (sums[:, 1, 0] == 0) & (sums[:, 1, 1] == 0)
        cm += int(np.count_nonzero(zm))
        cn += int(np.count_nonzero(zn))
        cb += int(np.count_nonzero(zm & zn))
        done += b
    return cm, cn, cb


def billiard_checkpoint_sums_batch(cfg, seed, start, count, checkpoints):
    """One batch of checkpoint sums starting at trajectory index ``start``."""
    centers, radii, cap = _geometry(cfg)
    cps = np.asarray(sorted(int(c) for c in checkpoints), dtype=np.int64)
    disks, thetas, phis = mu1_initial_conditions(cfg, seed, start, count)
    return _kernels.ensemble_checkpoint_sums(centers, radii, cap,
                                             disks, thetas, phis, cps)


def billiard_return_stats(cfg, seed, n_traj, n_steps, grid=None) -> RecurrenceStats:
    """Recurrence statistics of a billiard ensemble (per-step zero hits)."""
    centers, radii, cap = _geometry(cfg)
    if grid is None:
        grid = default_return_grid(n_steps)
    grid = np.asarray(grid, dtype=np.int64)
    if len(grid) > 64:
        raise ValueError("pair grid limited to 64 points")
    hit_counts = np.zeros(n_steps + 1, dtype=np.int64)
    firsts = []
    pair = np.zeros((len(grid), len(grid)), dtype=np.int64)
    guards = 0
    done = 0
    while done < n_traj:
        b = min(_BATCH, n_traj - done)
        disks, thetas, phis = mu1_initial_conditions(cfg, seed, done, b)
        hits, g, first, mask = _kernels.ensemble_return_stats(
            centers, radii, cap, disks, thetas, phis, n_steps, grid)
        hit_counts += hits.sum(axis=0)
        guards += int(g.sum())
        firsts.append(first)
        pair += _pair_counts_from_masks(mask, len(grid))
        done += b
    return RecurrenceStats(samples=n_traj, n_steps=n_steps,
                           hit_counts=hit_counts,
                           first_return=np.concatenate(firsts),
                           grid=grid, pair_counts=pair, guards=guards)


def billiard_kappa_stream(cfg, seed, length, burn_in=1000):
    """Stationary displacement stream from one long orbit (post burn-in)."""
    centers, radii, cap = _geometry(cfg)
    disks, thetas, phis = mu1_initial_conditions(cfg, seed, 0, 1)
    out, status = _kernels.trajectory_kappa_series(
        centers, radii, cap, int(disks[0]), float(thetas[0]), float(phis[0]),
        length, burn_in)
    if status != 0:
        raise HorizonGuardError("horizon guard fired while collecting the stream")
    return out


def billiard_final_states(cfg, seed, n_traj, n):
    """(disk, theta, phi) arrays after n collisions, for invariance tests."""
    centers, radii, cap = _geometry(cfg)
    disks, thetas, phis = mu1_initial_conditions(cfg, seed, 0, n_traj)
    return _kernels.ensemble_final_states(centers, radii, cap,
                                          disks, thetas, phis, n)
