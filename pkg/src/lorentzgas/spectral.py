"""Twisted transfer matrices for dyadic systems and their eigenvalue curves.

For a depth-m observable the transfer operator of the doubling map, twisted
by ``exp(i t f)``, maps depth-m piecewise-constant densities to depth-m
piecewise-constant densities *exactly*: the two preimage branches of a dyadic
interval refine the partition.  So the operator is a genuine ``2^m x 2^m``
matrix with no discretization error, and

* the leading eigenvalue ``lambda_t`` is the per-step rate of the
  characteristic function of Birkhoff sums,
* its curvature at ``t = 0`` encodes the drift and limiting variance,
* the set of ``t`` with ``|lambda_t| = 1`` is the dual group of the
  observable's minimal supporting lattice, and
* integrating ``lambda``-power traces against ``exp(-i t k)`` inverts the
  characteristic function into exact point probabilities.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

from .dyadic import DyadicSystem
from .errors import SpectralError

_MOD_TIE = 1e-13
_PHASE_TIE = 1e-9
_UNIT_TOL = 1e-9


@dataclass(frozen=True)
class TwistedMatrix:
    """Matrix of the twisted transfer operator on the depth-m indicator basis."""

    t: float
    entries: np.ndarray


@dataclass(frozen=True)
class SpectralResult:
    t: float
    lam: complex  # leading eigenvalue
    eigvec: np.ndarray  # its eigenfunction on the partition, max-entry normalized
    gap: float  # |lam| minus the second-largest modulus


@dataclass(frozen=True)
class NagaevFit:
    a: float  # drift: slope of Im log lambda_t at 0
    sigma2: float  # limiting variance: -curvature of Re log lambda_t at 0
    residual: float  # max |log lambda_t - quadratic model| over the fit window
    degenerate: bool  # sigma2 below tolerance


@dataclass(frozen=True)
class ArithmeticityReport:
    unit_circle_points: tuple  # t in (-pi, pi] with |lambda_t| on the unit circle
    phases: tuple  # corresponding arguments of lambda_t
    r: int  # single integer with phase(t) = t*r (mod 2pi) at all points
    phase_residual: float  # max deviation from that law
    group_residual: float  # max distance of pairwise sums from the point set


def twisted_matrix(sys: DyadicSystem, t: float) -> TwistedMatrix:
    """Matrix of ``phi -> sum_{y: Ty=x} exp(i t f(y)) phi(y) / 2``.

    Row j (the image cell) receives the two preimage cells ``j0 = j >> 1``
    and ``j1 = j0 + 2^(m-1)``, each with weight ``exp(i t f) / 2``.
    """
    m = sys.depth
    size = 1 << m
    half = size >> 1
    w = np.exp(1j * t * np.asarray(sys.values, dtype=np.float64)) / 2.0
    mat = np.zeros((size, size), dtype=np.complex128)
    rows = np.arange(size)
    j0 = rows >> 1
    mat[rows, j0] += w[j0]
    mat[rows, j0 + half] += w[j0 + half]
    return TwistedMatrix(t=float(t), entries=mat)


def leading_eig(mat: TwistedMatrix, prev_vec=None) -> SpectralResult:
    """Leading eigenvalue by modulus, with deterministic tie handling.

    Candidates whose moduli agree to ``1e-13`` are treated as one eigenvalue
    when their phases also agree; distinct phases at tied moduli raise
    ``SpectralError``.  The eigenvector's global phase is pinned by making
    its largest entry real positive, or aligned with ``prev_vec`` when one
    is supplied (for continuity along a scan in t).
    """
    vals, vecs = np.linalg.eig(mat.entries)
    order = np.argsort(-np.abs(vals), kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    mods = np.abs(vals)
    tied = np.nonzero(mods >= mods[0] - _MOD_TIE)[0]
    top = 0
    # Ties among negligible moduli are harmless; defective zeros carry
    # sqrt(eps)-level eigenvalue noise, so the cutoff sits well above that.
    if len(tied) > 1 and mods[0] > 1e-6:
        units = vals[tied] / mods[tied]  # phase comparison on the circle
        spread = max(abs(u - v) for u in units for v in units)
        if spread > _PHASE_TIE:
            raise SpectralError(
                f"ill-conditioned leading eigenvalue at t={mat.t}: "
                f"moduli within {_MOD_TIE} with distinct phases"
            )
        top = tied[np.argmin(np.abs(np.angle(vals[tied])))]
    lam = complex(vals[top])
    vec = vecs[:, top]
    ip = np.vdot(prev_vec, vec) if prev_vec is not None else 0.0
    if abs(ip) > 1e-12:
        vec = vec * (ip.conjugate() / abs(ip))
    else:
        pivot = vec[int(np.argmax(np.abs(vec)))]
        vec = vec * (pivot.conjugate() / abs(pivot))
    second = mods[1] if len(mods) > 1 else 0.0
    return SpectralResult(t=mat.t, lam=lam, eigvec=vec, gap=float(mods[0] - second))


def eigenvalue_curve(sys: DyadicSystem, ts) -> np.ndarray:
    """Leading eigenvalues along a t-grid, eigenvectors phase-aligned in order."""
    out = np.empty(len(ts), dtype=np.complex128)
    prev = None
    for i, t in enumerate(ts):
        res = leading_eig(twisted_matrix(sys, t), prev_vec=prev)
        out[i] = res.lam
        prev = res.eigvec
    return out


def _log_lam(sys, t):
    if t == 0.0:
        return 0.0 + 0.0j
    return cmath.log(leading_eig(twisted_matrix(sys, t)).lam)


def nagaev_fit(sys: DyadicSystem, t_grid=None) -> NagaevFit:
    """Drift and limiting variance from the eigenvalue curve near t = 0.

    ``a`` is the derivative of ``Im log lambda_t`` and ``sigma2`` the negated
    second derivative of ``Re log lambda_t`` at 0, via Richardson-extrapolated
    central differences on scales h, h/2, h/4.  A degree-4 polynomial fit over
    the supplied grid provides the reported residual (deviation from the
    quadratic model ``i a t - sigma2 t^2 / 2``).
    """
    if t_grid is None:
        h = 0.05
        t_grid = [s * h for s in (-1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0)]
    t_grid = sorted(float(t) for t in t_grid)
    h = max(abs(t) for t in t_grid)
    if h > 0.1 + 1e-15:
        raise ValueError("fit window must satisfy max|t| <= 0.1")
    if h == 0.0:
        raise ValueError("fit window is degenerate")
    for t in t_grid:
        if min(abs(t + u) for u in t_grid) > 1e-12 * max(h, 1.0):
            raise ValueError("t grid must be symmetric about 0")

    def d1(step):  # odd part: drift
        lp, lm = _log_lam(sys, step), _log_lam(sys, -step)
        return (lp - lm).imag / (2.0 * step)

    def d2(step):  # even part: -variance
        lp, lm = _log_lam(sys, step), _log_lam(sys, -step)
        return (lp + lm).real / (step * step)

    def richardson(f):
        a1, a2, a4 = f(h), f(h / 2), f(h / 4)
        r1 = (4.0 * a2 - a1) / 3.0
        r2 = (4.0 * a4 - a2) / 3.0
        return (16.0 * r2 - r1) / 15.0

    a = richardson(d1)
    sigma2 = -richardson(d2)
    # Residual of the quadratic model over the supplied window.
    logs = np.array([_log_lam(sys, t) for t in t_grid])
    ts = np.asarray(t_grid)
    model = 1j * a * ts - 0.5 * sigma2 * ts * ts
    residual = float(np.max(np.abs(logs - model)))
    return NagaevFit(a=float(a), sigma2=float(sigma2), residual=residual,
                     degenerate=sigma2 < 1e-10)


def nagaev_polyfit(sys: DyadicSystem, t_grid=None):
    """(a, sigma2) from a degree-4 polynomial fit of log lambda_t; cross-check."""
    if t_grid is None:
        h = 0.05
        t_grid = np.linspace(-h, h, 17)
    ts = np.asarray(sorted(float(t) for t in t_grid))
    logs = np.array([_log_lam(sys, t) for t in ts])
    coeffs = np.polynomial.polynomial.polyfit(ts, logs, 4)
    return float(coeffs[1].imag), float(-2.0 * coeffs[2].real)


def _char_values(sys: DyadicSystem, n: int, ts: np.ndarray) -> np.ndarray:
    """E[exp(i t S_n)] on a grid, by exact matrix powers of the twisted matrix.

    Binary exponentiation on a (grid, 2^m, 2^m) batch; applying the power to
    the flat density and averaging the cells integrates against Lebesgue.
    """
    m = sys.depth
    size = 1 << m
    half = size >> 1
    vals = np.asarray(sys.values, dtype=np.float64)
    w = np.exp(1j * np.outer(ts, vals)) / 2.0  # (G, 2^m)
    mats = np.zeros((len(ts), size, size), dtype=np.complex128)
    rows = np.arange(size)
    j0 = rows >> 1
    mats[:, rows, j0] += w[:, j0]
    mats[:, rows, j0 + half] += w[:, j0 + half]
    power = np.broadcast_to(np.eye(size, dtype=np.complex128), mats.shape).copy()
    k = n
    while k:
        if k & 1:
            power = power @ mats
        k >>= 1
        if k:
            mats = mats @ mats
    return power.sum(axis=2).mean(axis=1)  # (P_t^n 1), then cell average


def lclt_inversion(sys: DyadicSystem, n: int, k: int, grid_points=None) -> float:
    """P(S_n = k) by inverting the characteristic function on a uniform grid.

    The integrand is a trigonometric polynomial whose frequencies span at most
    ``n * (max f - min f)``, so a uniform grid finer than that width makes the
    Riemann sum exact.  The default grid is ``max(4 (n max|f| + 1), 8 n)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    default = max(4 * (n * sys.max_abs + 1), 8 * n)
    if grid_points is None:
        grid_points = default
    elif grid_points < 8 * n:
        raise ValueError(f"quadrature resolution too coarse: need >= {8 * n} points")
    ts = -np.pi + 2.0 * np.pi * np.arange(grid_points) / grid_points
    ch = _char_values(sys, n, ts)
    p = (np.exp(-1j * ts * k) * ch).mean()
    if abs(p.imag) > 1e-12:
        raise SpectralError(f"inversion returned non-real probability {p}")
    return float(min(max(p.real, 0.0), 1.0))


def lclt_inversion_table(sys: DyadicSystem, n: int) -> dict:
    """P(S_n = k) for every k in the reachable range, sharing one grid."""
    if n < 1:
        raise ValueError("n must be >= 1")
    grid_points = max(4 * (n * sys.max_abs + 1), 8 * n)
    ts = -np.pi + 2.0 * np.pi * np.arange(grid_points) / grid_points
    ch = _char_values(sys, n, ts)
    lo, hi = n * min(sys.values), n * max(sys.values)
    ks = np.arange(lo, hi + 1)
    phase = np.exp(-1j * np.outer(ks, ts))
    ps = (phase * ch).mean(axis=1)
    if np.max(np.abs(ps.imag)) > 1e-12:
        raise SpectralError("inversion returned non-real probabilities")
    return {int(k): float(min(max(p, 0.0), 1.0)) for k, p in zip(ks, ps.real)}


def _max_modulus(sys, t):
    return float(np.max(np.abs(np.linalg.eigvals(twisted_matrix(sys, t).entries))))


def _refine_peak(sys, lo, hi, iters=60):
    """Ternary search for the maximum of |lambda_t| on [lo, hi]."""
    f = lambda t: _max_modulus(sys, t)
    for _ in range(iters):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if f(m1) < f(m2):
            lo = m1
        else:
            hi = m2
    t = 0.5 * (lo + hi)
    return t, f(t)


def max_modulus_on_interval(sys: DyadicSystem, t_lo: float, t_hi: float,
                            resolution: int = 2048) -> float:
    """sup of the spectral radius of the twisted matrix over [t_lo, t_hi].

    Grid scan plus local ternary refinement around every interior local
    maximum and both endpoints.
    """
    ts = np.linspace(t_lo, t_hi, resolution)
    mods = np.array([_max_modulus(sys, t) for t in ts])
    best = max(mods[0], mods[-1])
    step = ts[1] - ts[0]
    interior = np.nonzero((mods[1:-1] >= mods[:-2]) & (mods[1:-1] >= mods[2:]))[0] + 1
    for i in interior:
        _, v = _refine_peak(sys, ts[i] - step, ts[i] + step, iters=40)
        best = max(best, v)
    return best


def _wrap(t):
    """Reduce to the half-open circle (-pi, pi].

    Points within the refinement precision of the -pi boundary snap to the
    canonical +pi representative.
    """
    out = (t + np.pi) % (2.0 * np.pi) - np.pi
    if out <= -np.pi + 1e-7:
        out = np.pi
    return out


def arithmeticity_scan(sys: DyadicSystem, resolution: int = 512) -> ArithmeticityReport:
    """All t in (-pi, pi] where the twisted matrix has a unit-modulus eigenvalue.

    Scans the circle, refines each candidate peak, keeps points with
    ``|lambda_t| >= 1 - 1e-9``, and checks the two structural facts: the
    points form a group under addition mod 2pi, and their eigenvalue phases
    follow ``phase(t) = t * r`` for a single integer r.
    """
    if resolution < 64:
        raise ValueError("resolution must be >= 64")
    ts = -np.pi + 2.0 * np.pi * np.arange(resolution) / resolution
    mods = np.array([_max_modulus(sys, t) for t in ts])
    step = 2.0 * np.pi / resolution
    points = [0.0]
    cand = np.nonzero(mods >= 1.0 - 1e-6)[0]
    # cluster adjacent candidate indices on the circle
    clusters = []
    for i in cand:
        if clusters and (i - clusters[-1][-1]) % resolution <= 1:
            clusters[-1].append(i)
        else:
            clusters.append([i])
    if len(clusters) > 1 and (clusters[0][0] - clusters[-1][-1]) % resolution <= 1:
        clusters[0] = clusters.pop() + clusters[0]
    for cl in clusters:
        mid = ts[cl[len(cl) // 2]]
        t_star, mod = _refine_peak(sys, mid - step, mid + step)
        t_star = _wrap(t_star)
        if mod >= 1.0 - _UNIT_TOL:
            if min(abs(_wrap(t_star - p)) for p in points) > 1e-7:
                points.append(t_star)
    points = sorted(points)
    phases = [float(np.angle(leading_eig(twisted_matrix(sys, t)).lam)) for t in points]
    # group closure: pairwise sums stay in the set
    group_residual = 0.0
    for a in points:
        for b in points:
            s = _wrap(a + b)
            group_residual = max(group_residual,
                                 min(abs(_wrap(s - p)) for p in points))
    # single integer r with phase(t) = t r (mod 2pi)
    q = len(points)
    if q == 1:
        r, phase_residual = 0, abs(phases[0])
    else:
        gen = min(p for p in points if p > 1e-9)
        gen_phase = phases[points.index(gen)]
        q_est = max(int(round(2.0 * np.pi / gen)), 1)
        r = int(round(gen_phase / gen)) % q_est
        phase_residual = max(abs(_wrap(ph - t * r)) for t, ph in zip(points, phases))
    return ArithmeticityReport(
        unit_circle_points=tuple(points),
        phases=tuple(phases),
        r=r,
        phase_residual=float(phase_residual),
        group_residual=float(group_residual),
    )
