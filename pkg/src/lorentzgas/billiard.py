"""Planar periodic Lorentz gas with circular scatterers and finite horizon.

The scatterer set is a Z^2-periodic array of disjoint disks with centers in
the unit cell.  The dynamics exposed here is the collision-to-collision
(Poincare) map on outgoing boundary states, lifted to the plane through an
integer cell index.  Per collision we record the planar displacement ``psi``,
its integer cell part ``kappa`` (the lattice-valued observable whose running
sums realize the random-walk picture), and the flight length ``tau``.

The fundamental-cell convention is the coordinate-wise floor of the lifted
position.  Under a finite horizon no straight line misses every scatterer, so
no cubic cell boundary can avoid the disks entirely; the floor convention
keeps ``kappa`` defined everywhere and continuous off a null set, which is
all the statistics need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import GeometryError, HorizonGuardError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ScattererConfig:
    """Disks (cx, cy, radius) with centers in [0,1)^2, plus a flight cap.

    ``tau_max_hint`` is the runtime guard: any traced flight longer than this
    aborts, signalling an infinite horizon or a bad configuration.
    """

    disks: tuple
    tau_max_hint: float = 5.0

    def arrays(self):
        centers = np.array([(d[0], d[1]) for d in self.disks], dtype=np.float64)
        radii = np.array([d[2] for d in self.disks], dtype=np.float64)
        return centers, radii


# Smallest two-disk configuration with disjoint translates and finite horizon;
# fixed for all long-run statistics in the test suite.
REFERENCE_CONFIG = ScattererConfig(disks=((0.0, 0.0, 0.4), (0.5, 0.5, 0.2)),
                                   tau_max_hint=5.0)


@dataclass(frozen=True)
class BoundaryPoint:
    """Outgoing collision state: which disk, where on it, in which cell.

    ``theta`` in [0, 2pi) locates the point on the circle; ``phi`` in
    (-pi/2, pi/2) is the outgoing angle from the inward normal; ``cell`` is
    the integer lift.
    """

    disk_index: int
    theta: float
    phi: float
    cell: tuple = (0, 0)


@dataclass(frozen=True)
class FlightRecord:
    psi: tuple  # planar displacement to the next collision
    kappa: tuple  # integer cell displacement
    tau: float  # flight length (= |psi|: unit speed)
    next: BoundaryPoint


@dataclass(frozen=True)
class HorizonVerdict:
    finite: bool
    witness_direction: tuple = None  # primitive direction of an open corridor
    uncovered_offset: tuple = None  # offset interval the scatterers miss


@dataclass(frozen=True)
class Trajectory:
    start: BoundaryPoint
    records: tuple
    s_kappa: np.ndarray  # running sums, shape (n+1, 2), S_0 = 0
    s_psi: np.ndarray


def validate_config(cfg: ScattererConfig) -> None:
    """Check radii positive and all periodic translates pairwise disjoint."""
    if not cfg.disks:
        raise GeometryError("no scatterers")
    if cfg.tau_max_hint <= 0:
        raise GeometryError("nonpositive flight cap")
    for i, (cx, cy, r) in enumerate(cfg.disks):
        if r <= 0:
            raise GeometryError(f"nonpositive radius: disk {i} has r = {r}")
        if not (0.0 <= cx < 1.0 and 0.0 <= cy < 1.0):
            raise GeometryError(f"disk {i} center {(cx, cy)} outside [0,1)^2")
    n = len(cfg.disks)
    for i in range(n):
        xi, yi, ri = cfg.disks[i]
        for j in range(i, n):
            xj, yj, rj = cfg.disks[j]
            for ox in (-1, 0, 1):
                for oy in (-1, 0, 1):
                    if i == j and ox == 0 and oy == 0:
                        continue
                    d = math.hypot(xi - xj - ox, yi - yj - oy)
                    if d <= ri + rj:
                        raise GeometryError(
                            f"overlapping scatterers: disks {i} and {j} at "
                            f"translate offset {(ox, oy)} (distance {d:.6g} "
                            f"<= {ri + rj:.6g})")


def _primitive_directions(min_radius):
    """Primitive directions whose line-family spacing exceeds 2*min_radius.

    Spacing of the lattice line family with primitive direction (p, q) is
    1/sqrt(p^2 + q^2); families at least as fine as the smallest disk
    diameter are blocked by any single disk's translates, so only these
    finitely many directions need an explicit corridor check.
    """
    limit = 1.0 / (2.0 * min_radius) ** 2
    pmax = int(math.isqrt(int(limit))) + 1
    dirs = []
    for p in range(0, pmax + 1):
        for q in range(-pmax, pmax + 1):
            if p == 0 and q != 1:
                continue
            if p > 0 and math.gcd(p, abs(q)) != 1:
                continue
            if p * p + q * q >= limit or (p == 0 and q == 0):
                continue
            dirs.append((p, q))
    dirs.sort(key=lambda d: (d[0] ** 2 + d[1] ** 2, abs(d[1]), -d[0]))
    return dirs


def finite_horizon_check(cfg: ScattererConfig) -> HorizonVerdict:
    """Decide whether every infinite line meets a scatterer.

    For each direction needing an explicit check, project one period of disk
    centers onto the unit normal and test that the radius-width intervals
    cover the offset circle of circumference 1/sqrt(p^2+q^2).  The first
    uncovered gap is returned as a witness.
    """
    validate_config(cfg)
    radii = [d[2] for d in cfg.disks]
    for p, q in _primitive_directions(min(radii)):
        norm = math.hypot(p, q)
        spacing = 1.0 / norm
        if any(2.0 * r >= spacing for r in radii):
            continue  # one disk's own translate family already covers
        nx, ny = -q / norm, p / norm
        intervals = []
        for cx, cy, r in cfg.disks:
            mid = (cx * nx + cy * ny) % spacing
            intervals.append(((mid - r) % spacing, 2.0 * r))
        intervals.sort()
        start, width = intervals[0]
        covered = start + width
        for k in range(1, 2 * len(intervals)):
            a, w = intervals[k % len(intervals)]
            a += spacing * (k // len(intervals))
            if a > covered + 1e-15:
                return HorizonVerdict(
                    finite=False,
                    witness_direction=(p, q),
                    uncovered_offset=(covered % spacing, a % spacing),
                )
            covered = max(covered, a + w)
            if covered >= start + spacing:
                break
        else:
            return HorizonVerdict(finite=False, witness_direction=(p, q),
                                  uncovered_offset=(covered % spacing,
                                                    (start + spacing) % spacing))
    return HorizonVerdict(finite=True)


# ---------------------------------------------------------------------------
# invariant-measure sampling

_SUBSTREAM_SLOTS = 4  # uniforms reserved per trajectory index


def _phi_from_uniform(u):
    # u = 0 would hit the closed endpoint -pi/2; nudge to keep phi open
    return math.asin(2.0 * max(u, 2.0 ** -53) - 1.0)


def sample_mu1(cfg: ScattererConfig, rng) -> BoundaryPoint:
    """One draw from the collision measure: weight cos(phi) d(arclength) d(phi).

    Disk chosen proportional to circumference, boundary angle uniform, and
    phi = arcsin(2u - 1), the inverse CDF of the cos(phi)/2 density.
    """
    radii = np.array([d[2] for d in cfg.disks])
    cum = np.cumsum(radii)
    u = rng.random(3)
    disk = int(np.searchsorted(cum, u[0] * cum[-1], side="right"))
    disk = min(disk, len(radii) - 1)
    return BoundaryPoint(disk_index=disk,
                         theta=TWO_PI * u[1],
                         phi=_phi_from_uniform(u[2]),
                         cell=(0, 0))


def mu1_initial_conditions(cfg: ScattererConfig, seed, start, count):
    """Vectorized collision-measure draws for trajectory indices [start, start+count).

    Counter-based substreams: trajectory i always consumes Philox counter
    block i (one counter increment yields exactly the four uniforms budgeted
    per trajectory), so the draw depends only on (seed, i) no matter how the
    ensemble is batched or scheduled.
    """
    bitgen = np.random.Philox(key=np.uint64(seed))
    bitgen.advance(int(start))  # one 4-output counter block per trajectory
    u = np.random.Generator(bitgen).random((int(count), _SUBSTREAM_SLOTS))
    radii = np.array([d[2] for d in cfg.disks])
    cum = np.cumsum(radii)
    disks = np.minimum(np.searchsorted(cum, u[:, 0] * cum[-1], side="right"),
                       len(radii) - 1).astype(np.int64)
    thetas = TWO_PI * u[:, 1]
    phis = np.arcsin(2.0 * np.maximum(u[:, 2], 2.0 ** -53) - 1.0)
    return disks, thetas, phis


# ---------------------------------------------------------------------------
# the billiard map

def position_in_cell(cfg: ScattererConfig, x: BoundaryPoint):
    """In-cell coordinates of the boundary point (lifted position minus cell)."""
    cx, cy, r = cfg.disks[x.disk_index]
    px = cx + r * math.cos(x.theta)
    py = cy + r * math.sin(x.theta)
    return (px - math.floor(px), py - math.floor(py))


def lifted_position(cfg: ScattererConfig, x: BoundaryPoint):
    px, py = position_in_cell(cfg, x)
    return (x.cell[0] + px, x.cell[1] + py)


def billiard_map(cfg: ScattererConfig, x: BoundaryPoint) -> FlightRecord:
    """One collision: exact ray tracing through the periodic scatterer array.

    Raises ``HorizonGuardError`` when the traced flight exceeds the
    configured cap.
    """
    if not -math.pi / 2 < x.phi < math.pi / 2:
        raise ValueError(f"phi = {x.phi} outside (-pi/2, pi/2)")
    centers, radii = cfg.arrays()
    d2, th2, ph2, kx, ky, psix, psiy, tau, _ = _kernels.step(
        centers, radii, cfg.tau_max_hint, x.disk_index, x.theta, x.phi)
    if d2 < 0:
        raise HorizonGuardError(
            f"free flight exceeded tau_max_hint = {cfg.tau_max_hint}")
    nxt = BoundaryPoint(disk_index=int(d2), theta=float(th2), phi=float(ph2),
                        cell=(x.cell[0] + kx, x.cell[1] + ky))
    return FlightRecord(psi=(float(psix), float(psiy)), kappa=(kx, ky),
                        tau=float(tau), next=nxt)


def time_reverse(x: BoundaryPoint) -> BoundaryPoint:
    """Velocity reversal on the section: (theta, phi) -> (theta, -phi)."""
    return BoundaryPoint(x.disk_index, x.theta, -x.phi, x.cell)


def simulate_trajectory(cfg: ScattererConfig, x0: BoundaryPoint, n: int) -> Trajectory:
    """n collisions from x0, with running Birkhoff sums of kappa and psi."""
    if n < 0:
        raise ValueError("n must be >= 0")
    centers, radii = cfg.arrays()
    disks, thetas, phis, cells, kappas, psis, taus, done, status = (
        _kernels.run_trajectory(centers, radii, cfg.tau_max_hint,
                                x0.disk_index, x0.theta, x0.phi,
                                x0.cell[0], x0.cell[1], n))
    if status != 0:
        raise HorizonGuardError(
            f"free flight exceeded tau_max_hint = {cfg.tau_max_hint} "
            f"at step {done}", step=int(done))
    records = []
    for k in range(n):
        nxt = BoundaryPoint(disk_index=int(disks[k]), theta=float(thetas[k]),
                            phi=float(phis[k]),
                            cell=(int(cells[k, 0]), int(cells[k, 1])))
        records.append(FlightRecord(psi=(float(psis[k, 0]), float(psis[k, 1])),
                                    kappa=(int(kappas[k, 0]), int(kappas[k, 1])),
                                    tau=float(taus[k]), next=nxt))
    s_kappa = np.zeros((n + 1, 2), dtype=np.int64)
    s_psi = np.zeros((n + 1, 2), dtype=np.float64)
    if n:
        np.cumsum(kappas, axis=0, out=s_kappa[1:])
        np.cumsum(psis, axis=0, out=s_psi[1:])
    return Trajectory(start=x0, records=tuple(records), s_kappa=s_kappa,
                      s_psi=s_psi)


def cohomology_check(cfg: ScattererConfig, traj: Trajectory) -> float:
    """Max norm over the trajectory of psi - kappa - (in-cell position change).

    The displacement decomposes exactly into its integer cell part plus the
    bounded change of position within the cell; the returned defect is pure
    floating-point noise.
    """
    if not traj.records:
        raise ValueError("trajectory of length >= 1 required")
    worst = 0.0
    x = traj.start
    for rec in traj.records:
        qx, qy = position_in_cell(cfg, x)
        q2x, q2y = position_in_cell(cfg, rec.next)
        worst = max(worst,
                    abs(rec.psi[0] - rec.kappa[0] - (q2x - qx)),
                    abs(rec.psi[1] - rec.kappa[1] - (q2y - qy)))
        x = rec.next
    return worst


def max_cohomology_defect(cfg: ScattererConfig, x0: BoundaryPoint, n: int):
    """Kernel-side defect scan for long runs; returns (cohomology, speed, tau).

    Each entry is the max over n collisions of the corresponding per-step
    defect; raises on horizon guard.
    """
    centers, radii = cfg.arrays()
    coh, speed, tau, status = _kernels.trajectory_defect_scan(
        centers, radii, cfg.tau_max_hint, x0.disk_index, x0.theta, x0.phi, n)
    if status != 0:
        raise HorizonGuardError("horizon guard fired during defect scan")
    return float(coh), float(speed), float(tau)
