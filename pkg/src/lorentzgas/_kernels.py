"""Compiled inner loops for the periodic Lorentz gas.

Geometry conventions: a boundary state is (disk index, boundary angle theta,
outgoing angle phi from the inward normal, integer cell).  The in-cell
position is ``frac(center + r * (cos theta, sin theta))`` and the outgoing
unit velocity is ``(cos(theta + phi), sin(theta + phi))``.  Free flights are
traced in coordinates local to the current cell, so float precision is
uniform no matter how far the lifted trajectory has wandered.

Ray tracing marches the cell grid (digital differential analyzer) and tests
scatterer copies centered in the 3x3 neighborhood of every visited cell;
since every radius is < 1/2 this candidate set is sufficient.  The march
stops once the next cell boundary lies beyond the best hit found, or beyond
the configured flight cap (the finite-horizon guard).

Parallel ensemble kernels fan trajectories over a fixed number of chunks
(independent of the thread count) and either write per-trajectory slots or
accumulate per-chunk integer counters; callers merge in chunk order, so
results are bit-identical for any ``--threads`` setting.
"""

import numpy as np
from numba import njit, prange

TANGENT_TOL = 1e-12  # ray-circle discriminant at or below this is a miss
HIT_EPS = 1e-12  # minimum admissible flight length (excludes the launch point)
N_CHUNKS = 256

TWO_PI = 2.0 * np.pi
_BIG = 1e300


@njit(cache=True)
def _ray_disk(px, py, vx, vy, cx, cy, r):
    """Smallest admissible s with |p + s v - c| = r, or -1.0 for a miss."""
    dx = cx - px
    dy = cy - py
    b = vx * dx + vy * dy
    if b <= 0.0:
        return -1.0
    c = dx * dx + dy * dy - r * r
    disc = b * b - c
    if disc <= TANGENT_TOL:
        return -1.0
    s = b - np.sqrt(disc)
    if s <= HIT_EPS:
        return -1.0
    return s


@njit(cache=True)
def _test_cell(centers, radii, px, py, vx, vy, ox, oy, best, bj, bzx, bzy):
    """Update the best hit with every scatterer copy centered in cell (ox, oy)."""
    for j in range(centers.shape[0]):
        s = _ray_disk(px, py, vx, vy, centers[j, 0] + ox, centers[j, 1] + oy,
                      radii[j])
        if 0.0 < s < best:
            best = s
            bj = j
            bzx = ox
            bzy = oy
    return best, bj, bzx, bzy


@njit(cache=True)
def _flight(centers, radii, cap, px, py, vx, vy):
    """Trace the ray from (px, py) in [0,1)^2; return (s, disk, zx, zy).

    (zx, zy) is the integer offset of the hit copy's center relative to the
    start cell.  disk == -1 signals the horizon guard: no hit within ``cap``.
    """
    best = _BIG
    bj = -1
    bzx = 0
    bzy = 0
    for ox in range(-1, 2):
        for oy in range(-1, 2):
            best, bj, bzx, bzy = _test_cell(centers, radii, px, py, vx, vy,
                                            ox, oy, best, bj, bzx, bzy)
    cx = 0
    cy = 0
    if vx > 0.0:
        stepx = 1
        tdx = 1.0 / vx
        tmx = (1.0 - px) / vx
    elif vx < 0.0:
        stepx = -1
        tdx = -1.0 / vx
        tmx = px / (-vx)
    else:
        stepx = 0
        tdx = _BIG
        tmx = _BIG
    if vy > 0.0:
        stepy = 1
        tdy = 1.0 / vy
        tmy = (1.0 - py) / vy
    elif vy < 0.0:
        stepy = -1
        tdy = -1.0 / vy
        tmy = py / (-vy)
    else:
        stepy = 0
        tdy = _BIG
        tmy = _BIG
    guard_iters = int(2.0 * (cap + 4.0)) + 8
    for _ in range(guard_iters):
        tnext = tmx if tmx < tmy else tmy
        if tnext >= best or tnext > cap:
            break
        if tmx <= tmy:
            cx += stepx
            tmx += tdx
            for dy in range(-1, 2):
                best, bj, bzx, bzy = _test_cell(centers, radii, px, py, vx, vy,
                                                cx + stepx, cy + dy,
                                                best, bj, bzx, bzy)
        else:
            cy += stepy
            tmy += tdy
            for dx in range(-1, 2):
                best, bj, bzx, bzy = _test_cell(centers, radii, px, py, vx, vy,
                                                cx + dx, cy + stepy,
                                                best, bj, bzx, bzy)
    if best <= cap:
        return best, bj, bzx, bzy
    return -1.0, -1, 0, 0


@njit(cache=True)
def step(centers, radii, cap, disk, theta, phi):
    """One collision of the billiard map.

    Returns (disk', theta', phi', kappa_x, kappa_y, psi_x, psi_y, tau,
    speed_defect); disk' == -1 signals the horizon guard.
    """
    r = radii[disk]
    ux = np.cos(theta)
    uy = np.sin(theta)
    x0 = centers[disk, 0] + r * ux
    y0 = centers[disk, 1] + r * uy
    px = x0 - np.floor(x0)
    py = y0 - np.floor(y0)
    vx = np.cos(theta + phi)
    vy = np.sin(theta + phi)
    s, j, zx, zy = _flight(centers, radii, cap, px, py, vx, vy)
    if j < 0:
        return -1, 0.0, 0.0, 0, 0, 0.0, 0.0, 0.0, 0.0
    hx = px + s * vx
    hy = py + s * vy
    kx = int(np.floor(hx))
    ky = int(np.floor(hy))
    nx = hx - (centers[j, 0] + zx)
    ny = hy - (centers[j, 1] + zy)
    nn = np.sqrt(nx * nx + ny * ny)
    nx /= nn
    ny /= nn
    dot = vx * nx + vy * ny
    wx = vx - 2.0 * dot * nx
    wy = vy - 2.0 * dot * ny
    wn = np.sqrt(wx * wx + wy * wy)
    speed_defect = abs(wn - 1.0)
    wx /= wn  # renormalize: keeps |v| = 1 over arbitrarily long runs
    wy /= wn
    th2 = np.arctan2(ny, nx)
    if th2 < 0.0:
        th2 += TWO_PI
    if th2 >= TWO_PI:
        th2 = 0.0
    ph2 = np.arctan2(nx * wy - ny * wx, nx * wx + ny * wy)
    return j, th2, ph2, kx, ky, hx - px, hy - py, s, speed_defect


@njit(cache=True)
def run_trajectory(centers, radii, cap, disk, theta, phi, cx, cy, n):
    """n collisions with full per-step records; returns (..., n_done, status)."""
    disks = np.empty(n, np.int64)
    thetas = np.empty(n, np.float64)
    phis = np.empty(n, np.float64)
    cells = np.empty((n, 2), np.int64)
    kappas = np.empty((n, 2), np.int64)
    psis = np.empty((n, 2), np.float64)
    taus = np.empty(n, np.float64)
    for k in range(n):
        d2, th2, ph2, kx, ky, psix, psiy, tau, _ = step(
            centers, radii, cap, disk, theta, phi)
        if d2 < 0:
            return disks, thetas, phis, cells, kappas, psis, taus, k, 1
        cx += kx
        cy += ky
        disks[k] = d2
        thetas[k] = th2
        phis[k] = ph2
        cells[k, 0] = cx
        cells[k, 1] = cy
        kappas[k, 0] = kx
        kappas[k, 1] = ky
        psis[k, 0] = psix
        psis[k, 1] = psiy
        taus[k] = tau
        disk, theta, phi = d2, th2, ph2
    return disks, thetas, phis, cells, kappas, psis, taus, n, 0


@njit(cache=True)
def trajectory_kappa_series(centers, radii, cap, disk, theta, phi, n, burn):
    """Integer displacement stream of one long orbit, after ``burn`` steps."""
    out = np.empty((n, 2), np.int64)
    for _ in range(burn):
        disk, theta, phi, kx, ky, _, _, _, _ = step(
            centers, radii, cap, disk, theta, phi)
        if disk < 0:
            return out, 1
    for k in range(n):
        disk, theta, phi, kx, ky, _, _, _, _ = step(
            centers, radii, cap, disk, theta, phi)
        if disk < 0:
            return out, 1
        out[k, 0] = kx
        out[k, 1] = ky
    return out, 0


@njit(cache=True)
def trajectory_guard_scan(centers, radii, cap, disk, theta, phi, n):
    """Longest observed flight over n collisions; status 1 if the guard fired."""
    max_tau = 0.0
    for k in range(n):
        disk, theta, phi, _, _, _, _, tau, _ = step(
            centers, radii, cap, disk, theta, phi)
        if disk < 0:
            return max_tau, k, 1
        if tau > max_tau:
            max_tau = tau
    return max_tau, n, 0


@njit(cache=True)
def trajectory_defect_scan(centers, radii, cap, disk, theta, phi, n):
    """Max per-step defects over n collisions.

    Returns (cohomology defect, speed defect, |tau - |psi|| defect, status).
    The cohomology defect is |psi - kappa - (in-cell position difference)|,
    which an exact computation makes vanish identically.
    """
    r = radii[disk]
    x0 = centers[disk, 0] + r * np.cos(theta)
    y0 = centers[disk, 1] + r * np.sin(theta)
    px = x0 - np.floor(x0)
    py = y0 - np.floor(y0)
    max_coh = 0.0
    max_speed = 0.0
    max_tau = 0.0
    for k in range(n):
        d2, th2, ph2, kx, ky, psix, psiy, tau, sp = step(
            centers, radii, cap, disk, theta, phi)
        if d2 < 0:
            return max_coh, max_speed, max_tau, 1
        r2 = radii[d2]
        qx = centers[d2, 0] + r2 * np.cos(th2)
        qy = centers[d2, 1] + r2 * np.sin(th2)
        q2x = qx - np.floor(qx)
        q2y = qy - np.floor(qy)
        dx = abs(psix - kx - (q2x - px))
        dy = abs(psiy - ky - (q2y - py))
        if dx > max_coh:
            max_coh = dx
        if dy > max_coh:
            max_coh = dy
        if sp > max_speed:
            max_speed = sp
        terr = abs(tau - np.sqrt(psix * psix + psiy * psiy))
        if terr > max_tau:
            max_tau = terr
        px, py = q2x, q2y
        disk, theta, phi = d2, th2, ph2
    return max_coh, max_speed, max_tau, 0


@njit(cache=True, parallel=True)
def ensemble_zero_counts(centers, radii, cap, disk0, th0, ph0, checkpoints):
    """Counts of trajectories with zero net displacement at each checkpoint.

    Per-chunk integer accumulators; merge is done by the caller in chunk
    order.  Returns (counts[N_CHUNKS, n_checkpoints], guards[N_CHUNKS]).
    """
    n_traj = disk0.shape[0]
    n_cp = checkpoints.shape[0]
    n_max = checkpoints[n_cp - 1]
    counts = np.zeros((N_CHUNKS, n_cp), np.int64)
    guards = np.zeros(N_CHUNKS, np.int64)
    chunk = (n_traj + N_CHUNKS - 1) // N_CHUNKS
    for c in prange(N_CHUNKS):
        lo = c * chunk
        hi = min(n_traj, lo + chunk)
        for i in range(lo, hi):
            disk = disk0[i]
            theta = th0[i]
            phi = ph0[i]
            sx = 0
            sy = 0
            ci = 0
            for k in range(1, n_max + 1):
                disk, theta, phi, kx, ky, _, _, _, _ = step(
                    centers, radii, cap, disk, theta, phi)
                if disk < 0:
                    guards[c] += 1
                    break
                sx += kx
                sy += ky
                if ci < n_cp and k == checkpoints[ci]:
                    if sx == 0 and sy == 0:
                        counts[c, ci] += 1
                    ci += 1
    return counts, guards


@njit(cache=True, parallel=True)
def ensemble_checkpoint_sums(centers, radii, cap, disk0, th0, ph0, checkpoints):
    """Per-trajectory net displacements at each checkpoint (slot writes)."""
    n_traj = disk0.shape[0]
    n_cp = checkpoints.shape[0]
    n_max = checkpoints[n_cp - 1]
    sums = np.zeros((n_traj, n_cp, 2), np.int64)
    status = np.zeros(n_traj, np.int8)
    chunk = (n_traj + N_CHUNKS - 1) // N_CHUNKS
    for c in prange(N_CHUNKS):
        lo = c * chunk
        hi = min(n_traj, lo + chunk)
        for i in range(lo, hi):
            disk = disk0[i]
            theta = th0[i]
            phi = ph0[i]
            sx = 0
            sy = 0
            ci = 0
            for k in range(1, n_max + 1):
                disk, theta, phi, kx, ky, _, _, _, _ = step(
                    centers, radii, cap, disk, theta, phi)
                if disk < 0:
                    status[i] = 1
                    break
                sx += kx
                sy += ky
                if ci < n_cp and k == checkpoints[ci]:
                    sums[i, ci, 0] = sx
                    sums[i, ci, 1] = sy
                    ci += 1
    return sums, status


@njit(cache=True, parallel=True)
def ensemble_final_states(centers, radii, cap, disk0, th0, ph0, n):
    """State of every trajectory after n collisions."""
    n_traj = disk0.shape[0]
    disks = np.empty(n_traj, np.int64)
    thetas = np.empty(n_traj, np.float64)
    phis = np.empty(n_traj, np.float64)
    status = np.zeros(n_traj, np.int8)
    chunk = (n_traj + N_CHUNKS - 1) // N_CHUNKS
    for c in prange(N_CHUNKS):
        lo = c * chunk
        hi = min(n_traj, lo + chunk)
        for i in range(lo, hi):
            disk = disk0[i]
            theta = th0[i]
            phi = ph0[i]
            for _ in range(n):
                disk, theta, phi, _, _, _, _, _, _ = step(
                    centers, radii, cap, disk, theta, phi)
                if disk < 0:
                    status[i] = 1
                    break
            disks[i] = disk
            thetas[i] = theta
            phis[i] = phi
    return disks, thetas, phis, status


@njit(cache=True, parallel=True)
def ensemble_return_stats(centers, radii, cap, disk0, th0, ph0, n_steps, grid):
    """Zero-displacement hit counts per step, first returns, and grid masks.

    hits[c, k] counts trajectories (in chunk c) with S_k = 0; first[i] is the
    first k >= 1 with S_k = 0 (-1 if none up to n_steps); mask[i] has bit a
    set when S_{grid[a]} = 0 (grid must have at most 64 entries).
    """
    n_traj = disk0.shape[0]
    n_grid = grid.shape[0]
    hits = np.zeros((N_CHUNKS, n_steps + 1), np.int64)
    guards = np.zeros(N_CHUNKS, np.int64)
    first = np.full(n_traj, -1, np.int64)
    mask = np.zeros(n_traj, np.uint64)
    chunk = (n_traj + N_CHUNKS - 1) // N_CHUNKS
    for c in prange(N_CHUNKS):
        lo = c * chunk
        hi = min(n_traj, lo + chunk)
        for i in range(lo, hi):
            disk = disk0[i]
            theta = th0[i]
            phi = ph0[i]
            sx = 0
            sy = 0
            gi = 0
            for k in range(1, n_steps + 1):
                disk, theta, phi, kx, ky, _, _, _, _ = step(
                    centers, radii, cap, disk, theta, phi)
                if disk < 0:
                    guards[c] += 1
                    break
                sx += kx
                sy += ky
                at_zero = sx == 0 and sy == 0
                if at_zero:
                    hits[c, k] += 1
                    if first[i] < 0:
                        first[i] = k
                if gi < n_grid and k == grid[gi]:
                    if at_zero:
                        mask[i] |= np.uint64(1) << np.uint64(gi)
                    gi += 1
    return hits, guards, first, mask
