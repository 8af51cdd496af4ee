"""Geometry and dynamics of the periodic Lorentz gas."""

import math

import numpy as np
import pytest
from scipy import stats as sps

from lorentzgas import stats
from lorentzgas.billiard import (
    REFERENCE_CONFIG,
    BoundaryPoint,
    ScattererConfig,
    billiard_map,
    cohomology_check,
    finite_horizon_check,
    lifted_position,
    max_cohomology_defect,
    mu1_initial_conditions,
    position_in_cell,
    sample_mu1,
    simulate_trajectory,
    time_reverse,
    validate_config,
)
from lorentzgas.errors import GeometryError, HorizonGuardError
from lorentzgas.lattice import affine_support, lattice_index

SINGLE_DISK = ScattererConfig(disks=((0.0, 0.0, 0.4),), tau_max_hint=5.0)


def _rng(seed):
    return np.random.Generator(np.random.Philox(key=seed))


class TestConfigValidation:
    def test_reference_ok(self):
        validate_config(REFERENCE_CONFIG)

    def test_overlapping_pair(self):
        bad = ScattererConfig(disks=((0.0, 0.0, 0.4), (0.5, 0.5, 0.4)))
        with pytest.raises(GeometryError, match="overlapping"):
            validate_config(bad)

    def test_nonpositive_radius(self):
        with pytest.raises(GeometryError, match="nonpositive radius"):
            validate_config(ScattererConfig(disks=((0.0, 0.0, -0.1),)))

    def test_self_overlap_across_translates(self):
        # radius 0.51 collides with its own periodic image
        with pytest.raises(GeometryError, match="overlapping"):
            validate_config(ScattererConfig(disks=((0.25, 0.25, 0.51),)))

    def test_center_outside_cell(self):
        with pytest.raises(GeometryError, match="outside"):
            validate_config(ScattererConfig(disks=((1.2, 0.0, 0.2),)))


class TestHorizon:
    def test_reference_is_finite(self):
        verdict = finite_horizon_check(REFERENCE_CONFIG)
        assert verdict.finite
        assert verdict.witness_direction is None

    def test_single_disk_has_corridor(self):
        verdict = finite_horizon_check(SINGLE_DISK)
        assert not verdict.finite
        assert verdict.witness_direction == (1, 0)
        lo, hi = verdict.uncovered_offset
        assert lo == pytest.approx(0.4, abs=1e-12)
        assert hi == pytest.approx(0.6, abs=1e-12)

    def test_witness_line_really_misses_everything(self):
        verdict = finite_horizon_check(SINGLE_DISK)
        p, q = verdict.witness_direction
        lo, hi = verdict.uncovered_offset
        offset = 0.5 * (lo + hi)
        norm = math.hypot(p, q)
        # distance from every disk copy to the witness line must exceed r
        for ox in range(-3, 4):
            for oy in range(-3, 4):
                for cx, cy, r in SINGLE_DISK.disks:
                    d = abs((cx + ox) * (-q / norm) + (cy + oy) * (p / norm)
                            - offset)
                    spacing = 1.0 / norm
                    d = min(d % spacing, spacing - d % spacing)
                    assert d >= r - 1e-12


class TestSampler:
    def test_phi_inverse_cdf(self):
        class Fixed:
            def __init__(self, u):
                self.u = u

            def random(self, n):
                return np.array(self.u)

        pt = sample_mu1(REFERENCE_CONFIG, Fixed([0.0, 0.25, 0.5]))
        assert pt.phi == pytest.approx(0.0, abs=1e-15)
        assert pt.theta == pytest.approx(math.pi / 2)
        assert pt.disk_index == 0
        pt_hi = sample_mu1(REFERENCE_CONFIG, Fixed([0.9, 0.0, 1.0 - 1e-12]))
        assert pt_hi.disk_index == 1
        assert pt_hi.phi < math.pi / 2

    def test_phi_stays_open(self):
        disks, thetas, phis = mu1_initial_conditions(REFERENCE_CONFIG, 3, 0, 50_000)
        assert np.all(np.abs(phis) < math.pi / 2)
        assert np.all((thetas >= 0) & (thetas < 2 * math.pi))
        assert set(np.unique(disks)) <= {0, 1}

    def test_phi_histogram_matches_half_cosine(self):
        _, _, phis = mu1_initial_conditions(REFERENCE_CONFIG, 11, 0, 200_000)
        # equiprobable bins under density cos(phi)/2 via the sine transform
        bins = 32
        idx = np.minimum(((np.sin(phis) + 1.0) / 2.0 * bins).astype(int), bins - 1)
        counts = np.bincount(idx, minlength=bins)
        expected = len(phis) / bins
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        assert sps.chi2.sf(chi2, bins - 1) > 1e-3

    def test_disk_weights_proportional_to_radius(self):
        disks, _, _ = mu1_initial_conditions(REFERENCE_CONFIG, 5, 0, 120_000)
        frac = np.mean(disks == 0)
        assert frac == pytest.approx(0.4 / 0.6, abs=0.01)

    def test_substreams_independent_of_batching(self):
        a = mu1_initial_conditions(REFERENCE_CONFIG, 42, 0, 20)
        b = mu1_initial_conditions(REFERENCE_CONFIG, 42, 5, 7)
        for x, y in zip(a, b):
            assert np.array_equal(x[5:12], y)


class TestBilliardMap:
    def test_head_on_flight(self):
        x = BoundaryPoint(disk_index=0, theta=0.0, phi=0.0, cell=(0, 0))
        rec = billiard_map(REFERENCE_CONFIG, x)
        assert rec.psi[0] == pytest.approx(0.2, abs=1e-14)
        assert rec.psi[1] == pytest.approx(0.0, abs=1e-14)
        assert rec.tau == pytest.approx(0.2, abs=1e-14)
        assert rec.kappa == (0, 0)
        assert rec.next.disk_index == 0
        assert rec.next.theta == pytest.approx(math.pi, abs=1e-14)
        assert rec.next.phi == pytest.approx(0.0, abs=1e-14)
        assert rec.next.cell == (0, 0)

    def test_phi_domain_enforced(self):
        with pytest.raises(ValueError, match="phi"):
            billiard_map(REFERENCE_CONFIG, BoundaryPoint(0, 0.0, 2.0, (0, 0)))

    def test_time_reverse_involution(self):
        x = BoundaryPoint(1, 2.3, -0.7, (3, -2))
        assert time_reverse(time_reverse(x)) == x
        fixed = BoundaryPoint(0, 1.0, 0.0, (0, 0))
        assert time_reverse(fixed) == fixed

    def test_reversibility_roundtrip(self):
        rng = _rng(17)
        worst = 0.0
        for _ in range(1000):
            x = sample_mu1(REFERENCE_CONFIG, rng)
            y = billiard_map(REFERENCE_CONFIG, x).next
            z = billiard_map(REFERENCE_CONFIG, time_reverse(y)).next
            back = time_reverse(z)
            assert back.disk_index == x.disk_index
            a = np.array(lifted_position(REFERENCE_CONFIG, x))
            b = np.array(lifted_position(REFERENCE_CONFIG, back))
            worst = max(worst, float(np.max(np.abs(a - b))),
                        abs(back.phi - x.phi))
        assert worst < 1e-9

    def test_flight_lengths_respect_cap(self):
        rng = _rng(23)
        for _ in range(500):
            rec = billiard_map(REFERENCE_CONFIG, sample_mu1(REFERENCE_CONFIG, rng))
            assert 0 < rec.tau <= REFERENCE_CONFIG.tau_max_hint
            assert rec.tau == pytest.approx(math.hypot(*rec.psi), abs=1e-12)

    def test_horizon_guard_raises(self):
        tight = ScattererConfig(disks=REFERENCE_CONFIG.disks, tau_max_hint=1e-4)
        x = BoundaryPoint(disk_index=0, theta=0.0, phi=0.0, cell=(0, 0))
        with pytest.raises(HorizonGuardError):
            billiard_map(tight, x)


class TestTrajectory:
    def test_zero_steps(self):
        x = BoundaryPoint(0, 1.0, 0.3, (0, 0))
        traj = simulate_trajectory(REFERENCE_CONFIG, x, 0)
        assert traj.records == ()
        assert np.array_equal(traj.s_kappa, np.zeros((1, 2), dtype=np.int64))

    def test_single_step_matches_map(self):
        rng = _rng(5)
        for _ in range(20):
            x = sample_mu1(REFERENCE_CONFIG, rng)
            traj = simulate_trajectory(REFERENCE_CONFIG, x, 1)
            rec = billiard_map(REFERENCE_CONFIG, x)
            assert traj.records[0] == rec

    def test_composition_matches_map_exactly(self):
        rng = _rng(6)
        x = sample_mu1(REFERENCE_CONFIG, rng)
        traj = simulate_trajectory(REFERENCE_CONFIG, x, 50)
        y = x
        for k in range(50):
            rec = billiard_map(REFERENCE_CONFIG, y)
            assert rec == traj.records[k]
            y = rec.next

    def test_birkhoff_sums_additive(self):
        rng = _rng(7)
        x = sample_mu1(REFERENCE_CONFIG, rng)
        traj = simulate_trajectory(REFERENCE_CONFIG, x, 200)
        kappas = np.array([r.kappa for r in traj.records])
        assert np.array_equal(traj.s_kappa[1:], np.cumsum(kappas, axis=0))
        assert np.array_equal(traj.s_kappa[0], [0, 0])
        # cell bookkeeping: kappa = next.cell - previous cell
        prev = x.cell
        for r in traj.records:
            assert r.kappa == (r.next.cell[0] - prev[0], r.next.cell[1] - prev[1])
            prev = r.next.cell

    def test_guard_reports_step_index(self):
        tight = ScattererConfig(disks=REFERENCE_CONFIG.disks, tau_max_hint=0.15)
        rng = _rng(8)
        with pytest.raises(HorizonGuardError) as err:
            # long enough that some flight certainly exceeds 0.15
            simulate_trajectory(tight, sample_mu1(tight, rng), 10_000)
        assert err.value.step is not None


class TestCohomology:
    def test_head_on_identity_exact(self):
        x = BoundaryPoint(0, 0.0, 0.0, (0, 0))
        rec = billiard_map(REFERENCE_CONFIG, x)
        q = position_in_cell(REFERENCE_CONFIG, x)
        q2 = position_in_cell(REFERENCE_CONFIG, rec.next)
        assert rec.psi[0] - rec.kappa[0] == pytest.approx(q2[0] - q[0], abs=1e-15)
        assert rec.psi[1] - rec.kappa[1] == pytest.approx(q2[1] - q[1], abs=1e-15)

    def test_defect_small_over_trajectory(self):
        rng = _rng(9)
        traj = simulate_trajectory(REFERENCE_CONFIG,
                                   sample_mu1(REFERENCE_CONFIG, rng), 5000)
        assert cohomology_check(REFERENCE_CONFIG, traj) < 1e-12

    def test_empty_trajectory_rejected(self):
        x = BoundaryPoint(0, 1.0, 0.0, (0, 0))
        traj = simulate_trajectory(REFERENCE_CONFIG, x, 0)
        with pytest.raises(ValueError):
            cohomology_check(REFERENCE_CONFIG, traj)

    def test_cell_crossing_step(self):
        # hunt for a step crossing a vertical wall and check psi - kappa exactly
        rng = _rng(10)
        traj = simulate_trajectory(REFERENCE_CONFIG,
                                   sample_mu1(REFERENCE_CONFIG, rng), 500)
        crossing = [r for r in traj.records if r.kappa[0] == 1]
        assert crossing, "expected at least one eastward cell crossing"
        x = traj.start
        for r in traj.records:
            if r.kappa[0] == 1:
                q = position_in_cell(REFERENCE_CONFIG, x)
                q2 = position_in_cell(REFERENCE_CONFIG, r.next)
                assert r.psi[0] - 1 == pytest.approx(q2[0] - q[0], abs=1e-12)
            x = r.next

    def test_kernel_defect_scan(self):
        rng = _rng(11)
        coh, speed, tau = max_cohomology_defect(
            REFERENCE_CONFIG, sample_mu1(REFERENCE_CONFIG, rng), 100_000)
        assert coh < 1e-12
        assert speed < 1e-14
        assert tau < 1e-12


class TestEnsembleKernels:
    def test_kernel_matches_api_bitwise(self):
        seed = 99
        sums, guards = stats.billiard_checkpoint_sums(
            REFERENCE_CONFIG, seed, 8, [7, 20])
        assert guards == 0
        d, th, ph = mu1_initial_conditions(REFERENCE_CONFIG, seed, 0, 8)
        for i in range(8):
            x = BoundaryPoint(int(d[i]), float(th[i]), float(ph[i]), (0, 0))
            traj = simulate_trajectory(REFERENCE_CONFIG, x, 20)
            assert np.array_equal(traj.s_kappa[7], sums[i, 0])
            assert np.array_equal(traj.s_kappa[20], sums[i, 1])

    def test_determinism_same_seed(self):
        a, _ = stats.billiard_zero_counts(REFERENCE_CONFIG, 4, 20_000, [25])
        b, _ = stats.billiard_zero_counts(REFERENCE_CONFIG, 4, 20_000, [25])
        assert np.array_equal(a, b)

    def test_determinism_across_thread_counts(self):
        import numba

        old = numba.get_num_threads()
        try:
            numba.set_num_threads(1)
            a, _ = stats.billiard_zero_counts(REFERENCE_CONFIG, 4, 20_000, [25])
            numba.set_num_threads(min(2, old))
            b, _ = stats.billiard_zero_counts(REFERENCE_CONFIG, 4, 20_000, [25])
        finally:
            numba.set_num_threads(old)
        assert np.array_equal(a, b)

    def test_ensemble_mean_drift_vanishes(self):
        n = 20
        sums, guards = stats.billiard_checkpoint_sums(
            REFERENCE_CONFIG, 31, 100_000, [n])
        assert guards == 0
        s = sums[:, 0, :].astype(np.float64)
        se = s.std(axis=0, ddof=1) / math.sqrt(len(s))
        assert np.all(np.abs(s.mean(axis=0)) < 3.0 * se + 1e-12)


def test_kappa_support_is_full_lattice():
    stream = stats.billiard_kappa_stream(REFERENCE_CONFIG, 13, 100_000)
    sup = affine_support([tuple(v) for v in stream])
    assert lattice_index(sup) == 1
    assert sup.translation == (0, 0)
