import math

import numpy as np
import pytest

from levy_sigkernel import tensor_algebra as ta
from levy_sigkernel.characteristics import (AtomicJumps, GaussianJumps,
                                            LevyTriplet, PiecewiseVelocity,
                                            characteristic_velocity)
from levy_sigkernel.development import develop, expected_signature
from levy_sigkernel.errors import InvalidParameter
from levy_sigkernel.kernel_solver import bessel_i0
from levy_sigkernel.mc_oracle import (estimate_expected_signature,
                                      estimate_kernel, estimate_to_csv,
                                      path_signature, simulate_paths)
from levy_sigkernel.tensor_algebra import TruncatedTensor as TT


def atom(dim, vec):
    return TT.from_levels(dim, [np.zeros(1), np.asarray(vec, dtype=float)])


class TestSimulatePaths:
    def test_zero_triplet(self):
        trip = LevyTriplet.homogeneous(2, 1.0)
        paths = simulate_paths(trip, 5, 4, seed=1)
        for lvl1, lvl2 in paths.segments:
            assert np.all(lvl1 == 0.0) and lvl2 is None

    def test_pure_drift_sums_exactly(self):
        trip = LevyTriplet(dim=2, time_grid=np.array([0.0, 0.4, 1.0]),
                           drifts=[np.array([1.0, 0.0]), np.array([0.0, 2.0])],
                           covs=[np.zeros((2, 2))] * 2)
        paths = simulate_paths(trip, 3, 7, seed=2)
        total = paths.total_increment()
        expected = 0.4 * np.array([1.0, 0.0]) + 0.6 * np.array([0.0, 2.0])
        assert np.allclose(total, expected[None, :], atol=1e-14)

    def test_bm_increment_variance(self):
        trip = LevyTriplet.brownian(1, 1.0)
        paths = simulate_paths(trip, 100_000, 4, seed=3)
        inc = paths.segments[0][0][:, 0]   # first sub-step, dt = 1/4
        var = inc.var(ddof=1)
        se = var * math.sqrt(2.0 / (len(inc) - 1))   # se of a normal variance
        assert abs(var - 0.25) <= 3 * se

    def test_determinism(self):
        trip = LevyTriplet.homogeneous(
            1, 1.0, cov=np.eye(1),
            jumps=AtomicJumps(np.array([3.0]), (atom(1, [0.5]),)))
        a = simulate_paths(trip, 50, 8, seed=9)
        b = simulate_paths(trip, 50, 8, seed=9)
        assert len(a.segments) == len(b.segments)
        for (x1, x2), (y1, y2) in zip(a.segments, b.segments):
            assert np.array_equal(x1, y1)
        c = simulate_paths(trip, 50, 8, seed=10)
        assert any(not np.array_equal(x1, y1)
                   for (x1, _), (y1, _) in zip(a.segments, c.segments))

    def test_jump_counts_poisson(self):
        lam = 2.5
        trip = LevyTriplet.homogeneous(
            1, 1.0, jumps=AtomicJumps(np.array([lam]), (atom(1, [1.0]),)))
        paths = simulate_paths(trip, 20_000, 1, seed=4)
        # count nonzero jump-slot entries per path (atom value 1.0)
        jumps = sum((seg[0][:, 0] != 0.0).astype(int)
                    for seg in paths.segments[1:])
        mean = jumps.mean()
        se = jumps.std(ddof=1) / math.sqrt(len(jumps))
        assert abs(mean - lam) <= 3 * se

    def test_parameter_validation(self):
        trip = LevyTriplet.brownian(1, 1.0)
        with pytest.raises(InvalidParameter):
            simulate_paths(trip, 0, 4, seed=1)


class TestPathSignature:
    def test_single_increment(self):
        x = atom(2, [0.3, -0.4])
        sig = path_signature([x], 3)
        ref = ta.exp_tensor(x.with_depth(3))
        assert ta.norm_p(sig - ref, "max") == 0.0

    def test_matches_develop_for_deterministic_path(self, rng):
        grid = np.array([0.0, 0.3, 1.0])
        tensors = [TT.from_levels(2, [np.zeros(1), rng.normal(size=2)])
                   for _ in range(2)]
        v = PiecewiseVelocity(2, grid, tensors)
        increments = [tensors[0] * 0.3, tensors[1] * 0.7]
        sig = path_signature(increments, 5)
        ref = develop(v, 0.0, 1.0, 5)
        assert ta.norm_p(sig - ref, "max") < 1e-12

    def test_scalar_splitting_exact(self, rng):
        # d = 1: scalar exponentials commute, splitting changes nothing
        x = atom(1, [0.8])
        whole = path_signature([x], 5)
        split = path_signature([x * 0.5, x * 0.5], 5)
        assert ta.norm_p(whole - split, "max") < 1e-14

    def test_level2_shuffle_identity_survives_jumps(self, rng):
        trip = LevyTriplet.homogeneous(
            2, 1.0, drift=[0.2, -0.1], cov=0.5 * np.eye(2),
            area=np.array([[0.0, 0.3], [-0.3, 0.0]]),
            jumps=AtomicJumps(np.array([2.0]), (atom(2, [0.4, 0.1]),)))
        paths = simulate_paths(trip, 20, 5, seed=6)
        for p in range(20):
            sig = path_signature(paths.increments_of(p), 3)
            s1 = sig.levels[1]
            s2 = sig.levels[2].reshape(2, 2)
            assert np.abs(np.outer(s1, s1) - (s2 + s2.T)).max() < 1e-12


class TestEstimators:
    def test_zero_triplet_estimate(self):
        trip = LevyTriplet.homogeneous(1, 1.0)
        est = estimate_expected_signature(trip, 1.0, 3, 50, 4, seed=5)
        assert est.mean.scalar() == 1.0
        for n in range(1, 4):
            assert np.all(est.mean.levels[n] == 0.0)
            assert np.all(est.se.levels[n] == 0.0)

    def test_bm_fawcett_small(self):
        bm = LevyTriplet.brownian(1, 1.0)
        est = estimate_expected_signature(bm, 1.0, 4, 20_000, 16, seed=8)
        target = [1.0, 0.0, 0.5, 0.0, 0.125]
        for n in range(1, 5):
            se = max(est.se.levels[n][0], 1e-12)
            assert abs(est.mean.levels[n][0] - target[n]) <= 3.5 * se

    def test_gaussian_cp_level2_consistency(self):
        trip = LevyTriplet.homogeneous(
            1, 1.0, jumps=GaussianJumps(1.0, np.array([[1.0]])))
        est = estimate_expected_signature(trip, 1.0, 4, 20_000, 4, seed=12)
        ref = expected_signature(trip, 1.0, 4)
        se = max(est.se.levels[2][0], 1e-12)
        assert abs(est.mean.levels[2][0] - ref.levels[2][0]) <= 3.5 * se

    def test_kernel_zero_triplets(self):
        trip = LevyTriplet.homogeneous(1, 1.0)
        val, se = estimate_kernel(trip, trip, 1.0, 3, 100, 2, seed=3)
        assert val == 1.0 and se == 0.0

    def test_kernel_bm_vs_bessel(self):
        bm = LevyTriplet.brownian(1, 1.0)
        val, se = estimate_kernel(bm, bm, 1.0, 6, 20_000, 8, seed=21)
        assert abs(val - bessel_i0(1.0)) <= 3.5 * se + 1e-3

    def test_estimate_csv(self, tmp_path):
        bm = LevyTriplet.brownian(1, 1.0)
        est = estimate_expected_signature(bm, 1.0, 2, 500, 4, seed=1)
        out = tmp_path / "esig.csv"
        estimate_to_csv(est, out)
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "word,mean,se"
        # empty word row then single-letter rows; exact re-parse
        assert lines[1].startswith(",")
        vals = [float(line.split(",")[1]) for line in lines[1:]]
        flat = np.concatenate([est.mean.levels[n] for n in range(3)])
        assert np.array_equal(np.array(vals), flat)

    def test_level_se_is_norm_of_coordinate_ses(self):
        bm = LevyTriplet.brownian(2, 1.0)
        est = estimate_expected_signature(bm, 1.0, 3, 2_000, 4, seed=2)
        for n in range(4):
            assert est.level_se[n] == pytest.approx(
                float(np.linalg.norm(est.se.levels[n])), abs=1e-15)
