import numpy as np
import pytest
import scipy.sparse as sp

from vsa.dataset import FieldTrajectory, trim_for_delays, uniform_weights
from vsa.distances import PrecomputedDistances, knn_graph
from vsa.errors import ValidationError
from vsa.kernels import (bandwidth_scan, covariance_kernel, default_eps_grid,
                         density_sigma, density_sigma_from_graph,
                         phase_speed_xi, scaled_gaussian, scaling_field,
                         unscaled_gaussian)


def complete_graph(D):
    return knn_graph(PrecomputedDistances(D), D.shape[0] - 1)


def random_points_graph(n, dim, seed):
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n, dim))
    D = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    return D, complete_graph(D)


class TestGaussianKernels:
    def test_zero_distance_and_eps(self):
        D = np.array([[0.0, 2.0, 5.0], [2.0, 0.0, 3.0], [5.0, 3.0, 0.0]])
        K = unscaled_gaussian(complete_graph(D), 2.0).toarray()
        assert K[0, 0] == 1.0
        assert K[0, 1] == pytest.approx(np.exp(-1.0), abs=1e-16)

    def test_dense_oracle_20_points(self):
        D, g = random_points_graph(20, 3, 1)
        eps = np.median(D)
        K = unscaled_gaussian(g, eps).toarray()
        ref = np.exp(-D / eps)
        assert np.abs(K - ref).max() < 1e-15

    def test_entries_in_unit_interval(self):
        D, g = random_points_graph(15, 2, 2)
        K = unscaled_gaussian(g, 0.5)
        assert K.data.min() > 0.0 and K.data.max() <= 1.0
        assert (K != K.T).nnz == 0

    def test_scaled_reduces_to_unscaled(self):
        D, g = random_points_graph(12, 2, 3)
        n = D.shape[0]
        field = scaling_field(np.ones(n), np.ones(n), 1.0)
        a = scaled_gaussian(g, field, 0.7)
        b = unscaled_gaussian(g, 0.7)
        assert (a != b).nnz == 0
        assert a.data.tobytes() == b.data.tobytes()

    def test_zero_scaling_gives_unit_entries(self):
        D, g = random_points_graph(8, 2, 4)
        n = D.shape[0]
        s = np.ones(n)
        s[3] = 0.0
        sigma = np.ones(n)
        xi = s.copy()
        field = scaling_field(sigma, xi, 1.0)
        K = scaled_gaussian(g, field, 0.5).toarray()
        assert np.all(K[3] == 1.0) and np.all(K[:, 3] == 1.0)

    def test_scaled_dense_oracle(self):
        D, g = random_points_graph(20, 3, 5)
        rng = np.random.default_rng(6)
        sigma = rng.uniform(0.5, 2.0, 20)
        xi = rng.uniform(0.1, 1.5, 20)
        field = scaling_field(sigma, xi, 2.0)
        eps = np.median(D)
        K = scaled_gaussian(g, field, eps).toarray()
        s = (sigma * xi) ** 0.5
        ref = np.exp(-np.outer(s, s) * D / eps)
        assert np.abs(K - ref).max() < 1e-15


class TestDensity:
    def test_single_point(self):
        K = sp.csr_matrix(np.array([[1.0]]))
        assert density_sigma(K, np.array([1.0]))[0] == 1.0

    def test_identical_points(self):
        D = np.zeros((3, 3))
        K = unscaled_gaussian(complete_graph(D), 1.0)
        sig = density_sigma(K, np.full(3, 1 / 3))
        assert np.abs(sig - 1.0).max() < 1e-15

    def test_dense_oracle_30_points(self):
        D, g = random_points_graph(30, 3, 7)
        eps = np.median(D)
        w = np.full(30, 1 / 30)
        sig = density_sigma(unscaled_gaussian(g, eps), w)
        ref = (np.exp(-D / eps) * w[None, :]).sum(axis=1)
        assert np.abs(sig / ref - 1.0).max() < 1e-14

    def test_streaming_matches_explicit_bitwise(self):
        D, g = random_points_graph(25, 2, 8)
        eps = np.median(D)
        w = np.full(25, 1 / 25)
        a = density_sigma(unscaled_gaussian(g, eps), w)
        b = density_sigma_from_graph(g, w, eps)
        assert a.tobytes() == b.tobytes()


class TestPhaseSpeed:
    def test_constant_field(self):
        traj = FieldTrajectory(np.full((10, 3), 2.0), tau=0.5, L=1.0)
        xi = phase_speed_xi(trim_for_delays(traj, 4))
        assert np.all(xi == 0.0)

    def test_linear_ramp(self):
        c, tau = 1.7, 0.25
        n = np.arange(12)
        data = np.tile((c * n * tau)[:, None], (1, 3))
        xi = phase_speed_xi(trim_for_delays(FieldTrajectory(data, tau=tau, L=1.0), 4))
        assert np.abs(xi - abs(c)).max() < 1e-12

    def test_traveling_wave_oracle(self):
        from vsa.ks import generate_traveling_wave
        traj = generate_traveling_wave(0.4, 1, N=14, S=6, tau=0.5, L=3.0)
        Q = 4
        w = trim_for_delays(traj, Q)
        xi = phase_speed_xi(w).reshape(w.n_eff, 6)
        G = traj.data
        for t in (0, 3, w.n_eff - 1):
            for s in (0, 2, 5):
                n = t + Q
                zetas = [(G[n - q, s] - G[n - q - 1, s]) / 0.5 for q in range(Q)]
                ref = np.sqrt(np.mean(np.square(zetas)))
                assert xi[t, s] == pytest.approx(ref, abs=1e-13)


class TestScalingField:
    def test_zero_speed_zero_scaling(self):
        f = scaling_field(np.array([2.0]), np.array([0.0]), 1.5)
        assert f.s[0] == 0.0

    def test_unit(self):
        f = scaling_field(np.array([1.0]), np.array([1.0]), 3.0)
        assert f.s[0] == 1.0

    def test_arithmetic(self):
        f = scaling_field(np.array([4.0]), np.array([1.0]), 2.0)
        assert f.s[0] == pytest.approx(2.0, abs=1e-15)

    def test_invalid_m_hat(self):
        with pytest.raises(ValidationError):
            scaling_field(np.array([1.0]), np.array([1.0]), 0.0)


class TestBandwidthScan:
    def kappa_oracle(self, D, w, eps_grid):
        kappa = np.array([(np.exp(-D / e) * np.outer(w, w)).sum() for e in eps_grid])
        loge = np.log(eps_grid)
        dlogk = np.gradient(np.log(kappa), loge)
        floor = w[0] ** 2 * len(w)
        window = (kappa >= 10 * floor) & (kappa <= np.sqrt(floor * kappa[-1]))
        window[0] = window[-1] = False
        best = int(np.flatnonzero(window)[np.argmax(dlogk[window])])
        return kappa, 2.0 * dlogk[best]

    def test_circle_dimension(self):
        rng = np.random.default_rng(0)
        theta = rng.uniform(0, 2 * np.pi, 1000)
        D = 2.0 - 2.0 * np.cos(theta[:, None] - theta[None, :])
        np.fill_diagonal(D, 0.0)
        w = np.full(1000, 1e-3)
        scan = bandwidth_scan(complete_graph(D), w)
        assert 0.9 <= scan.m_hat <= 1.1
        kappa_ref, m_ref = self.kappa_oracle(D, w, scan.epsilons)
        assert np.abs(scan.kappa / kappa_ref - 1.0).max() < 1e-12
        assert scan.m_hat == pytest.approx(m_ref, rel=1e-12)

    def test_torus_dimension(self):
        rng = np.random.default_rng(1)
        th = rng.uniform(0, 2 * np.pi, (1000, 2))
        pts = np.stack([np.cos(th[:, 0]), np.sin(th[:, 0]),
                        np.cos(th[:, 1]), np.sin(th[:, 1])], axis=1)
        D = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
        scan = bandwidth_scan(complete_graph(D), np.full(1000, 1e-3))
        assert 1.8 <= scan.m_hat <= 2.2

    def test_saturation_at_large_eps(self):
        D, g = random_points_graph(60, 2, 3)
        scan = bandwidth_scan(g, np.full(60, 1 / 60))
        assert scan.kappa[-1] == pytest.approx(1.0, abs=1e-6)
        assert abs(scan.dlogk[-1]) < 1e-6

    def test_monotone_kappa(self):
        D, g = random_points_graph(40, 3, 4)
        scan = bandwidth_scan(g, np.full(40, 1 / 40))
        assert (np.diff(scan.kappa) >= -1e-15).all()
        assert (scan.dlogk >= -1e-12).all()

    def test_degenerate_geometry(self):
        D = np.zeros((6, 6))
        with pytest.raises(ValidationError, match="degenerate geometry"):
            bandwidth_scan(complete_graph(D), np.full(6, 1 / 6))

    def test_grid_validation(self):
        D, g = random_points_graph(10, 2, 5)
        with pytest.raises(ValidationError):
            bandwidth_scan(g, np.full(10, 0.1), eps_grid=np.logspace(-2, 2, 30))

    def test_csv(self, tmp_path):
        D, g = random_points_graph(10, 2, 6)
        scan = bandwidth_scan(g, np.full(10, 0.1))
        scan.to_csv(tmp_path / "scan.csv")
        lines = (tmp_path / "scan.csv").read_text().strip().split("\n")
        assert lines[0] == "epsilon,kappa,dlogk"
        assert len(lines) == 1 + len(default_eps_grid())


class TestCovarianceKernel:
    def test_rank_one_separable(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal(9)
        a -= a.mean()
        b = rng.standard_normal(3)
        traj = FieldTrajectory(np.outer(a, b), tau=1.0, L=1.0)
        w = trim_for_delays(traj, 1)
        K = covariance_kernel(w)
        av = a[1:]
        ref = np.outer(np.outer(av, b).reshape(-1), np.outer(av, b).reshape(-1))
        assert np.abs(K - ref).max() < 1e-12

    def test_constant_field_zero(self):
        traj = FieldTrajectory(np.full((8, 3), 4.2), tau=1.0, L=1.0)
        K = covariance_kernel(trim_for_delays(traj, 2))
        assert np.abs(K).max() < 1e-12

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(2)
        traj = FieldTrajectory(rng.standard_normal((5, 3)), tau=1.0, L=1.0)
        Q = 2
        w = trim_for_delays(traj, Q)
        K = covariance_kernel(w)
        G = traj.data
        mean = G.mean(axis=0)
        n = w.n_points
        ref = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                (ni, si), (nj, sj) = w.unflatten(i), w.unflatten(j)
                ref[i, j] = sum((G[ni - q, si] - mean[si]) * (G[nj - q, sj] - mean[sj])
                                for q in range(Q)) / Q
        assert np.abs(K - ref).max() < 1e-13

    def test_size_guard(self):
        traj = FieldTrajectory(np.zeros((3000, 5)), tau=1.0, L=1.0)
        with pytest.raises(ValidationError, match="guard"):
            covariance_kernel(trim_for_delays(traj, 2))
