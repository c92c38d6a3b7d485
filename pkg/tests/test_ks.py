import numpy as np
import pytest

from vsa.errors import ValidationError
from vsa.ks import (KsConfig, add_noise, generate_traveling_wave, integrate_ks,
                    ks_initial_state)


class TestInitialState:
    def test_matches_cosine_sum(self):
        for S in (65, 9):
            u0 = ks_initial_state(S)
            y = np.arange(S) / S
            ref = sum(1.2 * np.cos(2 * np.pi * k * y) for k in range(1, 5))
            assert np.abs(u0 - ref).max() < 1e-12
            assert abs(u0.mean()) < 1e-13

    def test_round_trip_coefficients(self):
        u0 = ks_initial_state(65)
        v = np.fft.rfft(u0) / 65
        assert np.abs(v[1:5] - 0.6).max() < 1e-14
        assert np.abs(v[5:]).max() < 1e-14
        assert abs(v[0]) < 1e-14

    def test_too_small(self):
        with pytest.raises(ValidationError):
            ks_initial_state(8)


class TestIntegrator:
    def test_zero_fixed_point(self):
        cfg = KsConfig(L=22, S=17, dt=0.05, tau=0.25, n_samples=20, spinup=0.0)
        traj = integrate_ks(cfg, np.zeros(17))
        assert np.abs(traj.data).max() <= 1e-12

    def test_small_domain_decay(self):
        # L=4 < 2*pi: every mode has (2*pi*k/L)**2 - (2*pi*k/L)**4 < 0
        rng = np.random.default_rng(7)
        u0 = 1e-3 * rng.standard_normal(17)
        u0 -= u0.mean()
        cfg = KsConfig(L=4.0, S=17, dt=0.05, tau=0.25, n_samples=100, spinup=0.0)
        traj = integrate_ks(cfg, u0)
        assert np.abs(traj.data[-1]).max() < 1e-6 * np.abs(u0).max()

    def test_zero_mean_invariant(self, small_ks):
        assert np.abs(small_ks.data.mean(axis=1)).max() < 1e-10

    def test_energy_bounded(self, small_ks):
        norms = np.linalg.norm(small_ks.data, axis=1)
        assert norms.min() > 1.0
        assert norms.max() < 100.0

    def test_rejects_nonzero_mean(self):
        cfg = KsConfig(L=22, S=17, n_samples=5, spinup=0.0)
        with pytest.raises(ValidationError, match="zero spatial mean"):
            integrate_ks(cfg, np.ones(17))

    def test_etdrk4_order(self):
        # error against a dt/8 reference decays ~ dt^4 on a dt, dt/2, dt/4 ladder
        S, L, T = 33, 22.0, 2.0
        u0 = ks_initial_state(S)
        errs = []
        for dt in (0.1, 0.05, 0.025):
            cfg = KsConfig(L=L, S=S, dt=dt, tau=T, n_samples=1, spinup=0.0)
            errs.append(integrate_ks(cfg, u0).data[0])
        ref_cfg = KsConfig(L=L, S=S, dt=0.0125, tau=T, n_samples=1, spinup=0.0)
        ref = integrate_ks(ref_cfg, u0).data[0]
        e = [np.abs(u - ref).max() for u in errs]
        for ratio in (e[0] / e[1], e[1] / e[2]):
            assert 8.0 < ratio < 32.0  # 2**4 within a factor of 2

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            KsConfig(S=64)  # even
        with pytest.raises(ValidationError):
            KsConfig(tau=0.3, dt=0.07)  # not an integer multiple
        with pytest.raises(ValidationError):
            KsConfig(L=-1.0)


class TestTravelingWave:
    def test_origin_value(self):
        traj = generate_traveling_wave(0.3, 1, N=4, S=8, tau=1.0, L=2.0)
        assert traj.data[0, 0] == 1.0

    def test_period_one_sampling(self):
        traj = generate_traveling_wave(2 * np.pi, 1, N=6, S=8, tau=1.0, L=2.0)
        for n in range(1, 6):
            assert np.abs(traj.data[n] - traj.data[0]).max() < 1e-12

    def test_closed_form_entry(self):
        traj = generate_traveling_wave(0.3, 1, N=4, S=8, tau=1.0, L=2.0)
        assert traj.data[2, 3] == pytest.approx(np.cos(2 * np.pi * 3 / 8 - 0.6), abs=1e-15)

    def test_discrete_equivariance(self):
        # rolling by g grid points == advancing the phase by 2*pi*m*g/S
        m, S, g = 2, 12, 5
        traj = generate_traveling_wave(0.7, m, N=9, S=S, tau=0.3, L=5.0)
        rolled = np.roll(traj.data, g, axis=1)
        y = 5.0 * np.arange(S) / S
        n = np.arange(9)
        shifted = np.cos(2 * np.pi * m * y[None, :] / 5.0
                         - 2 * np.pi * m * g / S - 0.7 * 0.3 * n[:, None])
        assert np.abs(rolled - shifted).max() < 1e-12

    def test_validation(self):
        with pytest.raises(ValidationError):
            generate_traveling_wave(0.3, 0, N=4, S=8, tau=1.0, L=2.0)
        with pytest.raises(ValidationError):
            generate_traveling_wave(0.3, 4, N=4, S=8, tau=1.0, L=2.0)


class TestNoise:
    def test_zero_fraction_identity(self, small_ks):
        noisy = add_noise(small_ks, 0.0, seed=1)
        assert noisy.data.tobytes() == small_ks.data.tobytes()

    def test_variance_fraction(self):
        from vsa.dataset import FieldTrajectory
        rng = np.random.default_rng(3)
        traj = FieldTrajectory(rng.standard_normal((300, 200)), tau=1.0, L=1.0)
        noisy = add_noise(traj, 0.4, seed=5)
        ratio = (noisy.data - traj.data).var() / (0.4 * traj.data.var())
        assert abs(ratio - 1.0) < 0.05

    def test_deterministic(self, small_ks):
        a = add_noise(small_ks, 0.4, seed=11)
        b = add_noise(small_ks, 0.4, seed=11)
        assert a.data.tobytes() == b.data.tobytes()
