import numpy as np
import pytest

from vsa.dataset import FieldTrajectory
from vsa.ks import KsConfig, integrate_ks, ks_initial_state


@pytest.fixture(scope="session")
def small_ks():
    """Short chaotic L=22 trajectory on a coarse grid, for cheap tests."""
    cfg = KsConfig(L=22, S=17, dt=0.05, tau=0.25, n_samples=80, spinup=200.0)
    return integrate_ks(cfg, ks_initial_state(17))


def random_traj(rng, N, S, tau=0.5, L=2.0):
    return FieldTrajectory(rng.standard_normal((N, S)), tau=tau, L=L)
