"""End-to-end driver: distances -> tuned kernel -> Markov eigenbasis.

The bandwidth protocol is two-pass: a scan on the raw delay distances fixes
the density bandwidth and the effective dimension (hence the scaling
exponent), and a second scan on the scaled distances fixes the bandwidth of
the kernel that is actually normalized and eigensolved.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels, markov
from .dataset import (AnalysisWindow, FieldTrajectory, QuadratureWeights,
                      trim_for_delays, uniform_weights)
from .distances import DelayDistances, NeighborGraph, default_k_nn, knn_graph
from .errors import ValidationError


@dataclass(frozen=True)
class VsaParams:
    Q: int
    k_nn: int | None = None
    n_eig: int = 51
    epsilon: float | None = None      # scaled-kernel bandwidth override
    epsilon_bar: float | None = None  # density bandwidth override
    gamma: float | None = None        # scaling exponent override (else 1/m_hat)
    eps_grid: np.ndarray | None = None
    tol: float = 1e-10
    max_iter: int | None = None
    seed: int = 0
    threads: int = 1
    block_size: int = 1024
    keep_operators: bool = True

    def __post_init__(self):
        if self.Q < 1:
            raise ValidationError("Q must be >= 1")
        if self.n_eig < 1:
            raise ValidationError("n_eig must be >= 1")


@dataclass
class VsaResult:
    window: AnalysisWindow
    weights: QuadratureWeights
    point_weights: np.ndarray
    graph: NeighborGraph | None
    scan_unscaled: kernels.BandwidthScan
    scan_scaled: kernels.BandwidthScan
    scaling: kernels.ScalingField
    kernel: object  # scipy CSR of the scaled kernel (None if dropped)
    basis: markov.MarkovEigenbasis
    invariants: dict
    params_used: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


def run_vsa(traj: FieldTrajectory, params: VsaParams,
            weights: QuadratureWeights | None = None) -> VsaResult:
    """Run the full decomposition on a trajectory."""
    timings: dict[str, float] = {}
    t0 = time.perf_counter()

    window = trim_for_delays(traj, params.Q)
    if weights is None:
        weights = uniform_weights(traj.n_space)
    pw = weights.product_weights(window.n_eff)
    n = window.n_points
    k_nn = params.k_nn if params.k_nn is not None else default_k_nn(n)
    k_nn = min(k_nn, n - 1)

    provider = DelayDistances(window, block_size=params.block_size,
                              threads=params.threads)
    graph = knn_graph(provider, k_nn, threads=params.threads)
    timings["distances"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    grid = params.eps_grid
    scan1 = kernels.bandwidth_scan(graph, pw, grid)
    eps_bar = params.epsilon_bar if params.epsilon_bar is not None else scan1.eps_star
    sigma = kernels.density_sigma_from_graph(graph, pw, eps_bar)
    xi = kernels.phase_speed_xi(window)
    m_hat = 1.0 / params.gamma if params.gamma is not None else scan1.m_hat
    scaling = kernels.scaling_field(sigma, xi, m_hat, epsilon_bar=eps_bar)
    scan2 = kernels.bandwidth_scan(graph, pw, grid, scaling=scaling.s)
    eps = params.epsilon if params.epsilon is not None else scan2.eps_star
    kern = kernels.scaled_gaussian(graph, scaling, eps)
    if not params.keep_operators:
        graph = None
    timings["kernel"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    normalizers, P = markov.markov_normalize(kern, pw)
    invariants = {"row_stochasticity": markov.row_stochastic_residual(P, pw)}
    del P
    P_hat = markov.symmetrize(kern, normalizers)
    if not params.keep_operators:
        kern = None
    timings["normalize"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    lambdas, phi_hat = markov.eigensolve(P_hat, pw, params.n_eig, tol=params.tol,
                                         max_iter=params.max_iter, seed=params.seed)
    del P_hat
    basis = markov.detransform(lambdas, phi_hat, normalizers, pw)
    invariants.update(markov.validate_basis(basis))
    invariants["m_hat_unscaled"] = scan1.m_hat
    invariants["m_hat_scaled"] = scan2.m_hat
    timings["eigensolve"] = time.perf_counter() - t0

    used = {
        "Q": params.Q, "k_nn": k_nn, "n_eig": params.n_eig,
        "epsilon": eps, "epsilon_bar": eps_bar, "gamma": scaling.gamma,
        "tol": params.tol, "seed": params.seed,
    }
    return VsaResult(window=window, weights=weights, point_weights=pw,
                     graph=graph, scan_unscaled=scan1, scan_scaled=scan2,
                     scaling=scaling, kernel=kern, basis=basis,
                     invariants=invariants, params_used=used, timings=timings)


def with_overrides(params: VsaParams, **kw) -> VsaParams:
    return replace(params, **kw)
