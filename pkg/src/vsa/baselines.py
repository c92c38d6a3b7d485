"""Reference decompositions: snapshot POD and scalar-kernel NLSA."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels, markov
from .dataset import FieldTrajectory, QuadratureWeights, trim_for_delays, uniform_weights
from .distances import PrecomputedDistances, knn_graph
from .errors import ValidationError

_POD_DENSE_GUARD = 20_000


@dataclass(frozen=True)
class PodResult:
    """Snapshot POD of the mean-removed field.

    Temporal modes are orthonormal under the empirical time measure; spatial
    modes are their pointwise projections onto the anomaly field, so the
    rank-l reconstruction is mean + sum_j temporal_j (x) spatial_j.
    """

    temporal: np.ndarray     # (N_used, n_modes)
    spatial: np.ndarray      # (S, n_modes)
    eigenvalues: np.ndarray  # full spectrum, descending
    variances: np.ndarray    # eigenvalues / total variance
    mean: np.ndarray
    sample_indices: np.ndarray


def pod_decompose(traj: FieldTrajectory, n_modes: int,
                  use_delays: int | None = None,
                  weights: QuadratureWeights | None = None) -> PodResult:
    """Temporal-covariance (snapshot) POD, optionally in delay space."""
    if weights is None:
        weights = uniform_weights(traj.n_space)
    w = weights.w
    G = traj.data
    if use_delays is not None:
        window = trim_for_delays(traj, use_delays)
        Q = use_delays
        times = np.arange(window.first_valid, traj.n_samples)
    else:
        Q = 1
        times = np.arange(traj.n_samples)
    if len(times) > _POD_DENSE_GUARD:
        stride = -(-len(times) // _POD_DENSE_GUARD)
        times = times[::stride]
    N_used = len(times)
    if not (1 <= n_modes <= min(N_used, traj.n_space)):
        raise ValidationError(f"n_modes must be in [1, {min(N_used, traj.n_space)}]")

    mean = G.mean(axis=0)
    A = G - mean
    # kernel(n, m) = (1/Q) sum_q <A(n - q), A(m - q)>_w
    scaled = A * np.sqrt(w)
    K = np.zeros((N_used, N_used))
    for q in range(Q):
        block = scaled[times - q]
        K += block @ block.T
    K /= Q * N_used

    evals, evecs = np.linalg.eigh(K)
    evals = evals[::-1]
    evecs = evecs[:, ::-1]
    total = float(evals.sum())
    temporal = evecs[:, :n_modes] * np.sqrt(N_used)
    # pointwise projection of the anomaly field onto each temporal mode
    spatial = A[times].T @ temporal / N_used
    # sign convention: largest-magnitude spatial entry positive
    for j in range(n_modes):
        peak = np.argmax(np.abs(spatial[:, j]))
        if spatial[peak, j] < 0:
            spatial[:, j] = -spatial[:, j]
            temporal[:, j] = -temporal[:, j]
    return PodResult(temporal=temporal, spatial=spatial, eigenvalues=evals,
                     variances=evals / total, mean=mean, sample_indices=times)


@dataclass(frozen=True)
class NlsaResult:
    """Scalar-kernel decomposition of the state sequence in delay space."""

    basis: markov.MarkovEigenbasis  # eigenfunctions over time samples
    window_Q: int
    first_valid: int
    scan_unscaled: kernels.BandwidthScan
    scan_scaled: kernels.BandwidthScan

    @property
    def lambdas(self) -> np.ndarray:
        return self.basis.lambdas

    @property
    def temporal(self) -> np.ndarray:
        return self.basis.phi


def nlsa_decompose(traj: FieldTrajectory, Q: int, n_modes: int,
                   weights: QuadratureWeights | None = None,
                   epsilon: float | None = None,
                   epsilon_bar: float | None = None,
                   gamma: float | None = None,
                   tol: float = 1e-10, seed: int = 0) -> NlsaResult:
    """Markov eigenfunctions of the state-space delay kernel.

    Distances are quadrature-weighted full-field norms averaged over the
    delay window; scaling and normalization mirror the product-space
    pipeline, restricted to scalar states.
    """
    if weights is None:
        weights = uniform_weights(traj.n_space)
    window = trim_for_delays(traj, Q)
    n_eff = window.n_eff
    if n_eff < n_modes + 2:
        raise ValidationError("too few samples for requested modes")
    G = traj.data
    w = weights.w

    # embed: rows indexed by trimmed time, columns by (delay, space)
    E = np.empty((n_eff, Q * traj.n_space))
    colw = np.sqrt(np.tile(w / Q, Q))
    for q in range(Q):
        E[:, q * traj.n_space:(q + 1) * traj.n_space] = \
            G[window.first_valid - q: traj.n_samples - q]
    E *= colw
    sq = np.einsum("ij,ij->i", E, E)
    D = sq[:, None] + sq[None, :] - 2.0 * (E @ E.T)
    np.maximum(D, 0.0, out=D)
    np.fill_diagonal(D, 0.0)
    del E

    pw = np.full(n_eff, 1.0 / n_eff)
    graph = knn_graph(PrecomputedDistances(D), n_eff - 1)
    scan1 = kernels.bandwidth_scan(graph, pw)
    eps_bar = epsilon_bar if epsilon_bar is not None else scan1.eps_star
    sigma = kernels.density_sigma_from_graph(graph, pw, eps_bar)

    dz = np.diff(G, axis=0) / traj.tau
    z2 = (dz * dz) @ w  # zeta(n)^2 at global time n = row + 1
    acc = np.zeros(n_eff)
    for q in range(Q):
        acc += z2[Q - q - 1: Q - q - 1 + n_eff]
    xi = np.sqrt(acc / Q)

    m_hat = 1.0 / gamma if gamma is not None else scan1.m_hat
    scaling = kernels.scaling_field(sigma, xi, m_hat, epsilon_bar=eps_bar)
    scan2 = kernels.bandwidth_scan(graph, pw, scaling=scaling.s)
    eps = epsilon if epsilon is not None else scan2.eps_star
    kern = kernels.scaled_gaussian(graph, scaling, eps)
    normalizers, P = markov.markov_normalize(kern, pw)
    P_hat = markov.symmetrize(kern, normalizers)
    lambdas, phi_hat = markov.eigensolve(P_hat, pw, n_modes, tol=tol, seed=seed)
    basis = markov.detransform(lambdas, phi_hat, normalizers, pw)
    markov.validate_basis(basis, P)
    return NlsaResult(basis=basis, window_Q=Q, first_valid=window.first_valid,
                      scan_unscaled=scan1, scan_scaled=scan2)


def ssa_reconstruct(nlsa: NlsaResult, traj: FieldTrajectory, Q: int,
                    selected) -> np.ndarray:
    """Spatiotemporal patterns from temporal modes by delay-window averaging.

    Projects each delay channel of the embedded observation onto the dual
    temporal eigenfunctions, reconstructs in delay space, and averages the
    contributions that each physical time receives from the (up to Q) delay
    windows covering it.  Returns the field over the trimmed window.
    """
    if Q != nlsa.window_Q:
        raise ValidationError("Q differs from the decomposition's delay count")
    window = trim_for_delays(traj, Q)
    n_eff, S = window.n_eff, window.n_space
    G = traj.data
    phi = nlsa.basis.phi
    phi_dual = nlsa.basis.phi_dual
    selected = np.asarray(list(selected), dtype=int)

    # channel projections a[j, q, s] = <phi_dual_j, G[t + Q - q, s]>_(1/n)
    first = window.first_valid
    out = np.zeros((n_eff, S))
    counts = np.zeros(n_eff)
    mix = phi[:, selected] @ phi_dual[:, selected].T / n_eff  # (t, t') pairing
    for q in range(Q):
        channel = G[first - q: traj.n_samples - q]  # (t', s) observations
        rec_q = mix @ channel                        # (t, s) delay-space rec
        # window at trimmed time t covers physical global time t + Q - q
        t_src = np.arange(q, n_eff)
        t_dst = t_src - q
        out[t_dst] += rec_q[t_src]
        counts[t_dst] += 1.0
    out /= counts[:, None]
    return out


def pattern_variance(pattern: np.ndarray, traj: FieldTrajectory, Q: int,
                     weights: QuadratureWeights | None = None) -> float:
    """Fractional explained variance of a spatiotemporal pattern."""
    from .patterns import explained_variance

    window = trim_for_delays(traj, Q)
    if weights is None:
        weights = uniform_weights(traj.n_space)
    pw = weights.product_weights(window.n_eff)
    return explained_variance(np.asarray(pattern).reshape(-1), window, pw)
