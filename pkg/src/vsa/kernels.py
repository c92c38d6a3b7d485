"""Gaussian and covariance kernels on the product space, with autotuning.

Kernel bandwidth and the effective data dimension are tuned by scanning the
kernel sum kappa(eps) over a log-spaced grid and locating the maximum of
d log kappa / d log eps, following the approach of Coifman et al. and
Berry & Harlim for variable-bandwidth kernel density estimation.

Reductions over graph edges (kappa, density, normalizations) sum their terms
in ascending value order.  The result then depends only on the multiset of
terms, so relabeling the points (e.g. rolling the spatial grid) reproduces
the same floats bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse

from .dataset import AnalysisWindow
from .distances import NeighborGraph
from .errors import NumericalError, ValidationError

_ROW_CHUNK = 1 << 14


def default_eps_grid() -> np.ndarray:
    """Log-spaced bandwidth grid 2**k for k = -30..30 in half steps."""
    return 2.0 ** np.arange(-30.0, 30.0 + 1e-9, 0.5)


def weighted_rowsums(matrix: sparse.csr_matrix, vec: np.ndarray) -> np.ndarray:
    """out_i = sum_j M_ij * vec_j, value-ordered per row (order-independent)."""
    n = matrix.shape[0]
    if matrix.nnz == 0 or np.diff(matrix.indptr).min() < 1:
        raise ValidationError("disconnected point: empty kernel row")
    out = np.empty(n)
    for r0 in range(0, n, _ROW_CHUNK):
        r1 = min(r0 + _ROW_CHUNK, n)
        lo, hi = matrix.indptr[r0], matrix.indptr[r1]
        terms = matrix.data[lo:hi] * vec[matrix.indices[lo:hi]]
        rowids = np.repeat(np.arange(r0, r1), np.diff(matrix.indptr[r0:r1 + 1]))
        order = np.lexsort((terms, rowids))
        out[r0:r1] = np.add.reduceat(terms[order], matrix.indptr[r0:r1] - lo)
    return out


def _with_unit_diagonal(offdiag: sparse.csr_matrix) -> sparse.csr_matrix:
    eye = sparse.identity(offdiag.shape[0], format="csr")
    out = offdiag + eye
    out.sort_indices()
    return out


def unscaled_gaussian(graph: NeighborGraph, epsilon: float) -> sparse.csr_matrix:
    """exp(-d2/eps) on graph edges, unit diagonal, zero elsewhere."""
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    m = graph.matrix
    data = np.exp(-m.data / epsilon)
    off = sparse.csr_matrix((data, m.indices, m.indptr), shape=m.shape)
    return _with_unit_diagonal(off)


def scaled_gaussian(graph: NeighborGraph, scaling: "ScalingField",
                    epsilon: float) -> sparse.csr_matrix:
    """exp(-s_i s_j d2 / eps) on graph edges, unit diagonal.

    Points with vanishing scaling get entry 1 toward all their neighbors
    (arbitrarily large bandwidth there).
    """
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    m = graph.matrix
    s = scaling.s
    data = np.empty_like(m.data)
    n = m.shape[0]
    for r0 in range(0, n, _ROW_CHUNK):
        r1 = min(r0 + _ROW_CHUNK, n)
        lo, hi = m.indptr[r0], m.indptr[r1]
        si = np.repeat(s[r0:r1], np.diff(m.indptr[r0:r1 + 1]))
        chunk = si * s[m.indices[lo:hi]]
        np.multiply(chunk, m.data[lo:hi], out=chunk)
        np.divide(chunk, -epsilon, out=chunk)
        np.exp(chunk, out=chunk)
        data[lo:hi] = chunk
    off = sparse.csr_matrix((data, m.indices, m.indptr), shape=m.shape)
    return _with_unit_diagonal(off)


def density_sigma(kernel: sparse.csr_matrix, point_weights: np.ndarray) -> np.ndarray:
    """Kernel density estimate: weighted row sums of an explicit kernel."""
    sig = weighted_rowsums(kernel, point_weights)
    if (sig <= 0).any():
        raise NumericalError("nonpositive kernel density")
    return sig


def density_sigma_from_graph(graph: NeighborGraph, point_weights: np.ndarray,
                             epsilon: float) -> np.ndarray:
    """Same as density_sigma on unscaled_gaussian(graph, eps), never built."""
    m = graph.matrix
    n = m.shape[0]
    out = np.empty(n)
    for r0 in range(0, n, _ROW_CHUNK):
        r1 = min(r0 + _ROW_CHUNK, n)
        lo, hi = m.indptr[r0], m.indptr[r1]
        terms = np.exp(-m.data[lo:hi] / epsilon)
        np.multiply(terms, point_weights[m.indices[lo:hi]], out=terms)
        # unit diagonal contributes w_i
        terms = np.concatenate([terms, point_weights[r0:r1]])
        rowids = np.concatenate([
            np.repeat(np.arange(r0, r1), np.diff(m.indptr[r0:r1 + 1])),
            np.arange(r0, r1)])
        order = np.lexsort((terms, rowids))
        counts = np.diff(m.indptr[r0:r1 + 1]) + 1
        bounds = np.concatenate([[0], np.cumsum(counts[:-1])])
        out[r0:r1] = np.add.reduceat(terms[order], bounds)
    if (out <= 0).any():
        raise NumericalError("nonpositive kernel density")
    return out


def phase_speed_xi(window: AnalysisWindow) -> np.ndarray:
    """Delay-averaged backward-difference speed per product point, flat layout.

    zeta(n, s) = |data[n, s] - data[n-1, s]| / tau, averaged in squares over
    the Q-delay history and square-rooted.
    """
    G = window.traj.data
    Q = window.Q
    z2 = np.diff(G, axis=0) / window.traj.tau
    np.square(z2, out=z2)  # z2[g] = zeta(g+1)**2
    acc = np.zeros((window.n_eff, window.n_space))
    for q in range(Q):
        # zeta(n-q)**2 at global n = t + Q -> z2 row t + Q - q - 1
        acc += z2[Q - q - 1: Q - q - 1 + window.n_eff]
    acc /= Q
    np.sqrt(acc, out=acc)
    return acc.reshape(-1)


@dataclass(frozen=True)
class ScalingField:
    """Per-point bandwidth factors s = (sigma * xi) ** gamma."""

    sigma: np.ndarray
    xi: np.ndarray
    s: np.ndarray
    gamma: float
    epsilon_bar: float


def scaling_field(sigma: np.ndarray, xi: np.ndarray, m_hat: float,
                  epsilon_bar: float = float("nan")) -> ScalingField:
    """Combine density and phase speed into the bandwidth scaling field."""
    if m_hat <= 0:
        raise ValidationError("m_hat must be positive")
    if (sigma <= 0).any():
        raise ValidationError("sigma must be strictly positive")
    if (xi < 0).any():
        raise ValidationError("xi must be nonnegative")
    s = (sigma * xi) ** (1.0 / m_hat)
    return ScalingField(sigma=sigma, xi=xi, s=s, gamma=1.0 / m_hat,
                        epsilon_bar=epsilon_bar)


@dataclass(frozen=True)
class BandwidthScan:
    """kappa(eps) curve with its log-log slope and the tuned bandwidth."""

    epsilons: np.ndarray
    kappa: np.ndarray
    dlogk: np.ndarray
    m_hat: float
    eps_star: float

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epsilon,kappa,dlogk\n")
            for e, k, d in zip(self.epsilons, self.kappa, self.dlogk):
                fh.write(f"{e:.17g},{k:.17g},{d:.17g}\n")


def _scan_values(graph: NeighborGraph, scaling: np.ndarray | None) -> np.ndarray:
    """Edge d2 values (optionally scaled by s_i s_j), sorted ascending."""
    m = graph.matrix
    if scaling is None:
        vals = m.data.copy()
    else:
        vals = np.empty_like(m.data)
        n = m.shape[0]
        for r0 in range(0, n, _ROW_CHUNK):
            r1 = min(r0 + _ROW_CHUNK, n)
            lo, hi = m.indptr[r0], m.indptr[r1]
            si = np.repeat(scaling[r0:r1], np.diff(m.indptr[r0:r1 + 1]))
            np.multiply(si, scaling[m.indices[lo:hi]], out=si)
            np.multiply(si, m.data[lo:hi], out=si)
            vals[lo:hi] = si
    vals.sort(kind="stable")
    return vals


def bandwidth_scan(graph: NeighborGraph, point_weights: np.ndarray,
                   eps_grid: np.ndarray | None = None,
                   scaling: np.ndarray | None = None) -> BandwidthScan:
    """Scan kappa(eps) = sum_{i,j} exp(-d2_ij/eps) w_i w_j over the graph.

    The sum runs over stored edges plus the zero-distance diagonal.  On an
    m-dimensional set kappa scales like eps**(m/2) in the local regime, so
    the effective dimension is m_hat = 2 * max dlogk and eps_star the
    maximizing bandwidth.
    """
    if eps_grid is None:
        eps_grid = default_eps_grid()
    eps_grid = np.asarray(eps_grid, dtype=np.float64)
    if len(eps_grid) < 16 or eps_grid[-1] / eps_grid[0] < 1e10:
        raise ValidationError("eps grid must have >= 16 points over >= 10 decades")
    w = np.asarray(point_weights, dtype=np.float64)
    if np.ptp(w) != 0.0:
        raise NotImplementedError("bandwidth_scan requires uniform point weights")
    vals = _scan_values(graph, scaling)
    if vals.size == 0 or vals[-1] <= 0:
        raise ValidationError("degenerate geometry: all pairwise distances are zero")
    # center the grid on the median squared distance so the local scaling
    # regime stays on-grid no matter how the inputs are scaled
    med = float(vals[vals.size // 2])
    if med <= 0.0:
        med = float(vals[vals > 0].mean())
    epsilons = eps_grid * med
    wc2 = float(w[0]) ** 2
    n = graph.n_points
    kappa = np.empty(len(epsilons))
    for k, eps in enumerate(epsilons):
        total = 0.0
        for lo in range(0, vals.size, 1 << 24):
            total += float(np.exp(-vals[lo:lo + (1 << 24)] / eps).sum())
        kappa[k] = wc2 * (total + n)
    logk = np.log(kappa)
    loge = np.log(epsilons)
    dlogk = np.gradient(logk, loge)
    # read the slope in the local scaling regime: past the diagonal floor
    # but before saturation sets in (curvature inflates the slope there)
    floor = wc2 * n
    ceiling = np.sqrt(floor * kappa[-1])
    window = (kappa >= 10.0 * floor) & (kappa <= ceiling)
    window[0] = window[-1] = False
    if not window.any():
        window[1:-1] = True
    best = int(np.flatnonzero(window)[np.argmax(dlogk[window])])
    return BandwidthScan(epsilons=epsilons, kappa=kappa, dlogk=dlogk,
                         m_hat=2.0 * float(dlogk[best]),
                         eps_star=float(epsilons[best]))


def covariance_kernel(window: AnalysisWindow,
                      point_weights: np.ndarray | None = None) -> np.ndarray:
    """Dense delay covariance kernel on the product space (small instances).

    Entries are (1/Q) sum_q (data[n-q,s] - mean_s)(data[m-q,r] - mean_r) with
    the per-point time mean taken over the full trajectory.
    """
    n_pts = window.n_points
    if n_pts > 10_000:
        raise ValidationError(f"dense covariance guard: {n_pts} points > 10000")
    G = window.traj.data
    Q = window.Q
    M = G - G.mean(axis=0, keepdims=True)
    cols = [M[Q - q: Q - q + window.n_eff, :].reshape(-1) for q in range(Q)]
    E = np.stack(cols, axis=1)
    return (E @ E.T) / Q
