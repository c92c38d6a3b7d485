"""Markov normalization of kernels and the sparse symmetric eigensolve.

Follows the diffusion-maps normalization: with r = K 1 and l = K (1/r), the
kernel p(i, j) = k(i, j) / (l_i r_j) integrates to one in its second slot.
The operator is similar to a symmetric one via T = diag(sqrt(l/r)); solving
the symmetric problem and transforming back yields the biorthogonal pair of
eigenfunction families of P and its adjoint.

All inner products and row sums are taken with the product-point weights
(w_s / n_eff per point), the discrete analog of the sampling measure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .errors import NumericalError, ValidationError
from .kernels import weighted_rowsums

DEGENERACY_GAP = 1e-8


@dataclass(frozen=True)
class MarkovNormalizers:
    """Left/right normalization fields and their similarity combinations."""

    r: np.ndarray
    l: np.ndarray
    l_hat: np.ndarray    # sqrt(l * r)
    l_tilde: np.ndarray  # sqrt(l / r)


@dataclass(frozen=True)
class MarkovEigenbasis:
    """Descending eigenvalues with the biorthogonal eigenfunction families.

    phi are eigenfunctions of the Markov operator (phi[:, 0] rescaled to the
    constant 1), phi_dual of its adjoint with <phi_dual_i, phi_j> = delta_ij
    under the point weights, and phi_hat the orthonormal symmetric-problem
    eigenvectors they both derive from.
    """

    lambdas: np.ndarray
    phi: np.ndarray
    phi_dual: np.ndarray
    phi_hat: np.ndarray
    normalizers: MarkovNormalizers
    point_weights: np.ndarray
    degenerate: np.ndarray

    @property
    def n_eig(self) -> int:
        return len(self.lambdas)

    @property
    def n_points(self) -> int:
        return self.phi.shape[0]


def markov_normalize(K: sparse.csr_matrix, point_weights: np.ndarray):
    """Two-step normalization to a row-stochastic kernel.

    Returns (normalizers, P) where P f integrates f against a probability
    kernel: sum_j p(i, j) w_j = 1 for every row i.
    """
    w = np.asarray(point_weights, dtype=np.float64)
    if K.shape[0] != K.shape[1] or K.shape[0] != len(w):
        raise ValidationError("kernel/weights shape mismatch")
    if len(K.data) == 0 or np.diff(K.indptr).min() < 1:
        raise ValidationError("disconnected point: empty kernel row")
    if K.data.min() <= 0:
        raise ValidationError("kernel must be strictly positive on its pattern")
    r = weighted_rowsums(K, w)
    l = weighted_rowsums(K, w / r)
    l_hat = np.sqrt(l * r)
    l_tilde = np.sqrt(l / r)
    norm = MarkovNormalizers(r=r, l=l, l_hat=l_hat, l_tilde=l_tilde)
    inv_li = np.repeat(1.0 / l, np.diff(K.indptr))
    data = K.data * inv_li / r[K.indices]
    P = sparse.csr_matrix((data, K.indices.copy(), K.indptr.copy()), shape=K.shape)
    return norm, P


def symmetrize(K: sparse.csr_matrix, normalizers: MarkovNormalizers) -> sparse.csr_matrix:
    """Symmetric kernel p_hat(i, j) = k(i, j) / (l_hat_i l_hat_j)."""
    inv = 1.0 / normalizers.l_hat
    # form inv_i * inv_j first: commutativity keeps the symmetry bitwise
    pair = np.repeat(inv, np.diff(K.indptr))
    np.multiply(pair, inv[K.indices], out=pair)
    data = K.data * pair
    return sparse.csr_matrix((data, K.indices.copy(), K.indptr.copy()), shape=K.shape)


def eigensolve(P_hat: sparse.csr_matrix, point_weights: np.ndarray, n_eig: int,
               tol: float = 1e-10, max_iter: int | None = None, seed: int = 0,
               ncv: int | None = None):
    """Largest-algebraic eigenpairs of the weighted symmetric operator.

    Runs restarted Lanczos (ARPACK) on B = diag(sqrt(w)) P_hat diag(sqrt(w)),
    deterministic through the seeded start vector, and verifies that every
    returned pair has residual at most tol.  Returns (lambdas descending,
    phi_hat) with phi_hat columns orthonormal under the point weights.
    """
    n = P_hat.shape[0]
    w = np.asarray(point_weights, dtype=np.float64)
    if not (1 <= n_eig < n - 1):
        raise ValidationError(f"n_eig must be in [1, {n - 1})")
    sqw = np.sqrt(w)
    pair = np.repeat(sqw, np.diff(P_hat.indptr))
    np.multiply(pair, sqw[P_hat.indices], out=pair)
    data = P_hat.data * pair
    B = sparse.csr_matrix((data, P_hat.indices, P_hat.indptr), shape=P_hat.shape)
    v0 = np.random.default_rng(seed).standard_normal(n)
    try:
        vals, vecs = spla.eigsh(B, k=n_eig, which="LA", v0=v0, tol=tol * 1e-2,
                                maxiter=max_iter, ncv=ncv)
    except spla.ArpackNoConvergence as exc:
        raise NumericalError(f"eigensolver did not converge: {exc}") from exc
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = np.ascontiguousarray(vecs[:, order])
    resid = np.linalg.norm(B @ vecs - vecs * vals[None, :], axis=0)
    if resid.max() > tol:
        raise NumericalError(
            f"eigenpair residual {resid.max():.3e} exceeds tol {tol:.3e}")
    phi_hat = vecs / sqw[:, None]
    return vals, phi_hat


def detransform(lambdas: np.ndarray, phi_hat: np.ndarray,
                normalizers: MarkovNormalizers,
                point_weights: np.ndarray) -> MarkovEigenbasis:
    """Recover the biorthogonal (phi, phi_dual) pair from phi_hat.

    With P_hat = T P T^{-1} for T = diag(l_tilde), right eigenfunctions of
    the Markov operator are phi = phi_hat / l_tilde (the leading one is then
    constant, since p_hat maps l_tilde to itself) and the adjoint's are
    phi_dual = l_tilde * phi_hat.

    Signs are fixed so the largest-magnitude entry of each phi_hat column is
    positive; the leading eigenfunction is rescaled so its constant value is
    one (its dual absorbs the inverse factor, preserving biorthogonality).
    """
    w = np.asarray(point_weights, dtype=np.float64)
    phi_hat = phi_hat.copy()
    for j in range(phi_hat.shape[1]):
        peak = np.argmax(np.abs(phi_hat[:, j]))
        if phi_hat[peak, j] < 0:
            phi_hat[:, j] = -phi_hat[:, j]
    phi = phi_hat / normalizers.l_tilde[:, None]
    phi_dual = normalizers.l_tilde[:, None] * phi_hat
    c0 = float(w @ phi[:, 0])
    if c0 != 0.0:
        phi[:, 0] /= c0
        phi_dual[:, 0] *= c0
    gaps = np.abs(np.diff(lambdas))
    degenerate = np.zeros(len(lambdas), dtype=bool)
    degenerate[:-1] |= gaps < DEGENERACY_GAP
    degenerate[1:] |= gaps < DEGENERACY_GAP
    return MarkovEigenbasis(lambdas=lambdas.copy(), phi=phi, phi_dual=phi_dual,
                            phi_hat=phi_hat, normalizers=normalizers,
                            point_weights=w, degenerate=degenerate)


def row_stochastic_residual(P: sparse.csr_matrix, point_weights: np.ndarray) -> float:
    """Max deviation of weighted row sums of P from one."""
    sums = weighted_rowsums(P, np.asarray(point_weights, dtype=np.float64))
    return float(np.abs(sums - 1.0).max())


def biorthogonality_residual(basis: MarkovEigenbasis) -> float:
    """Max deviation of <phi_dual_i, phi_j> from delta_ij."""
    gram = (basis.phi_dual * basis.point_weights[:, None]).T @ basis.phi
    return float(np.abs(gram - np.eye(basis.n_eig)).max())


def validate_basis(basis: MarkovEigenbasis, P: sparse.csr_matrix | None = None,
                   strict_gap: float = 1e-12) -> dict:
    """Markov-operator invariants; raises NumericalError on violation."""
    lam = basis.lambdas
    checks = {
        "lambda0": float(abs(lam[0] - 1.0)),
        "phi0_rel_sd": float(np.std(basis.phi[:, 0]) / abs(np.mean(basis.phi[:, 0]))),
        "biorthogonality": biorthogonality_residual(basis),
    }
    if P is not None:
        checks["row_stochasticity"] = row_stochastic_residual(P, basis.point_weights)
    ok = (checks["lambda0"] <= 1e-10
          and (len(lam) < 2 or lam[1] < 1.0 - strict_gap)
          and lam.min() > -1.0 and (np.diff(lam) <= 1e-14).all()
          and checks["phi0_rel_sd"] <= 1e-8
          and checks["biorthogonality"] <= 1e-8
          and checks.get("row_stochasticity", 0.0) <= 1e-12)
    if not ok:
        raise NumericalError(f"Markov invariants violated: {checks}")
    return checks


def save_eigenbasis(path, basis: MarkovEigenbasis) -> None:
    """n_points, n_eig, lambdas, then phi_hat and l_tilde, little-endian."""
    with open(path, "wb") as fh:
        fh.write(np.uint64(basis.n_points).tobytes())
        fh.write(np.uint32(basis.n_eig).tobytes())
        fh.write(basis.lambdas.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(basis.phi_hat, dtype="<f8").tobytes())
        fh.write(basis.normalizers.l_tilde.astype("<f8").tobytes())


def load_eigenbasis(path):
    """Read back (lambdas, phi_hat, l_tilde) written by save_eigenbasis."""
    from .errors import FormatError
    with open(path, "rb") as fh:
        head = fh.read(12)
        if len(head) < 12:
            raise FormatError("truncated payload: short header")
        n = int(np.frombuffer(head[:8], dtype="<u8")[0])
        k = int(np.frombuffer(head[8:], dtype="<u4")[0])
        body = fh.read(8 * (k + n * k + n))
        if len(body) < 8 * (k + n * k + n):
            raise FormatError("truncated payload")
    lam = np.frombuffer(body[:8 * k], dtype="<f8").copy()
    phi_hat = np.frombuffer(body[8 * k:8 * (k + n * k)], dtype="<f8").reshape(n, k).copy()
    l_tilde = np.frombuffer(body[8 * (k + n * k):], dtype="<f8").copy()
    return lam, phi_hat, l_tilde


def eigenvalues_csv(path, lambdas: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("j,lambda\n")
        for j, lam in enumerate(lambdas):
            fh.write(f"{j},{lam:.17g}\n")
