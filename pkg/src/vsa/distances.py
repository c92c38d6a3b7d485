"""Squared delay-coordinate distances on the product space and kNN graphs.

For product points i = (n, s), j = (m, r) the squared distance is

    d2(i, j) = (1/Q) * sum_{q=0}^{Q-1} (data[n-q, s] - data[m-q, r])**2.

Dense blocks are produced with a sliding-window recurrence over time pairs,

    Q*d2(n, m) = Q*d2(n-1, m-1) + d1(n, m) - d1(n-Q, m-Q),

seeded by direct summation at block edges.  Distances stored on graph edges
are always recomputed by direct left-to-right summation, which makes them
exactly symmetric and independent of the block layout.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse

from .dataset import AnalysisWindow
from .errors import FormatError, ValidationError

_EDGE_CHUNK = 1 << 21


def default_k_nn(n_points: int) -> int:
    """Default neighbor count, 50 per decade of problem size."""
    return 50 * math.ceil(math.log10(max(n_points, 10)))


def delay_vector(window: AnalysisWindow, n: int, s: int) -> np.ndarray:
    """History (F(x_n), F(x_{n-1}), ..., F(x_{n-Q+1})) at grid point s."""
    if n < window.first_valid or n >= window.traj.n_samples:
        raise ValidationError(f"time index {n} outside trimmed range")
    if not (0 <= s < window.n_space):
        raise ValidationError(f"space index {s} out of range")
    data = window.traj.data
    return data[n - np.arange(window.Q), s].copy()


class DelayDistances:
    """Blockwise access to squared delay distances for an analysis window."""

    def __init__(self, window: AnalysisWindow, block_size: int = 1024,
                 threads: int = 1):
        self.window = window
        self.Q = window.Q
        self.block_size = block_size
        self.threads = max(1, threads)
        self.n_points = window.n_points

    # -- dense blocks (recurrence with direct seeds) --------------------

    def block(self, rows: tuple[int, int], cols: tuple[int, int]) -> np.ndarray:
        """Dense d2 block for flat row range x flat col range."""
        r0, r1 = rows
        c0, c1 = cols
        n = self.n_points
        if not (0 <= r0 <= r1 <= n and 0 <= c0 <= c1 <= n):
            raise ValidationError("block range out of bounds")
        S = self.window.n_space
        # expand to whole time rows, slice afterwards
        t0, t1 = r0 // S, (r1 + S - 1) // S
        u0, u1 = c0 // S, (c1 + S - 1) // S
        out = np.empty(((t1 - t0) * S, (u1 - u0) * S))
        prev = None
        for t in range(t0, t1):
            slab = self._time_row(t, u0, u1, prev)
            out[(t - t0) * S:(t - t0 + 1) * S] = slab.reshape(S, -1)
            prev = (t, slab)
        out /= self.Q
        return out[r0 - t0 * S: r1 - t0 * S, c0 - u0 * S: c1 - u0 * S]

    def _time_row(self, t: int, u0: int, u1: int, prev) -> np.ndarray:
        """Slab[s, m, r] = Q*d2((t,s),(m,r)) for col times m in [u0, u1)."""
        G = self.window.traj.data
        Q, S = self.Q, self.window.n_space
        nu = u1 - u0
        if prev is not None and prev[0] == t - 1:
            slab = np.empty((S, nu, S))
            old = prev[1]
            d1n = np.subtract(G[t + Q, :, None, None], G[None, u0 + Q:u1 + Q, :])
            np.square(d1n, out=d1n)
            np.add(old[:, :-1, :], d1n[:, 1:, :], out=slab[:, 1:, :])
            np.subtract(G[t, :, None, None], G[None, u0 + 1:u1, :], out=d1n[:, 1:, :])
            np.square(d1n[:, 1:, :], out=d1n[:, 1:, :])
            np.subtract(slab[:, 1:, :], d1n[:, 1:, :], out=slab[:, 1:, :])
            slab[:, 0, :] = self._direct_pair(t, u0)
        else:
            slab = np.zeros((S, nu, S))
            for q in range(Q):
                diff = G[t + Q - q, :, None, None] - G[None, u0 + Q - q:u1 + Q - q, :]
                np.square(diff, out=diff)
                slab += diff
        return slab

    def _direct_pair(self, t: int, m: int) -> np.ndarray:
        """Direct Q-sum for one (row time, col time) pair, all (s, r)."""
        G = self.window.traj.data
        Q = self.Q
        acc = np.zeros((self.window.n_space, self.window.n_space))
        for q in range(Q):
            diff = G[t + Q - q, :, None] - G[m + Q - q, None, :]
            acc += diff * diff
        return acc

    def iter_rows(self):
        """Yield (row_start, row_stop, values) covering all rows in order.

        Values are Q*d2 (a fixed rescaling; ordering is what kNN needs).
        """
        S = self.window.n_space
        n_eff = self.window.n_eff
        prev = None
        for t in range(n_eff):
            slab = self._time_row(t, 0, n_eff, prev)
            prev = (t, slab)
            yield t * S, (t + 1) * S, slab.reshape(S, -1)

    # -- exact per-edge distances ----------------------------------------

    def pair_values(self, ii: np.ndarray, jj: np.ndarray,
                    threads: int | None = None) -> np.ndarray:
        """Exact d2 for index pairs, by direct left-to-right summation."""
        G = self.window.traj.data
        Q, S = self.Q, self.window.n_space
        flat = G.reshape(-1)
        out = np.empty(len(ii))

        def work(lo, hi):
            gi = np.asarray(ii[lo:hi], dtype=np.int64) + Q * S
            gj = np.asarray(jj[lo:hi], dtype=np.int64) + Q * S
            acc = np.zeros(hi - lo)
            tmp = np.empty(hi - lo)
            tmp2 = np.empty(hi - lo)
            for _ in range(Q):
                np.take(flat, gi, out=tmp)
                np.take(flat, gj, out=tmp2)
                np.subtract(tmp, tmp2, out=tmp)
                np.square(tmp, out=tmp)
                np.add(acc, tmp, out=acc)
                gi -= S
                gj -= S
            out[lo:hi] = acc / Q

        spans = [(lo, min(lo + _EDGE_CHUNK, len(ii)))
                 for lo in range(0, len(ii), _EDGE_CHUNK)]
        nthreads = self.threads if threads is None else max(1, threads)
        if nthreads > 1 and len(spans) > 1:
            with ThreadPoolExecutor(max_workers=nthreads) as pool:
                list(pool.map(lambda sp: work(*sp), spans))
        else:
            for sp in spans:
                work(*sp)
        return out


def pairwise_sq_distance_block(window: AnalysisWindow, rows: tuple[int, int],
                               cols: tuple[int, int]) -> np.ndarray:
    """Dense block of squared delay distances (see :class:`DelayDistances`)."""
    return DelayDistances(window).block(rows, cols)


class PrecomputedDistances:
    """Distance provider backed by an explicit symmetric matrix (small data)."""

    def __init__(self, d2: np.ndarray, block_size: int = 1024):
        d2 = np.asarray(d2, dtype=np.float64)
        if d2.ndim != 2 or d2.shape[0] != d2.shape[1]:
            raise ValidationError("distance matrix must be square")
        self.d2 = d2
        self.n_points = d2.shape[0]
        self.block_size = block_size

    def block(self, rows, cols):
        return self.d2[rows[0]:rows[1], cols[0]:cols[1]].copy()

    def iter_rows(self):
        for lo in range(0, self.n_points, self.block_size):
            hi = min(lo + self.block_size, self.n_points)
            yield lo, hi, self.d2[lo:hi]

    def pair_values(self, ii, jj, threads=None):
        return self.d2[ii, jj].astype(np.float64)


@dataclass(frozen=True)
class NeighborGraph:
    """Symmetric kNN graph over product points, with exact edge distances."""

    matrix: sparse.csr_matrix  # data = d2, no diagonal
    k_nn: int

    @property
    def n_points(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_edges(self) -> int:
        return self.matrix.nnz

    def save(self, path) -> None:
        rec = np.dtype([("j", "<u4"), ("d", "<f8")])
        m = self.matrix
        with open(path, "wb") as fh:
            fh.write(np.uint64(self.n_points).tobytes())
            for i in range(self.n_points):
                lo, hi = m.indptr[i], m.indptr[i + 1]
                fh.write(np.uint32(hi - lo).tobytes())
                row = np.empty(hi - lo, dtype=rec)
                row["j"] = m.indices[lo:hi]
                row["d"] = m.data[lo:hi]
                fh.write(row.tobytes())

    @classmethod
    def load(cls, path) -> "NeighborGraph":
        rec = np.dtype([("j", "<u4"), ("d", "<f8")])
        with open(path, "rb") as fh:
            raw = fh.read(8)
            if len(raw) < 8:
                raise FormatError("truncated payload: short header")
            n = int(np.frombuffer(raw, dtype="<u8")[0])
            indptr = np.zeros(n + 1, dtype=np.int64)
            indices, data = [], []
            for i in range(n):
                raw = fh.read(4)
                if len(raw) < 4:
                    raise FormatError("truncated payload")
                deg = int(np.frombuffer(raw, dtype="<u4")[0])
                raw = fh.read(rec.itemsize * deg)
                if len(raw) < rec.itemsize * deg:
                    raise FormatError("truncated payload")
                row = np.frombuffer(raw, dtype=rec)
                indices.append(row["j"].astype(np.int32))
                data.append(row["d"].astype(np.float64))
                indptr[i + 1] = indptr[i] + deg
        matrix = sparse.csr_matrix(
            (np.concatenate(data) if data else np.empty(0),
             np.concatenate(indices) if indices else np.empty(0, np.int32),
             indptr), shape=(n, n))
        k_nn = int(np.diff(indptr).max(initial=0))
        return cls(matrix=matrix, k_nn=k_nn)


def _select_row(values: np.ndarray, k: int, self_idx: int) -> np.ndarray:
    """Indices of the k smallest entries; ties broken by smaller index."""
    row = values.copy()
    row[self_idx] = np.inf
    if k >= row.size - 1:
        sel = np.flatnonzero(row < np.inf)
        return sel
    part = np.argpartition(row, k - 1)[:k]
    vstar = row[part].max()
    less = np.flatnonzero(row < vstar)
    need = k - less.size
    eq = np.flatnonzero(row == vstar)
    return np.concatenate([less, eq[:need]])


def knn_graph(provider, k_nn: int, threads: int = 1) -> NeighborGraph:
    """Exact k-nearest-neighbor graph, symmetrized by union.

    Neighbor candidates come from the provider's dense row sweep; the edge
    distances stored on the final graph are recomputed pairwise so they are
    identical for (i, j) and (j, i).
    """
    n = provider.n_points
    if not (2 <= k_nn < n):
        raise ValidationError(f"k_nn must be in [2, {n})")
    indices = np.empty((n, k_nn), dtype=np.int32)
    for lo, hi, values in provider.iter_rows():
        for i in range(lo, hi):
            indices[i] = _select_row(values[i - lo], k_nn, i)
    directed = sparse.csr_matrix(
        (np.ones(n * k_nn, dtype=np.int8), indices.reshape(-1),
         np.arange(0, n * k_nn + 1, k_nn, dtype=np.int64)), shape=(n, n))
    del indices
    union = directed + directed.T
    del directed
    union.sort_indices()
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(union.indptr))
    d2 = provider.pair_values(rows, union.indices.astype(np.int64),
                              threads=threads)
    del rows
    matrix = sparse.csr_matrix((d2, union.indices, union.indptr), shape=(n, n))
    return NeighborGraph(matrix=matrix, k_nn=k_nn)
