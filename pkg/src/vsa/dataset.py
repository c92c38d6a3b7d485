"""Product-space bookkeeping and trajectory persistence.

A trajectory is a time-major array of a scalar field sampled on a periodic
1-d grid.  Analysis operates on the product of retained time samples and
grid points; a product point (n, s) is addressed by the flat index n*S + s.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ValidationError

VSAF_MAGIC = b"VSAF"
VSAF_VERSION = 1
# magic, u32 version, u64 N, u64 S, f64 tau, f64 L
_HEADER = struct.Struct("<4sIQQdd")


@dataclass(frozen=True)
class FieldTrajectory:
    """Time-major samples data[n, s] of a real field, every tau time units."""

    data: np.ndarray
    tau: float
    L: float

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1:
            raise ValidationError("trajectory must be a nonempty N x S array")
        if not np.isfinite(data).all():
            raise ValidationError("trajectory contains non-finite values")
        if self.tau <= 0 or self.L <= 0:
            raise ValidationError("tau and L must be positive")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def n_space(self) -> int:
        return self.data.shape[1]

    @property
    def grid(self) -> np.ndarray:
        """Equispaced points y_s in [0, L)."""
        S = self.n_space
        return self.L * np.arange(S) / S


@dataclass(frozen=True)
class QuadratureWeights:
    """Positive spatial quadrature weights summing to one."""

    w: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.w, dtype=np.float64)
        if w.ndim != 1 or w.size < 1 or (w < 0).any():
            raise ValidationError("weights must be a nonnegative vector")
        if abs(w.sum() - 1.0) > 1e-12 * w.size:
            raise ValidationError("weights must sum to 1")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    def product_weights(self, n_eff: int) -> np.ndarray:
        """Per product-point weights w_s / n_eff, flat (n_eff * S,) layout."""
        return np.tile(self.w / n_eff, n_eff)


def uniform_weights(S: int) -> QuadratureWeights:
    if S < 1:
        raise ValidationError("S must be >= 1")
    return QuadratureWeights(np.full(S, 1.0 / S))


@dataclass(frozen=True)
class AnalysisWindow:
    """Trimmed view of a trajectory exposing times with a full delay history.

    Retains times n in [Q, N): Q-1 past delays plus one extra sample for the
    backward difference used by the phase-speed scaling.
    """

    traj: FieldTrajectory
    Q: int
    first_valid: int = field(init=False)

    def __post_init__(self):
        if self.Q < 1:
            raise ValidationError("Q must be >= 1")
        if self.traj.n_samples <= self.Q + 1:
            raise ValidationError(
                f"insufficient samples: N={self.traj.n_samples} <= Q+1={self.Q + 1}"
            )
        object.__setattr__(self, "first_valid", self.Q)

    @property
    def n_eff(self) -> int:
        return self.traj.n_samples - self.Q

    @property
    def n_space(self) -> int:
        return self.traj.n_space

    @property
    def n_points(self) -> int:
        return self.n_eff * self.n_space

    @property
    def values(self) -> np.ndarray:
        """Field over the retained window, shape (n_eff, S)."""
        return self.traj.data[self.first_valid:]

    def flatten(self, n: int, s: int) -> int:
        """Flat product index of global time n and grid point s."""
        t = n - self.first_valid
        if not (0 <= t < self.n_eff and 0 <= s < self.n_space):
            raise ValidationError(f"product index out of range: ({n}, {s})")
        return t * self.n_space + s

    def unflatten(self, i: int) -> tuple[int, int]:
        """Inverse of flatten; returns (global time, grid point)."""
        if not (0 <= i < self.n_points):
            raise ValidationError(f"flat index out of range: {i}")
        t, s = divmod(i, self.n_space)
        return t + self.first_valid, s


def trim_for_delays(traj: FieldTrajectory, Q: int) -> AnalysisWindow:
    """Window of times for which all Q delays and the backward difference exist."""
    return AnalysisWindow(traj, Q)


def write_dataset(traj: FieldTrajectory, path) -> None:
    """Write a trajectory in the VSAF binary format (bit-exact round trip)."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(VSAF_MAGIC, VSAF_VERSION,
                              traj.n_samples, traj.n_space, traj.tau, traj.L))
        fh.write(np.ascontiguousarray(traj.data, dtype="<f8").tobytes())


def read_dataset(path) -> FieldTrajectory:
    """Read a VSAF file written by :func:`write_dataset`."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise FormatError("truncated payload: short header")
        magic, version, N, S, tau, L = _HEADER.unpack(header)
        if magic != VSAF_MAGIC:
            raise FormatError(f"bad magic: {magic!r}")
        if version != VSAF_VERSION:
            raise FormatError(f"version mismatch: {version}")
        payload = fh.read(8 * N * S)
        if len(payload) < 8 * N * S:
            raise FormatError("truncated payload")
        data = np.frombuffer(payload, dtype="<f8").reshape(N, S)
    return FieldTrajectory(data=data, tau=tau, L=L)


def export_csv(traj: FieldTrajectory, path) -> None:
    """Write rows t,y,value with 17 significant digits, one per sample."""
    grid = traj.grid
    with open(path, "w") as fh:
        fh.write("t,y,value\n")
        for n in range(traj.n_samples):
            t = n * traj.tau
            row = traj.data[n]
            for s in range(traj.n_space):
                fh.write(f"{t:.17g},{grid[s]:.17g},{row[s]:.17g}\n")
