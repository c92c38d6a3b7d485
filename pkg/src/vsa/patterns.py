"""Pattern outputs: coefficients, reconstruction, variances, diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import AnalysisWindow, FieldTrajectory
from .errors import ValidationError
from .markov import MarkovEigenbasis


def _flat_field(window: AnalysisWindow) -> np.ndarray:
    return window.values.reshape(-1)


def expansion_coefficients(basis: MarkovEigenbasis, window: AnalysisWindow) -> np.ndarray:
    """c_j = <phi_dual_j, F> under the product-point weights."""
    F = _flat_field(window)
    if basis.n_points != window.n_points:
        raise ValidationError("eigenbasis and window are misaligned")
    return (basis.phi_dual * basis.point_weights[:, None]).T @ F


def reconstruct(basis: MarkovEigenbasis, coeffs: np.ndarray,
                selected) -> np.ndarray:
    """Partial sum sum_{j in selected} c_j phi_j over (n, s)."""
    selected = np.asarray(list(selected), dtype=int)
    if selected.size and (selected.min() < 0 or selected.max() >= basis.n_eig):
        raise ValidationError("selected eigenpair index out of range")
    return basis.phi[:, selected] @ np.asarray(coeffs)[selected]


def explained_variance(phi_j: np.ndarray, window: AnalysisWindow,
                       point_weights: np.ndarray) -> float:
    """|<F, phi>|^2 / (|phi|^2 |F|^2) under the product-point weights."""
    F = _flat_field(window)
    w = np.asarray(point_weights, dtype=np.float64)
    nf2 = float(w @ (F * F))
    if nf2 == 0.0:
        raise ValidationError("explained variance undefined for zero field")
    np2 = float(w @ (phi_j * phi_j))
    inner = float(w @ (F * phi_j))
    return inner * inner / (np2 * nf2)


def level_set_concentration(phi_j: np.ndarray, window: AnalysisWindow,
                            n_bins: int = 20) -> float:
    """How nearly constant phi_j is on level sets of the input field.

    Samples are binned by field-value quantiles; the score is one minus the
    ratio of the mean within-bin variance to the total variance of phi_j.
    """
    if n_bins < 5:
        raise ValidationError("n_bins must be >= 5")
    F = _flat_field(window)
    if np.ptp(F) == 0.0:
        raise ValidationError("degenerate binning: constant field")
    phi = np.asarray(phi_j, dtype=np.float64)
    total = phi.var()
    if total == 0.0:
        return 1.0
    edges = np.quantile(F, np.linspace(0, 1, n_bins + 1))
    which = np.clip(np.searchsorted(edges, F, side="right") - 1, 0, n_bins - 1)
    within = 0.0
    used = 0
    for b in range(n_bins):
        sel = phi[which == b]
        if sel.size > 1:
            within += sel.var()
            used += 1
    if used == 0:
        return 1.0
    return 1.0 - (within / used) / total


def power_spectrum(phi_j: np.ndarray, window: AnalysisWindow) -> tuple[np.ndarray, np.ndarray]:
    """Hann-windowed power spectrum of phi_j in time, averaged over space.

    Returns (frequencies in cycles per time unit, mean spectrum); the series
    at each grid point has its mean removed before windowing.
    """
    n_eff, S = window.n_eff, window.n_space
    cols = np.asarray(phi_j, dtype=np.float64).reshape(n_eff, S)
    cols = cols - cols.mean(axis=0, keepdims=True)
    taper = np.hanning(n_eff)[:, None]
    spec = np.abs(np.fft.rfft(cols * taper, axis=0)) ** 2
    freqs = np.fft.rfftfreq(n_eff, d=window.traj.tau)
    return freqs, spec.mean(axis=1)


def frequency_concentration(phi_j: np.ndarray, window: AnalysisWindow,
                            top_k: int = 4) -> float:
    """Fraction of temporal spectral energy inside the top_k frequency bins."""
    if window.n_eff < 64:
        raise ValidationError("need at least 64 time samples")
    _, spec = power_spectrum(phi_j, window)
    total = spec.sum()
    if total == 0.0:
        return 0.0
    top = np.sort(spec)[::-1][:top_k].sum()
    return float(top / total)


def dominant_frequency(phi_j: np.ndarray, window: AnalysisWindow) -> float:
    """Frequency (cycles per time unit) of the largest nonzero spectral bin."""
    freqs, spec = power_spectrum(phi_j, window)
    return float(freqs[1 + np.argmax(spec[1:])])


def transverse_wavenumber(phi_j: np.ndarray, window: AnalysisWindow,
                          n_bins: int = 64, smooth: int = 5) -> int:
    """Oscillation count of phi_j across the level sets of the field.

    Proxy: sort samples by field value, average phi_j in quantile bins,
    lightly smooth, and count sign changes of the centered profile.
    """
    F = _flat_field(window)
    phi = np.asarray(phi_j, dtype=np.float64)
    edges = np.quantile(F, np.linspace(0, 1, n_bins + 1))
    which = np.clip(np.searchsorted(edges, F, side="right") - 1, 0, n_bins - 1)
    profile = np.full(n_bins, np.nan)
    for b in range(n_bins):
        sel = phi[which == b]
        if sel.size:
            profile[b] = sel.mean()
    profile = profile[np.isfinite(profile)]
    if smooth > 1 and profile.size > smooth:
        kernel = np.ones(smooth) / smooth
        profile = np.convolve(profile, kernel, mode="valid")
    centered = profile - profile.mean()
    signs = np.sign(centered)
    signs = signs[signs != 0]
    return int((np.diff(signs) != 0).sum())


@dataclass(frozen=True)
class PatternSet:
    """Selected expansions of the observed field in the eigenbasis."""

    basis: MarkovEigenbasis
    coeffs: np.ndarray
    variances: np.ndarray
    selected: np.ndarray


def pattern_set(basis: MarkovEigenbasis, window: AnalysisWindow,
                selected=None) -> PatternSet:
    coeffs = expansion_coefficients(basis, window)
    variances = np.array([
        explained_variance(basis.phi[:, j], window, basis.point_weights)
        for j in range(basis.n_eig)])
    if selected is None:
        selected = np.arange(basis.n_eig)
    return PatternSet(basis=basis, coeffs=coeffs, variances=variances,
                      selected=np.asarray(selected, dtype=int))


@dataclass(frozen=True)
class Diagnostics:
    """Per-eigenfunction interpretability scores."""

    level_set_score: np.ndarray
    frequency_score: np.ndarray
    dominant_freq: np.ndarray


def diagnostics(basis: MarkovEigenbasis, window: AnalysisWindow,
                n_bins: int = 20, top_k: int = 4) -> Diagnostics:
    k = basis.n_eig
    level = np.empty(k)
    fconc = np.empty(k)
    dfreq = np.empty(k)
    for j in range(k):
        level[j] = level_set_concentration(basis.phi[:, j], window, n_bins)
        fconc[j] = frequency_concentration(basis.phi[:, j], window, top_k)
        dfreq[j] = dominant_frequency(basis.phi[:, j], window)
    return Diagnostics(level_set_score=level, frequency_score=fconc,
                       dominant_freq=dfreq)


def diagnostics_csv(path, basis: MarkovEigenbasis, patterns: PatternSet,
                    diag: Diagnostics) -> None:
    with open(path, "w") as fh:
        fh.write("j,lambda,variance,level_set,freq_conc\n")
        for j in range(basis.n_eig):
            fh.write(f"{j},{basis.lambdas[j]:.17g},{patterns.variances[j]:.17g},"
                     f"{diag.level_set_score[j]:.17g},{diag.frequency_score[j]:.17g}\n")


def eigenfunction_csv(path, basis: MarkovEigenbasis, window: AnalysisWindow,
                      j: int) -> None:
    """Rows n,t,s,y,phi for one eigenfunction over the trimmed window."""
    phi = basis.phi[:, j].reshape(window.n_eff, window.n_space)
    grid = window.traj.grid
    tau = window.traj.tau
    with open(path, "w") as fh:
        fh.write("n,t,s,y,phi\n")
        for t in range(window.n_eff):
            n = t + window.first_valid
            for s in range(window.n_space):
                fh.write(f"{n},{n * tau:.17g},{s},{grid[s]:.17g},{phi[t, s]:.17g}\n")


def symmetry_residual(traj: FieldTrajectory, params, g: int):
    """Spectral effect of rolling the spatial grid by g points.

    Runs the full pipeline on the original and on the rolled trajectory and
    reports (max eigenvalue deviation, subspace residual between permuted
    original eigenfunctions and the rolled run's, skipping near-degenerate
    clusters).
    """
    from .pipeline import run_vsa

    S = traj.n_space
    g = g % S
    rolled = FieldTrajectory(data=np.roll(traj.data, g, axis=1),
                             tau=traj.tau, L=traj.L)
    res_a = run_vsa(traj, params)
    res_b = run_vsa(rolled, params)
    lam_a, lam_b = res_a.basis.lambdas, res_b.basis.lambdas
    eig_dev = float(np.abs(lam_a - lam_b).max())

    n_eff = res_a.window.n_eff
    perm = (np.arange(res_a.window.n_points)
            .reshape(n_eff, S)[:, (np.arange(S) - g) % S].reshape(-1))
    # phi on the rolled run at (n, s) should match original at (n, s - g)
    phi_a = res_a.basis.phi_hat[perm]
    phi_b = res_b.basis.phi_hat
    w = res_a.basis.point_weights
    groups = _split_by_gaps(lam_a)
    worst = 0.0
    for grp in groups:
        A = phi_a[:, grp]
        Bv = phi_b[:, grp]
        proj = (A * w[:, None]).T @ Bv
        resid = Bv - A @ proj
        worst = max(worst, float(np.sqrt((w[:, None] * resid * resid).sum())))
    return eig_dev, worst


def _split_by_gaps(lam: np.ndarray, gap: float = 1e-6) -> list[list[int]]:
    """Contiguous eigenvalue clusters separated by gaps above the threshold."""
    groups, cur = [], [0]
    for j in range(1, len(lam)):
        if abs(lam[j] - lam[j - 1]) < gap:
            cur.append(j)
        else:
            groups.append(cur)
            cur = [j]
    groups.append(cur)
    # drop clusters that touch the truncated end of the spectrum
    if len(groups) > 1:
        groups = groups[:-1]
    return groups
