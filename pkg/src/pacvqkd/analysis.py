"""Entanglement and non-Gaussianity measures of two-mode states.

All logarithms are base 2; quadratures follow the vacuum-variance-1/2
convention of :mod:`pacvqkd.fock`.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import pi, sqrt

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .fock import (
    Cutoff,
    FockError,
    Mode,
    TwoModeState,
    annihilation,
    embed,
    partial_trace,
    partial_transpose,
    trace_norm,
)
from .grids import GridCoverageError, PhaseSpaceGrid, QuadratureGrid
from .measurement import homodyne_amplitudes

#: Slack for the uncertainty-relation check on covariance matrices;
#: wider than the state PSD tolerance because truncation itself shifts
#: the bound by the top Fock level's population.
UNCERTAINTY_TOL = 1e-4


def log_negativity(state: TwoModeState) -> float:
    """E_N = log2 of the trace norm of the partial transpose.

    Zero for separable states; log2((1 + lam) / (1 - lam)) for the
    ideal two-mode squeezed vacuum.
    """
    return float(np.log2(trace_norm(partial_transpose(state, Mode.B))))


def quadrature_marginal(
    state: TwoModeState, mode: Mode, theta: float, grid: QuadratureGrid
) -> np.ndarray:
    """Homodyne density of one mode along angle theta, sampled on grid."""
    rho = partial_trace(state, mode)
    h = homodyne_amplitudes(grid.points, theta, state.cutoff)
    dens = np.einsum("xs,st,xt->x", h.conj(), rho, h, optimize=True).real
    return np.clip(dens, 0.0, None)


def kurtosis(
    state: TwoModeState,
    mode: Mode,
    theta: float = 0.0,
    grid: QuadratureGrid = QuadratureGrid(-14.0, 14.0, 0.01),
) -> float:
    """Quadrature kurtosis E[(x - mu)**4] / Var(x)**2; 3 for Gaussians.

    Computed from the gridded homodyne marginal.  Raises
    GridCoverageError when the grid spans less than six standard
    deviations on either side of the mean.
    """
    dens = quadrature_marginal(state, mode, theta, grid)
    xs = grid.points
    mass = dens.sum() * grid.step
    dens = dens / mass
    mu = float(np.sum(xs * dens) * grid.step)
    var = float(np.sum((xs - mu) ** 2 * dens) * grid.step)
    sigma = sqrt(var)
    if grid.hi - mu < 6.0 * sigma or mu - grid.lo < 6.0 * sigma:
        raise GridCoverageError(
            f"grid [{grid.lo}, {grid.hi}] spans under six sigmas around {mu:.3f}"
        )
    fourth = float(np.sum((xs - mu) ** 4 * dens) * grid.step)
    return fourth / var**2


def photon_number_joint(state: TwoModeState) -> np.ndarray:
    """Joint photon-number distribution P[n_A, n_B], shape (d, d)."""
    d = state.dim
    return np.diag(state.entries).real.reshape(d, d).copy()


def displacement_matrix(beta: complex, cutoff: Cutoff) -> np.ndarray:
    """Matrix elements <m|D(beta)|n> of the displacement operator.

    Uses the associated-Laguerre closed form, exact at any truncation:
    for m >= n, <m|D|n> = sqrt(n!/m!) beta**(m-n) e^(-|beta|^2/2)
    L_n^{m-n}(|beta|^2), and <m|D|n> = conj(<n|D(-beta)|m>) below the
    diagonal.
    """
    d = cutoff.dim
    out = np.empty((d, d), dtype=np.complex128)
    mag_sq = abs(beta) ** 2
    damp = np.exp(-0.5 * mag_sq)
    lg = gammaln(np.arange(d + 1))
    for m in range(d):
        for n in range(m + 1):
            diff = m - n
            amp = (
                np.exp(0.5 * (lg[n + 1] - lg[m + 1]))
                * beta**diff
                * damp
                * eval_genlaguerre(n, diff, mag_sq)
            )
            out[m, n] = amp
            if m != n:
                out[n, m] = np.conj(amp) * (-1.0) ** diff
    return out


@dataclass(frozen=True)
class WignerMap:
    """Wigner function samples of one mode over a square (x, p) grid."""

    grid: PhaseSpaceGrid
    values: np.ndarray  # (size, size) real, rows index x, columns p

    @property
    def origin_value(self) -> float:
        ax = self.grid.axis
        i = int(np.argmin(np.abs(ax)))
        return float(self.values[i, i])

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.step**2)


def wigner(
    state: TwoModeState,
    mode: Mode,
    grid: PhaseSpaceGrid = PhaseSpaceGrid(-4.0, 4.0, 0.08),
) -> WignerMap:
    """Wigner function of one mode via the displaced-parity form.

    W(x, p) = (1/pi) Tr[rho D(2 alpha) Pi] with alpha = (x + i p)/sqrt(2)
    and Pi the photon-number parity; the displacement matrix elements
    are exact at the truncation, so no secondary cutoff enters.
    """
    rho = partial_trace(state, mode)
    cutoff = state.cutoff
    d = cutoff.dim
    parity = (-1.0) ** np.arange(d)
    ax = grid.axis
    xg, pg = np.meshgrid(ax, ax, indexing="ij")
    beta = (2.0 / sqrt(2.0)) * (xg + 1j * pg).ravel()
    mag_sq = np.abs(beta) ** 2
    damp = np.exp(-0.5 * mag_sq)
    lg = gammaln(np.arange(d + 1))
    # Tr(rho D Pi) = sum_{n m} rho[n, m] parity[n] D[m, n]; fold the
    # lower triangle through <n|D|m> = conj(<m|D|n>) (-1)**(m - n).
    acc = np.zeros(beta.size, dtype=np.complex128)
    for m in range(d):
        for n in range(m + 1):
            diff = m - n
            dmn = (
                np.exp(0.5 * (lg[n + 1] - lg[m + 1]))
                * beta**diff
                * damp
                * eval_genlaguerre(n, diff, mag_sq)
            )
            acc += rho[n, m] * parity[n] * dmn
            if m != n:
                acc += rho[m, n] * parity[m] * np.conj(dmn) * (-1.0) ** diff
    vals = (acc.real / pi).reshape(ax.size, ax.size)
    return WignerMap(grid=grid, values=vals)


def count_density_lobes(values: np.ndarray, floor_fraction: float = 1e-3) -> int:
    """Number of separated density lobes along a 1-D cross-section.

    A lobe is a maximal run of points above ``floor_fraction`` times
    the peak, so nodes where the density (nearly) vanishes split lobes.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise FockError("expected a 1-D cross-section")
    above = values > floor_fraction * values.max()
    return int(np.sum(above[1:] & ~above[:-1]) + (1 if above[0] else 0))


@dataclass(frozen=True)
class CovarianceMatrix:
    """First and second quadrature moments of (x_A, p_A, x_B, p_B).

    ``matrix`` uses the symmetrized covariance Cov(u, v) =
    <uv + vu>/2 - <u><v> in vacuum-variance-1/2 units.
    """

    matrix: np.ndarray  # (4, 4) real symmetric
    means: np.ndarray  # (4,) real

    def symplectic_eigenvalues(self) -> np.ndarray:
        """Moduli nu_1 >= nu_2 of the eigenvalues of i Omega Sigma."""
        omega = np.array(
            [[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]],
            dtype=np.float64,
        )
        vals = np.abs(np.linalg.eigvals(1j * omega @ self.matrix))
        # eigenvalues come in +/- pairs; keep one of each
        return np.sort(vals)[::2][::-1].copy()


def covariance(state: TwoModeState) -> CovarianceMatrix:
    """Symmetrized quadrature covariance of a two-mode state.

    Raises FockError when the matrix violates the uncertainty relation
    Sigma + (i/2) Omega >= 0 beyond the PSD tolerance.
    """
    cutoff = state.cutoff
    a = annihilation(cutoff)
    x1 = (a + a.conj().T) / sqrt(2.0)
    p1 = -1j * (a - a.conj().T) / sqrt(2.0)
    quads = [
        embed(x1, Mode.A, cutoff),
        embed(p1, Mode.A, cutoff),
        embed(x1, Mode.B, cutoff),
        embed(p1, Mode.B, cutoff),
    ]
    rho = state.entries
    means = np.array([np.einsum("ij,ji->", rho, q).real for q in quads])
    mat = np.empty((4, 4), dtype=np.float64)
    for i in range(4):
        for j in range(i, 4):
            anti = quads[i] @ quads[j] + quads[j] @ quads[i]
            mat[i, j] = mat[j, i] = (
                0.5 * np.einsum("ij,ji->", rho, anti).real - means[i] * means[j]
            )
    omega = np.array(
        [[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]],
        dtype=np.float64,
    )
    test = mat + 0.5j * omega
    min_eig = float(np.linalg.eigvalsh(test)[0])
    # The truncated commutator [a, adag] misses the identity by
    # d |n_max><n_max|, so the ideal-Omega uncertainty test can dip
    # negative by roughly the top-level population; the tolerance has
    # to absorb that, not just roundoff.
    if min_eig < -UNCERTAINTY_TOL:
        raise FockError(f"covariance violates uncertainty (min eig {min_eig:.3e})")
    return CovarianceMatrix(matrix=mat, means=means)
