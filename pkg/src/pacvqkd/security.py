"""Secret-key-rate estimation under reverse reconciliation.

The asymptotic rate is K = I_AB - chi_E in bits per retained round.
I_AB is the mutual information of the two homodyne quadratures taken
from the gridded joint distribution.  chi_E is the Holevo bound on
Eve's information about Bob's outcome computed directly from the
truncated state: Eve holds the purification, so S(E) = S(AB) and the
state of Eve after Bob's rank-one homodyne outcome y has the entropy of
the conditional Alice operator <y| rho_AB |y> / p(y).  No Gaussian
assumption enters; the Gaussian-comparator rates from the covariance
matrix are provided separately.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import log2

import numpy as np

from .analysis import CovarianceMatrix, covariance
from .fock import (
    ENTROPY_EIGENVALUE_FLOOR,
    FockError,
    Mode,
    TwoModeState,
    von_neumann_entropy,
)
from .grids import GridCoverageError, QuadratureGrid
from .measurement import homodyne_amplitudes

#: Tolerated probability mass missing from the conditioning grid.
EDGE_MASS_TOL = 1e-4

#: Minimum mass a joint quadrature grid must capture.
MIN_JOINT_COVERAGE = 0.999


@dataclass(frozen=True)
class JointDistribution:
    """Joint homodyne density on a product grid; rows are Alice's axis."""

    table: np.ndarray  # (nx, ny) nonnegative density values
    x_axis: np.ndarray
    y_axis: np.ndarray
    dx: float
    dy: float

    def mass(self) -> float:
        return float(self.table.sum() * self.dx * self.dy)


def joint_quadrature_distribution(
    state: TwoModeState,
    theta_a: float = 0.0,
    theta_b: float = 0.0,
    grid: QuadratureGrid = QuadratureGrid(),
) -> JointDistribution:
    """Joint density of ideal homodyne outcomes on modes A and B.

    Raises GridCoverageError when the grid captures less than
    ``MIN_JOINT_COVERAGE`` of the state's mass.
    """
    cutoff = state.cutoff
    d = cutoff.dim
    xs = grid.points
    ha = homodyne_amplitudes(xs, theta_a, cutoff)
    hb = homodyne_amplitudes(xs, theta_b, cutoff)
    rho4 = state.entries.reshape(d, d, d, d)
    cond = np.einsum("ir,rsqt,iq->ist", ha.conj(), rho4, ha, optimize=True)
    table = np.einsum("js,ist,jt->ij", hb.conj(), cond, hb, optimize=True).real
    table = np.clip(table, 0.0, None)
    dist = JointDistribution(
        table=table, x_axis=xs, y_axis=xs.copy(), dx=grid.step, dy=grid.step
    )
    if dist.mass() < MIN_JOINT_COVERAGE:
        raise GridCoverageError(
            f"quadrature grid captures only {dist.mass():.4f} of the state"
        )
    return dist


def mutual_information(dist: JointDistribution) -> float:
    """I(X;Y) in bits by Riemann sum over the gridded joint density."""
    p = dist.table * (dist.dx * dist.dy)
    total = p.sum()
    p = p / total
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    mask = p > 0.0
    ratio = np.where(mask, p / np.where(mask, px * py, 1.0), 1.0)
    return float(np.sum(p[mask] * np.log2(ratio[mask])))


def _batched_entropy_bits(mats: np.ndarray) -> np.ndarray:
    """Entropies of a stack of Hermitian PSD matrices, in bits."""
    vals = np.linalg.eigvalsh(mats)
    vals = np.clip(vals, 0.0, None)
    safe = np.where(vals > ENTROPY_EIGENVALUE_FLOOR, vals, 1.0)
    return -np.sum(np.where(vals > ENTROPY_EIGENVALUE_FLOOR, vals * np.log2(safe), 0.0), axis=-1)


def holevo_bound(
    state: TwoModeState,
    theta_b: float = 0.0,
    grid: QuadratureGrid = QuadratureGrid(),
) -> float:
    """Holevo information chi(E; y) for Bob's homodyne outcome y.

    chi = S(AB) - integral dy p(y) S(<y|rho|y> / p(y)), with the outer
    entropy supplied by the purification argument S(E) = S(AB).  Warns
    when the unconditioned mass missed by the grid exceeds
    ``EDGE_MASS_TOL``.
    """
    cutoff = state.cutoff
    d = cutoff.dim
    ys = grid.points
    hb = homodyne_amplitudes(ys, theta_b, cutoff)
    rho4 = state.entries.reshape(d, d, d, d)
    # alice_y[y, r, q] = <y| rho |y> as an operator on mode A
    alice_y = np.einsum("ys,rsqt,yt->yrq", hb.conj(), rho4, hb, optimize=True)
    p_y = np.einsum("yrr->y", alice_y).real
    mass = float(p_y.sum() * grid.step)
    if abs(1.0 - mass) > EDGE_MASS_TOL:
        warnings.warn(
            f"conditioning grid misses {1.0 - mass:.2e} of the homodyne mass"
        )
    keep = p_y > 1e-14
    norm = alice_y[keep] / p_y[keep][:, None, None]
    cond_entropy = float(
        np.sum(p_y[keep] * _batched_entropy_bits(norm)) * grid.step
    )
    return von_neumann_entropy(state.entries) - cond_entropy


def _g(nu: float) -> float:
    """Thermal-state entropy in bits for symplectic eigenvalue nu >= 1."""
    if nu <= 1.0 + 1e-12:
        return 0.0
    up = 0.5 * (nu + 1.0)
    dn = 0.5 * (nu - 1.0)
    return up * log2(up) - dn * log2(dn)


@dataclass(frozen=True)
class GaussianRates:
    """Key quantities of the Gaussian state sharing a covariance matrix."""

    i_ab: float
    chi_e: float

    @property
    def keyrate(self) -> float:
        return self.i_ab - self.chi_e


def gaussian_rates(
    cov: CovarianceMatrix, direction: str = "reverse"
) -> GaussianRates:
    """Rates of the Gaussian comparator state sharing this covariance.

    Works in vacuum-variance-1 units internally (V = 2 Sigma).  The key
    quadratures are x_A and x_B.  ``direction`` picks whose outcome the
    Holevo term conditions on: "reverse" (Bob, the default) or
    "forward" (Alice); forward reconciliation is exposed for
    completeness but experimental, and warns.
    """
    if direction not in ("reverse", "forward"):
        raise FockError(f"unknown reconciliation direction {direction!r}")
    if direction == "forward":
        warnings.warn("forward reconciliation is experimental")
    v = 2.0 * cov.matrix
    a_blk = v[0:2, 0:2]
    b_blk = v[2:4, 2:4]
    c_blk = v[0:2, 2:4]
    ax, bx, cx = v[0, 0], v[2, 2], v[0, 2]
    denom = ax * bx - cx * cx
    if denom <= 0.0:
        raise FockError("degenerate quadrature covariance")
    i_ab = 0.5 * log2(ax * bx / denom)

    nu = cov.symplectic_eigenvalues()
    s_ab = _g(2.0 * nu[0]) + _g(2.0 * nu[1])
    # Covariance of the unmeasured party after an ideal x homodyne.
    x_proj = np.diag([1.0, 0.0])
    if direction == "reverse":
        kept, measured, cross = a_blk, b_blk, c_blk
    else:
        kept, measured, cross = b_blk, a_blk, c_blk.T
    cond = kept - cross @ np.linalg.pinv(x_proj @ measured @ x_proj) @ cross.T
    det_cond = float(np.linalg.det(cond))
    nu_cond = float(np.sqrt(max(det_cond, 1.0)))
    chi_e = s_ab - _g(nu_cond)
    return GaussianRates(i_ab=i_ab, chi_e=chi_e)


def plob_bound(transmissivity: float) -> float:
    """Repeaterless key-rate ceiling -log2(1 - T) of a pure-loss channel."""
    if not 0.0 < transmissivity < 1.0:
        raise FockError(f"transmissivity must lie in (0, 1), got {transmissivity}")
    return -log2(1.0 - transmissivity)


@dataclass(frozen=True)
class SecurityReport:
    """Per-configuration key-rate summary.

    ``keyrate`` and the Gaussian comparator fields are per retained
    round; ``success_probability`` is reported alongside and only folded
    in by callers that account for the heralding overhead.  ``ber`` is
    attached by the protocol layer when requested.
    """

    k: int
    transmissivity: float
    loss_db: float
    i_ab: float
    chi_e: float
    keyrate: float
    gaussian_i_ab: float
    gaussian_chi_e: float
    gaussian_keyrate: float
    success_probability: float
    plob: float | None
    ber: float | None = None
    ber_stderr: float | None = None


def rate_loss_sweep(
    lam: float,
    k_values: list[int],
    transmissivities: list[float],
    cutoff=None,
    alpha_c_sq: float = 6.0,
    addition_mode: Mode = Mode.A,
    addition_before_loss: bool = True,
    grid: QuadratureGrid = QuadratureGrid(),
) -> list[SecurityReport]:
    """Reports for ideal photon-added states over a (k, T) grid.

    The channel always attenuates mode B; photons are added on
    ``addition_mode``.  With addition on mode A the two operations
    commute and ``addition_before_loss`` is immaterial; with addition
    on mode B it selects source-side (before) or receiver-side (after)
    distillation, and the heralding probability is evaluated on the
    state the addition actually sees.  Per-cell failures are reported
    as warnings and the sweep continues.
    """
    from .fock import Cutoff
    from .measurement import FilterParams, husimi_sigma_sq, predict_success
    from .states import (
        ChannelParams,
        TmsvParams,
        add_photons,
        loss_channel,
        make_tmsv,
    )

    cutoff = cutoff or Cutoff()
    base = make_tmsv(TmsvParams(lam), cutoff)
    reports: list[SecurityReport] = []
    for k in k_values:
        filt = FilterParams(k, alpha_c_sq)
        for t in transmissivities:
            try:
                chan = ChannelParams(t)
                if addition_before_loss:
                    pre = base
                else:
                    pre = loss_channel(base, Mode.B, chan)
                success = predict_success(
                    husimi_sigma_sq(pre, addition_mode), filt
                )
                state, _ = add_photons(pre, addition_mode, k)
                if addition_before_loss:
                    state = loss_channel(state, Mode.B, chan)
                reports.append(
                    evaluate_security(state, k, t, success, grid=grid)
                )
            except Exception as exc:  # noqa: BLE001 - cell isolation
                warnings.warn(f"sweep cell (k={k}, T={t}) failed: {exc}")
    return reports


def evaluate_security(
    state: TwoModeState,
    k: int,
    transmissivity: float,
    success_probability: float,
    theta_a: float = 0.0,
    theta_b: float = 0.0,
    grid: QuadratureGrid = QuadratureGrid(),
) -> SecurityReport:
    """Numeric and Gaussian-comparator rates for one protocol setting."""
    dist = joint_quadrature_distribution(state, theta_a, theta_b, grid)
    i_ab = mutual_information(dist)
    chi_e = holevo_bound(state, theta_b, grid)
    gauss = gaussian_rates(covariance(state))
    plob = plob_bound(transmissivity) if transmissivity < 1.0 else None
    return SecurityReport(
        k=k,
        transmissivity=transmissivity,
        loss_db=-10.0 * np.log10(transmissivity),
        i_ab=i_ab,
        chi_e=chi_e,
        keyrate=i_ab - chi_e,
        gaussian_i_ab=gauss.i_ab,
        gaussian_chi_e=gauss.chi_e,
        gaussian_keyrate=gauss.keyrate,
        success_probability=success_probability,
        plob=plob,
    )
