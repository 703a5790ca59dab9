"""Source states and channels: two-mode squeezed vacuum, photon addition
and subtraction, loss, and an impure-source model.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .fock import (
    Cutoff,
    FockError,
    Mode,
    TwoModeState,
    annihilation,
    creation,
    embed,
    partial_trace,
    tensor,
)

#: make_tmsv raises when the truncated state retains less than this mass.
MIN_RETAINED_PROBABILITY = 0.999


class TruncationError(FockError):
    """Raised when a requested operation does not fit in the cutoff."""


class ZeroWeightError(FockError):
    """Raised when a conditional operation has vanishing success weight."""


@dataclass(frozen=True)
class TmsvParams:
    """Two-mode squeezing parameter lam in [0, 1).

    lam = tanh(r) for squeezing parameter r; the mean photon number of
    each reduced mode is lam**2 / (1 - lam**2).
    """

    lam: float

    def __post_init__(self):
        if not 0.0 <= self.lam < 1.0:
            raise FockError(f"lam must lie in [0, 1), got {self.lam}")

    def retained_probability(self, cutoff: Cutoff) -> float:
        """Probability mass of the ideal state kept by the truncation."""
        return 1.0 - self.lam ** (2 * (cutoff.n_max + 1))

    @property
    def mean_photons(self) -> float:
        return self.lam**2 / (1.0 - self.lam**2)


@dataclass(frozen=True)
class ChannelParams:
    """Pure-loss (or thermal-loss) bosonic channel of transmissivity T."""

    transmissivity: float
    thermal_mean_photons: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.transmissivity <= 1.0:
            raise FockError(
                f"transmissivity must lie in (0, 1], got {self.transmissivity}"
            )
        if self.thermal_mean_photons < 0.0:
            raise FockError("thermal_mean_photons must be >= 0")

    @classmethod
    def from_loss_db(cls, loss_db: float, thermal_mean_photons: float = 0.0):
        """Build from attenuation in dB, loss_db = -10 log10(T)."""
        if loss_db < 0.0:
            raise FockError(f"loss_db must be >= 0, got {loss_db}")
        return cls(10.0 ** (-loss_db / 10.0), thermal_mean_photons)

    @property
    def loss_db(self) -> float:
        return -10.0 * np.log10(self.transmissivity)


@dataclass(frozen=True)
class ImpurityParams:
    """Source impurity model: symmetric loss plus phase diffusion.

    ``loss`` is the fraction lost from each mode before any photon
    addition; ``phase_sigma`` is the standard deviation (radians) of a
    Gaussian phase jitter applied to mode A relative to mode B.
    """

    loss: float = 0.0
    phase_sigma: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.loss < 1.0:
            raise FockError(f"loss must lie in [0, 1), got {self.loss}")
        if self.phase_sigma < 0.0:
            raise FockError("phase_sigma must be >= 0")

    @classmethod
    def calibrated(cls) -> "ImpurityParams":
        """Phase jitter tuned so the source purity is about 0.71.

        At lam = 0.5 the resulting purity sequence under repeated
        photon addition is roughly 0.71, 0.55, 0.46, 0.39.
        """
        return cls(0.0, 1.0)


def make_tmsv(params: TmsvParams, cutoff: Cutoff) -> TwoModeState:
    """Truncated two-mode squeezed vacuum sqrt(1-lam**2) sum lam**n |n,n>.

    Raises TruncationError when the cutoff keeps less than
    ``MIN_RETAINED_PROBABILITY`` of the ideal state's mass.
    """
    retained = params.retained_probability(cutoff)
    if retained < MIN_RETAINED_PROBABILITY:
        raise TruncationError(
            f"cutoff {cutoff.n_max} keeps only {retained:.6f} of the state; "
            f"increase n_max or reduce lam={params.lam}"
        )
    d = cutoff.dim
    psi = np.zeros(d * d, dtype=np.complex128)
    n = np.arange(d)
    psi[n * d + n] = params.lam**n
    psi /= np.linalg.norm(psi)
    return TwoModeState.from_vector(psi, cutoff)


def _mode_populations(state: TwoModeState, mode: Mode) -> np.ndarray:
    return np.diag(partial_trace(state, mode)).real


def add_photons(state: TwoModeState, mode: Mode, k: int) -> tuple[TwoModeState, float]:
    """Conditionally add k photons to one mode.

    Applies adag**k rho a**k and renormalizes.  Returns the normalized
    state together with the unnormalized trace, which is the relative
    success weight of the heralded operation.  k = 0 is the identity
    with weight 1.

    Raises TruncationError when the mode already holds more than 1e-6
    of its population at the top Fock level, the sign that the raised
    operator would push non-negligible amplitude past the cutoff.
    """
    if k < 0:
        raise FockError(f"k must be >= 0, got {k}")
    if k == 0:
        return state, 1.0
    if k > state.cutoff.n_max:
        raise TruncationError(f"cannot add {k} photons under cutoff {state.cutoff.n_max}")
    pops = _mode_populations(state, mode)
    if pops[-1] > 1e-6:
        raise TruncationError(
            f"top-level population {pops[-1]:.3e} signals inadequate truncation "
            f"for photon addition at cutoff {state.cutoff.n_max}"
        )
    op = embed(np.linalg.matrix_power(creation(state.cutoff), k), mode, state.cutoff)
    raw = op @ state.entries @ op.conj().T
    weight = float(raw.trace().real)
    if weight <= 0.0:
        raise ZeroWeightError("photon addition has zero success weight")
    return TwoModeState.from_matrix(raw / weight, state.cutoff), weight


def subtract_photons(
    state: TwoModeState, mode: Mode, k: int
) -> tuple[TwoModeState, float]:
    """Conditionally subtract k photons from one mode; see add_photons.

    Raises ZeroWeightError when the operation annihilates the state,
    e.g. any subtraction from vacuum.
    """
    if k < 0:
        raise FockError(f"k must be >= 0, got {k}")
    if k == 0:
        return state, 1.0
    op = embed(np.linalg.matrix_power(annihilation(state.cutoff), k), mode, state.cutoff)
    raw = op @ state.entries @ op.conj().T
    weight = float(raw.trace().real)
    if weight <= 1e-14:
        raise ZeroWeightError(f"subtracting {k} photons has zero success weight")
    return TwoModeState.from_matrix(raw / weight, state.cutoff), weight


def loss_kraus(transmissivity: float, cutoff: Cutoff) -> list[np.ndarray]:
    """Kraus operators of the pure-loss channel on one truncated mode.

    K_l[n - l, n] = sqrt(C(n, l) T**(n-l) (1-T)**l) for l = 0..n_max.
    """
    d = cutoff.dim
    t = transmissivity
    ops = []
    for loss_count in range(d):
        mat = np.zeros((d, d), dtype=np.complex128)
        for n in range(loss_count, d):
            mat[n - loss_count, n] = np.sqrt(
                comb(n, loss_count) * t ** (n - loss_count) * (1.0 - t) ** loss_count
            )
        ops.append(mat)
    return ops


def _thermal_diagonal(mean_photons: float, cutoff: Cutoff) -> np.ndarray:
    n = np.arange(cutoff.dim, dtype=np.float64)
    p = (mean_photons / (1.0 + mean_photons)) ** n / (1.0 + mean_photons)
    return p / p.sum()


def _beamsplitter_unitary(transmissivity: float, cutoff: Cutoff) -> np.ndarray:
    """Two-mode beamsplitter expm(theta (adag b - a bdag)), cos(theta)**2 = T."""
    from scipy.linalg import expm

    a = annihilation(cutoff)
    eye = np.eye(cutoff.dim, dtype=np.complex128)
    theta = np.arccos(np.sqrt(transmissivity))
    gen = np.kron(a.conj().T, eye) @ np.kron(eye, a)
    gen = gen - gen.conj().T
    return expm(theta * gen)


def loss_channel(
    state: TwoModeState, mode: Mode, params: ChannelParams
) -> TwoModeState:
    """Attenuate one mode of a two-mode state.

    Pure loss (thermal_mean_photons == 0) is applied through the Kraus
    decomposition.  Thermal loss mixes the mode with a truncated thermal
    ancilla on a beamsplitter of the same transmissivity and traces the
    ancilla out.  T = 1 with zero excess noise returns the input.
    """
    if params.transmissivity == 1.0 and params.thermal_mean_photons == 0.0:
        return state
    cutoff = state.cutoff
    d = cutoff.dim
    if params.thermal_mean_photons == 0.0:
        out = np.zeros_like(state.entries)
        for kraus in loss_kraus(params.transmissivity, cutoff):
            op = embed(kraus, mode, cutoff)
            out += op @ state.entries @ op.conj().T
        return TwoModeState.from_matrix(out, cutoff)

    # Beamsplitter dilation on the explicit (A, B, ancilla) space.
    bs = _beamsplitter_unitary(params.transmissivity, cutoff)
    bs4 = bs.reshape(d, d, d, d)  # (s_out, e_out, s_in, e_in)
    eye = np.eye(d)
    if mode is Mode.A:
        u3 = np.einsum("aeAE,bB->abeABE", bs4, eye)
    else:
        u3 = np.einsum("beBE,aA->abeABE", bs4, eye)
    u3 = u3.reshape(d**3, d**3)
    therm = np.diag(_thermal_diagonal(params.thermal_mean_photons, cutoff))
    rho3 = np.kron(state.entries, therm.astype(np.complex128))
    rho3 = u3 @ rho3 @ u3.conj().T
    out = np.einsum("iaja->ij", rho3.reshape(d * d, d, d * d, d))
    return TwoModeState.from_matrix(out, cutoff)


def noisy_tmsv(
    params: TmsvParams, impurity: ImpurityParams, cutoff: Cutoff
) -> TwoModeState:
    """Impure source: TMSV followed by symmetric loss and phase diffusion.

    With zero impurity this returns exactly make_tmsv(params, cutoff).
    Phase diffusion averages exp(-i phi n_A) rho exp(i phi n_A) over a
    Gaussian phi of standard deviation phase_sigma using Gauss-Hermite
    quadrature, which keeps the output a proper mixture.
    """
    state = make_tmsv(params, cutoff)
    if impurity.loss == 0.0 and impurity.phase_sigma == 0.0:
        return state
    if impurity.loss > 0.0:
        chan = ChannelParams(1.0 - impurity.loss)
        state = loss_channel(state, Mode.A, chan)
        state = loss_channel(state, Mode.B, chan)
    if impurity.phase_sigma > 0.0:
        nodes, weights = hermegauss(21)
        weights = weights / weights.sum()
        d = cutoff.dim
        n = np.arange(d)
        out = np.zeros_like(state.entries)
        for node, w in zip(nodes, weights):
            phi = impurity.phase_sigma * node
            u = embed(np.diag(np.exp(-1j * phi * n)), Mode.A, cutoff)
            out += w * (u @ state.entries @ u.conj().T)
        state = TwoModeState.from_matrix(out, cutoff)
    return state
