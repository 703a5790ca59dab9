"""Maximum-likelihood reconstruction from heterodyne/homodyne records.

The estimator is the diluted fixed-point iteration on

    R(rho) = sum_j Pi_j / Tr(Pi_j rho),
    rho <- N(G rho G),  G = (1 - d) I + d R(rho) / N,

with Pi_j the rank-one projector of record j, d the dilution in (0, 1]
and N the record count.  d = 1 is the plain R rho R update.  The
log-likelihood is tracked every iteration and must not decrease;
convergence is declared on the infidelity between successive iterates,
floored at the trace-distance lower bound D^2/2 to keep the criterion
meaningful once the fidelity evaluation rounds to 1.
"""

from __future__ import annotations

import json
import time
import warnings
from dataclasses import dataclass, field
from math import pi
from pathlib import Path

import numpy as np

from . import _kernels
from .fock import Cutoff, FockError, TwoModeState, fidelity
from .measurement import RecordBatch, hermite_functions

#: Record probabilities at or below this floor are excluded from updates.
PROBABILITY_FLOOR = 1e-14

#: Allowed backward drift of the log-likelihood per iteration.
MONOTONICITY_TOL = 1e-9


class LikelihoodDecreaseError(FockError):
    """Raised when an iteration lowers the tracked log-likelihood."""


@dataclass(frozen=True)
class MleConfig:
    """Stopping and damping controls for :func:`reconstruct`."""

    max_iterations: int = 500
    convergence_epsilon: float = 1e-6
    dilution: float = 1.0
    probability_floor: float = PROBABILITY_FLOOR

    def __post_init__(self):
        if self.max_iterations < 1:
            raise FockError("max_iterations must be >= 1")
        if self.convergence_epsilon <= 0.0:
            raise FockError("convergence_epsilon must be > 0")
        if not 0.0 < self.dilution <= 1.0:
            raise FockError(f"dilution must lie in (0, 1], got {self.dilution}")


@dataclass(frozen=True)
class PreparedProjectors:
    """Deduplicated projector factors for the accumulation kernel.

    ``ca``/``hb`` hold the unique coherent and homodyne amplitude rows;
    records are sorted by coherent row with ``group_start`` boundaries
    and ``h_idx`` giving each sorted record's homodyne row.
    """

    ca: np.ndarray
    hb: np.ndarray
    group_start: np.ndarray
    h_idx: np.ndarray
    n_records: int


def prepare_projectors(records: RecordBatch, cutoff: Cutoff) -> PreparedProjectors:
    """Group records by unique alpha and deduplicate homodyne settings."""
    if len(records) == 0:
        raise FockError("cannot prepare projectors for an empty batch")
    from .measurement import coherent_amplitudes

    uniq_a, inv_a = np.unique(records.alpha, return_inverse=True)
    order = np.argsort(inv_a, kind="stable")
    sorted_a = inv_a[order]
    group_start = np.searchsorted(sorted_a, np.arange(uniq_a.size + 1)).astype(np.int64)

    z = records.x + 1j * records.theta
    uniq_z, inv_z = np.unique(z, return_inverse=True)
    h = hermite_functions(uniq_z.real, cutoff).astype(np.complex128)
    h *= np.exp(-1j * np.outer(uniq_z.imag, np.arange(cutoff.dim)))

    return PreparedProjectors(
        ca=coherent_amplitudes(uniq_a, cutoff),
        hb=h,
        group_start=group_start,
        h_idx=inv_z[order].astype(np.int64),
        n_records=len(records),
    )


def r_operator(
    records: RecordBatch,
    rho: TwoModeState | np.ndarray,
    cutoff: Cutoff | None = None,
    floor: float = PROBABILITY_FLOOR,
) -> np.ndarray:
    """The operator R(rho) = sum_j Pi_j / p_j for a batch of records."""
    if isinstance(rho, TwoModeState):
        cutoff = rho.cutoff
        mat = rho.entries
    else:
        if cutoff is None:
            raise FockError("cutoff is required when rho is a bare matrix")
        mat = np.asarray(rho, dtype=np.complex128)
    prep = prepare_projectors(records, cutoff)
    r_mat, _, _ = _kernels.accumulate(
        mat, prep.ca, prep.hb, prep.group_start, prep.h_idx, floor
    )
    return r_mat


@dataclass
class MleDiagnostics:
    """Per-run record of the reconstruction loop."""

    iterations: int = 0
    converged: bool = False
    final_infidelity: float = float("nan")
    log_likelihoods: list[float] = field(default_factory=list)
    excluded_records: int = 0
    clipped_iterations: int = 0
    wall_time_s: float = 0.0
    backend: str = _kernels.BACKEND
    n_records: int = 0

    @property
    def final_log_likelihood(self) -> float:
        return self.log_likelihoods[-1] if self.log_likelihoods else float("nan")

    def to_json(self, path: str | Path) -> None:
        payload = {
            "iterations": self.iterations,
            "converged": self.converged,
            "final_infidelity": self.final_infidelity,
            "log_likelihoods": self.log_likelihoods,
            "final_log_likelihood": self.final_log_likelihood,
            "excluded_records": self.excluded_records,
            "clipped_iterations": self.clipped_iterations,
            "wall_time_s": self.wall_time_s,
            "backend": self.backend,
            "n_records": self.n_records,
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))


def reconstruct(
    records: RecordBatch,
    cutoff: Cutoff,
    config: MleConfig = MleConfig(),
) -> tuple[TwoModeState, MleDiagnostics]:
    """Maximum-likelihood state estimate from measurement records.

    Starts from the maximally mixed state and iterates the diluted
    R rho R update until the infidelity between successive iterates
    drops below ``config.convergence_epsilon`` or the iteration budget
    is exhausted.  A log-likelihood decrease beyond MONOTONICITY_TOL
    aborts with LikelihoodDecreaseError carrying the diagnostics so far.

    Returns the reconstructed state and an :class:`MleDiagnostics`.
    The reported log-likelihoods are natural-log per-record means and
    include the heterodyne measure constant -ln(pi).
    """
    t0 = time.perf_counter()
    prep = prepare_projectors(records, cutoff)
    dd = cutoff.two_mode_dim
    rho = np.eye(dd, dtype=np.complex128) / dd
    diag = MleDiagnostics(n_records=prep.n_records)
    eye = np.eye(dd, dtype=np.complex128)
    n = float(prep.n_records)

    prev_ll = -np.inf
    for iteration in range(1, config.max_iterations + 1):
        r_mat, ll_sum, excluded = _kernels.accumulate(
            rho, prep.ca, prep.hb, prep.group_start, prep.h_idx,
            config.probability_floor,
        )
        included = prep.n_records - excluded
        if included == 0:
            raise FockError("every record fell below the probability floor")
        mean_ll = ll_sum / included - np.log(pi)
        diag.log_likelihoods.append(float(mean_ll))
        diag.excluded_records = excluded
        diag.iterations = iteration
        if mean_ll < prev_ll - MONOTONICITY_TOL:
            diag.wall_time_s = time.perf_counter() - t0
            raise LikelihoodDecreaseError(
                f"log-likelihood fell from {prev_ll!r} to {mean_ll!r} "
                f"at iteration {iteration}; diagnostics: {diag}"
            )
        prev_ll = mean_ll

        growth = r_mat / n
        if config.dilution < 1.0:
            growth = (1.0 - config.dilution) * eye + config.dilution * growth
        new = growth @ rho @ growth
        new = 0.5 * (new + new.conj().T)
        new /= new.trace().real

        state = TwoModeState.from_matrix(new, cutoff)
        if state.clipped:
            diag.clipped_iterations += 1
        new = state.entries

        infid = 1.0 - fidelity(rho, new)
        # the Uhlmann evaluation saturates to exactly 1 in float64 while
        # the iterate still moves; floor the measurement at the rigorous
        # lower bound (1 - F) >= D^2/2 with D the trace distance so a
        # rounded-off fidelity cannot fake convergence
        tdist = 0.5 * float(np.abs(np.linalg.eigvalsh(new - rho)).sum())
        infid = max(infid, 0.5 * tdist * tdist)
        diag.final_infidelity = float(infid)
        rho = new
        if infid < config.convergence_epsilon:
            diag.converged = True
            break

    if not diag.converged:
        warnings.warn(
            f"reconstruction stopped at {diag.iterations} iterations with "
            f"infidelity {diag.final_infidelity:.3e}"
        )
    diag.wall_time_s = time.perf_counter() - t0
    return TwoModeState.from_matrix(rho, cutoff), diag
