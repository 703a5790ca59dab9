"""Truncated Fock-space linear algebra for two bosonic modes.

Conventions used throughout the package:

* quadratures are x = (a + adag) / sqrt(2), p = -i (a - adag) / sqrt(2), so
  the vacuum variance is 1/2 per quadrature;
* entropies and key quantities are in bits (base-2 logarithms);
* a two-mode operator on modes (A, B) with single-mode dimension d is a
  dense (d**2, d**2) complex matrix indexed row-major, i.e. basis state
  |r, s> maps to flat index d * r + s.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

#: Vacuum quadrature variance fixed by the x = (a + adag)/sqrt(2) convention.
VACUUM_VARIANCE = 0.5

#: Tolerance on Hermiticity and unit trace of density matrices.
MATRIX_TOL = 1e-10

#: A density matrix is accepted as positive when min eigenvalue >= -PSD_TOL.
PSD_TOL = 1e-8

#: Eigenvalues below this floor are dropped from entropy sums.
ENTROPY_EIGENVALUE_FLOOR = 1e-12


class FockError(ValueError):
    """Base class for state and operator validation failures."""


class InvalidStateError(FockError):
    """Raised when a matrix violates density-matrix invariants."""


class CutoffMismatchError(FockError):
    """Raised when operands live in differently truncated spaces."""


class Mode(Enum):
    """Labels for the two modes; A is measured by heterodyne, B by homodyne."""

    A = 0
    B = 1


@dataclass(frozen=True)
class Cutoff:
    """Truncation of each single-mode Fock space at photon number ``n_max``."""

    n_max: int = 10

    def __post_init__(self):
        if not isinstance(self.n_max, (int, np.integer)) or self.n_max < 1:
            raise FockError(f"n_max must be a positive integer, got {self.n_max!r}")

    @property
    def dim(self) -> int:
        """Single-mode Hilbert-space dimension ``n_max + 1``."""
        return self.n_max + 1

    @property
    def two_mode_dim(self) -> int:
        return self.dim**2


def annihilation(cutoff: Cutoff) -> np.ndarray:
    """Single-mode annihilation operator, (d, d) complex."""
    d = cutoff.dim
    a = np.zeros((d, d), dtype=np.complex128)
    n = np.arange(1, d)
    a[n - 1, n] = np.sqrt(n)
    return a


def creation(cutoff: Cutoff) -> np.ndarray:
    """Single-mode creation operator, the adjoint of :func:`annihilation`."""
    return annihilation(cutoff).conj().T


def number_operator(cutoff: Cutoff) -> np.ndarray:
    return np.diag(np.arange(cutoff.dim, dtype=np.complex128))


def tensor(op_a: np.ndarray, op_b: np.ndarray) -> np.ndarray:
    """Kronecker product with the mode-A factor on the left."""
    if op_a.ndim != 2 or op_b.ndim != 2:
        raise FockError("tensor expects matrices")
    return np.kron(op_a, op_b)


def embed(op: np.ndarray, mode: Mode, cutoff: Cutoff) -> np.ndarray:
    """Lift a single-mode operator to the two-mode space."""
    if op.shape != (cutoff.dim, cutoff.dim):
        raise CutoffMismatchError(
            f"operator shape {op.shape} does not match dim {cutoff.dim}"
        )
    eye = np.eye(cutoff.dim, dtype=np.complex128)
    return tensor(op, eye) if mode is Mode.A else tensor(eye, op)


@dataclass(frozen=True)
class TwoModeState:
    """Density matrix of two modes with a shared truncation.

    Instances are validated on construction via :meth:`from_matrix`:
    Hermiticity and unit trace are enforced within ``MATRIX_TOL``, and
    eigenvalues below ``-PSD_TOL`` raise.  Small negative eigenvalues in
    the tolerated band are clipped to zero and the state renormalized,
    recorded by the ``clipped`` flag.

    Attributes:
        entries: Read-only (d**2, d**2) complex matrix.
        cutoff: Shared single-mode truncation.
        clipped: True when negative eigenvalues were zeroed on validation.
    """

    entries: np.ndarray = field(repr=False)
    cutoff: Cutoff
    clipped: bool = False

    @property
    def dim(self) -> int:
        return self.cutoff.dim

    @classmethod
    def from_matrix(cls, entries: np.ndarray, cutoff: Cutoff) -> "TwoModeState":
        """Validate and wrap a candidate two-mode density matrix."""
        entries = np.asarray(entries, dtype=np.complex128)
        d2 = cutoff.two_mode_dim
        if entries.shape != (d2, d2):
            raise InvalidStateError(
                f"expected shape {(d2, d2)}, got {entries.shape}"
            )
        herm_defect = np.max(np.abs(entries - entries.conj().T))
        if herm_defect > MATRIX_TOL:
            raise InvalidStateError(f"not Hermitian (defect {herm_defect:.3e})")
        entries = 0.5 * (entries + entries.conj().T)
        tr = entries.trace().real
        if abs(tr - 1.0) > MATRIX_TOL:
            raise InvalidStateError(f"trace is {tr!r}, expected 1")
        vals, vecs = np.linalg.eigh(entries)
        clipped = False
        if vals[0] < -PSD_TOL:
            raise InvalidStateError(f"negative eigenvalue {vals[0]:.3e}")
        if vals[0] < 0.0:
            vals = np.clip(vals, 0.0, None)
            entries = (vecs * vals) @ vecs.conj().T
            entries /= entries.trace().real
            clipped = True
        entries = entries.copy()
        entries.flags.writeable = False
        return cls(entries=entries, cutoff=cutoff, clipped=clipped)

    @classmethod
    def from_vector(cls, psi: np.ndarray, cutoff: Cutoff) -> "TwoModeState":
        """Build the pure state |psi><psi| from a normalized flat vector."""
        psi = np.asarray(psi, dtype=np.complex128).reshape(-1)
        if psi.shape[0] != cutoff.two_mode_dim:
            raise InvalidStateError(
                f"expected length {cutoff.two_mode_dim}, got {psi.shape[0]}"
            )
        norm = np.linalg.norm(psi)
        if abs(norm - 1.0) > 1e-9:
            raise InvalidStateError(f"vector norm is {norm!r}, expected 1")
        return cls.from_matrix(np.outer(psi, psi.conj()), cutoff)


def _ptrace(mat: np.ndarray, d: int, keep: Mode) -> np.ndarray:
    four = mat.reshape(d, d, d, d)
    if keep is Mode.A:
        return np.einsum("rsqs->rq", four)
    return np.einsum("rsrq->sq", four)


def partial_trace(state: TwoModeState, keep: Mode) -> np.ndarray:
    """Reduced single-mode density matrix of the kept mode."""
    return _ptrace(state.entries, state.dim, keep)


def partial_transpose(state: TwoModeState, mode: Mode = Mode.B) -> np.ndarray:
    """Transpose one mode's indices; the result need not be positive."""
    d = state.dim
    four = state.entries.reshape(d, d, d, d)
    if mode is Mode.A:
        swapped = four.transpose(2, 1, 0, 3)
    else:
        swapped = four.transpose(0, 3, 2, 1)
    return swapped.reshape(d * d, d * d)


def von_neumann_entropy(rho: np.ndarray) -> float:
    """Entropy -Tr(rho log2 rho) in bits.

    Eigenvalues below ``ENTROPY_EIGENVALUE_FLOOR`` are dropped; an
    eigenvalue below ``-PSD_TOL`` raises ``InvalidStateError``.
    """
    vals = np.linalg.eigvalsh(np.asarray(rho))
    if vals[0] < -PSD_TOL:
        raise InvalidStateError(f"entropy of non-positive matrix (min {vals[0]:.3e})")
    vals = vals[vals > ENTROPY_EIGENVALUE_FLOOR]
    return float(-np.sum(vals * np.log2(vals)))


def trace_norm(mat: np.ndarray) -> float:
    """Sum of singular values."""
    return float(np.linalg.svd(np.asarray(mat), compute_uv=False).sum())


def purity(rho: np.ndarray) -> float:
    rho = np.asarray(rho)
    return float(np.einsum("ij,ji->", rho, rho).real)


def _psd_sqrt(rho: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(rho)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity F(rho, sigma) = (Tr sqrt(sqrt(rho) sigma sqrt(rho)))**2.

    Reduces to |<psi|phi>|**2 for pure inputs.  The result is clamped to
    [0, 1] to absorb roundoff.
    """
    root = _psd_sqrt(np.asarray(rho))
    inner = root @ np.asarray(sigma) @ root
    vals = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
    f = float(np.sqrt(vals).sum() ** 2)
    return min(max(f, 0.0), 1.0)


def state_to_json(state: TwoModeState, path: str | Path) -> None:
    """Serialize a state as {"cutoff", "re", "im"} with row-major entries."""
    payload = {
        "cutoff": state.cutoff.n_max,
        "re": state.entries.real.ravel().tolist(),
        "im": state.entries.imag.ravel().tolist(),
    }
    Path(path).write_text(json.dumps(payload))


def state_from_json(path: str | Path) -> TwoModeState:
    """Load and validate a state written by :func:`state_to_json`."""
    payload = json.loads(Path(path).read_text())
    cutoff = Cutoff(int(payload["cutoff"]))
    d2 = cutoff.two_mode_dim
    re = np.asarray(payload["re"], dtype=np.float64)
    im = np.asarray(payload["im"], dtype=np.float64)
    if re.size != d2 * d2 or im.size != d2 * d2:
        raise InvalidStateError(
            f"entry count {re.size}/{im.size} does not match cutoff {cutoff.n_max}"
        )
    entries = (re + 1j * im).reshape(d2, d2)
    return TwoModeState.from_matrix(entries, cutoff)
