"""Hot-loop kernels: compiled per-record pass with a NumPy fallback.

``accumulate`` runs one likelihood-gradient pass.  The two d**4-sized
contractions (building the per-group conditional operators and the
final assembly of R) are single matrix products handled by BLAS for
both backends; only the loop-bound per-record pass differs.

The compiled extension is preferred when importable; set the environment
variable ``PACVQKD_FORCE_NUMPY_KERNEL=1`` to force the fallback (used by
the benchmark and the backend-equivalence tests).
"""

from __future__ import annotations

import os

import numpy as np

from . import _mle_numpy

_IMPLS = {"numpy": _mle_numpy.record_pass}

try:
    from . import _mle_core  # type: ignore[attr-defined]

    _IMPLS["compiled"] = _mle_core.record_pass
except ImportError:  # pragma: no cover - build environment dependent
    pass

if os.environ.get("PACVQKD_FORCE_NUMPY_KERNEL", "") == "1":
    BACKEND = "numpy"
else:
    BACKEND = "compiled" if "compiled" in _IMPLS else "numpy"


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_IMPLS))


def accumulate(
    rho: np.ndarray,
    ca: np.ndarray,
    hb: np.ndarray,
    group_start: np.ndarray,
    h_idx: np.ndarray,
    floor: float,
    backend: str | None = None,
) -> tuple[np.ndarray, float, int]:
    """One pass of R(rho) = sum_j Pi_j / p_j over grouped records.

    Args:
        rho: Current iterate, (d*d, d*d) complex.
        ca: Unique coherent amplitude rows, (U, d) complex.
        hb: Unique homodyne amplitude rows, (V, d) complex.
        group_start: (U + 1,) boundaries of the alpha-sorted record list.
        h_idx: (N,) homodyne row index per record, alpha-sorted.
        floor: Records with probability <= floor are skipped and counted.
        backend: Override the import-time backend choice.

    Returns:
        (R, log_likelihood, excluded): R as a (d*d, d*d) matrix, the sum
        of log(p_j) over included records (natural log of the raw
        overlap, no 1/pi factor), and the floored-record count.
    """
    record_pass = _IMPLS[backend or BACKEND]
    n_groups, d = ca.shape
    rho4 = np.ascontiguousarray(rho).reshape(d, d, d, d)

    # w[u, (r, q)] = conj(ca[u, r]) ca[u, q]; then the group conditionals
    # are one product against rho reshaped to ((r, q), (s, t)).
    w = (ca.conj()[:, :, None] * ca[:, None, :]).reshape(n_groups, d * d)
    rho_rq_st = rho4.transpose(0, 2, 1, 3).reshape(d * d, d * d)
    b_all = (w @ rho_rq_st).reshape(n_groups, d, d)

    s_all, loglike, excluded = record_pass(
        b_all,
        hb,
        np.ascontiguousarray(group_start, dtype=np.int64),
        np.ascontiguousarray(h_idx, dtype=np.int64),
        floor,
    )

    # R[(r, s), (q, t)] = sum_u ca[u, r] conj(ca[u, q]) s_all[u, (s, t)]
    r_rq_st = w.conj().T @ s_all.reshape(n_groups, d * d)
    r4 = r_rq_st.reshape(d, d, d, d).transpose(0, 2, 1, 3)
    return np.ascontiguousarray(r4).reshape(d * d, d * d), loglike, excluded


__all__ = ["accumulate", "available_backends", "BACKEND"]
