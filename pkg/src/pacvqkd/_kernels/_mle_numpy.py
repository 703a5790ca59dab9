"""NumPy implementation of the per-record accumulation pass.

The compiled extension in ``_mle_core.pyx`` implements the same loop;
this module is the import-time fallback and the reference the extension
is tested against.  The surrounding d**4 contractions are plain matrix
products and live in the shared driver, where BLAS handles them for
both backends.
"""

from __future__ import annotations

import numpy as np


def record_pass(
    b_all: np.ndarray,
    hb: np.ndarray,
    group_start: np.ndarray,
    h_idx: np.ndarray,
    floor: float,
    chunk_size: int = 16384,
) -> tuple[np.ndarray, float, int]:
    """Per-record probabilities and weighted homodyne outer products.

    Args:
        b_all: (U, d, d) conditional operators on mode B, one per group
            of records sharing a heterodyne amplitude.
        hb: (V, d) unique homodyne amplitude rows.
        group_start: (U + 1,) boundaries of the alpha-sorted record list.
        h_idx: (N,) homodyne row index per record, alpha-sorted.
        floor: Records with probability <= floor are skipped and counted.

    Returns:
        (s_all, log_likelihood, excluded) with s_all[u] the Hermitian
        sum over group u of h h^dag / p, log_likelihood the sum of
        log(p) over included records, and excluded the floored count.
    """
    n_groups = b_all.shape[0]
    d = b_all.shape[1]
    n_records = int(group_start[-1])
    s_all = np.zeros((n_groups, d, d), dtype=np.complex128)
    loglike = 0.0
    excluded = 0

    owner = np.repeat(
        np.arange(n_groups, dtype=np.int64), np.diff(group_start).astype(np.int64)
    )
    for j0 in range(0, n_records, chunk_size):
        j1 = min(j0 + chunk_size, n_records)
        h = hb[h_idx[j0:j1]]
        own = owner[j0:j1]
        p = np.einsum("ms,mst,mt->m", h.conj(), b_all[own], h, optimize=True).real
        good = p > floor
        excluded += int((~good).sum())
        loglike += float(np.log(p[good]).sum())
        w = np.where(good, 1.0, 0.0) / np.where(good, p, 1.0)
        outer = (h[:, :, None] * h[:, None, :].conj()) * w[:, None, None]
        # own is sorted within the chunk, so segment-reduce on the first
        # occurrence of each owner; groups split across chunks just add.
        uniq_own, first = np.unique(own, return_index=True)
        seg = np.add.reduceat(outer.reshape(j1 - j0, d * d), first, axis=0)
        s_all[uniq_own] += seg.reshape(-1, d, d)
    return s_all, loglike, excluded
