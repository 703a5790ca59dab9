"""Timing comparison of the compiled and NumPy likelihood kernels.

Builds a realistic tomography workload (records sampled from a
two-mode squeezed state, deduplicated into projector factors) and times
``accumulate`` on every available backend.  Reports per-pass wall time,
records per second, and the worst element difference between backends.

Usage:
    python benchmarks/bench_kernels.py --records 200000 --repeats 5
"""

import argparse
import time

import numpy as np

from pacvqkd import _kernels
from pacvqkd.fock import Cutoff
from pacvqkd.measurement import sample_records
from pacvqkd.states import TmsvParams, make_tmsv
from pacvqkd.tomography import prepare_projectors


def build_problem(n_records, n_max, lam, seed):
    cutoff = Cutoff(n_max)
    state = make_tmsv(TmsvParams(lam), cutoff)
    records = sample_records(state, n_records, rng_seed=seed)
    prep = prepare_projectors(records, cutoff)
    dd = cutoff.two_mode_dim
    rho = np.eye(dd, dtype=np.complex128) / dd
    return rho, prep


def time_backend(backend, rho, prep, repeats):
    args = (rho, prep.ca, prep.hb, prep.group_start, prep.h_idx, 1e-14)
    _kernels.accumulate(*args, backend=backend)  # warm up
    times = []
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = _kernels.accumulate(*args, backend=backend)
        times.append(time.perf_counter() - t0)
    return min(times), result


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--records", type=int, default=200_000)
    parser.add_argument("--cutoff", type=int, default=10, help="Fock cutoff n_max")
    parser.add_argument("--lam", type=float, default=0.5, help="squeezing parameter")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    print(
        "building problem: %d records, n_max=%d, lambda=%.2f"
        % (args.records, args.cutoff, args.lam)
    )
    rho, prep = build_problem(args.records, args.cutoff, args.lam, args.seed)
    print(
        "unique amplitudes: %d, unique homodyne rows: %d"
        % (prep.ca.shape[0], prep.hb.shape[0])
    )

    backends = _kernels.available_backends()
    results = {}
    for backend in backends:
        best, result = time_backend(backend, rho, prep, args.repeats)
        results[backend] = result
        print(
            "%-8s  %8.1f ms/pass  %10.0f records/s"
            % (backend, best * 1e3, args.records / best)
        )

    if len(backends) == 2:
        r_a, ll_a, _ = results[backends[0]]
        r_b, ll_b, _ = results[backends[1]]
        print(
            "agreement: max|dR| = %.3e, |dll| = %.3e"
            % (np.abs(r_a - r_b).max(), abs(ll_a - ll_b))
        )


if __name__ == "__main__":
    main()
