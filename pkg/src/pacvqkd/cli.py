"""Command-line front end.

Verbs:

* ``sweep``: run a configured (k, loss) sweep into an output directory.
* ``validate-config``: check a config file and print the resolved form.
* ``reconstruct``: maximum-likelihood state estimate from a record CSV.
* ``analyze``: entanglement / non-Gaussianity report for a saved state.
* ``figures``: emit per-figure CSV bundles from sweep artifacts.

Exit codes: 0 on success, 2 for configuration or argument errors, 3
when every sweep cell failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .fock import (
    Cutoff,
    FockError,
    Mode,
    purity,
    state_from_json,
    state_to_json,
    von_neumann_entropy,
)
from .analysis import covariance, kurtosis, log_negativity, photon_number_joint, wigner
from .measurement import records_from_csv
from .security import joint_quadrature_distribution
from .sweep import (
    ConfigError,
    FigureInputError,
    config_hash,
    emit_figures,
    load_config,
    run_sweep,
)
from .tomography import MleConfig, reconstruct

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ALL_FAILED = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pacvqkd",
        description="Photon-added CV-QKD simulation sweeps and analysis.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_sweep = sub.add_parser("sweep", help="run a (k, loss) parameter sweep")
    p_sweep.add_argument("--config", type=Path, default=None, help="YAML config; defaults apply when omitted")
    p_sweep.add_argument("--out", type=Path, required=True, help="artifact directory")
    p_sweep.add_argument("--force", action="store_true", help="recompute cached cells")
    p_sweep.add_argument(
        "--include-overhead",
        action="store_true",
        help="multiply key rates by the postselection success probability",
    )
    p_sweep.add_argument("--seed", type=int, default=None, help="override all RNG seeds from one base seed")
    p_sweep.add_argument("--workers", type=int, default=None, help="parallel cell workers (default: cpu count)")

    p_val = sub.add_parser("validate-config", help="validate a sweep config")
    p_val.add_argument("--config", type=Path, required=True)

    p_rec = sub.add_parser("reconstruct", help="MLE reconstruction from a record CSV")
    p_rec.add_argument("--records", type=Path, required=True, help="heterodyne/homodyne record CSV")
    p_rec.add_argument("--out", type=Path, required=True, help="output directory")
    p_rec.add_argument("--cutoff", type=int, default=10, help="Fock cutoff n_max")
    p_rec.add_argument("--max-iterations", type=int, default=500)
    p_rec.add_argument("--epsilon", type=float, default=1e-6, help="infidelity convergence threshold")
    p_rec.add_argument("--dilution", type=float, default=1.0, help="update damping in (0, 1]")

    p_an = sub.add_parser("analyze", help="entanglement and non-Gaussianity report")
    p_an.add_argument("--state", type=Path, required=True, help="state JSON file")
    p_an.add_argument("--out", type=Path, required=True, help="output directory")

    p_fig = sub.add_parser("figures", help="emit figure CSV bundles from sweep artifacts")
    p_fig.add_argument("--artifacts", type=Path, required=True, help="sweep output directory")
    p_fig.add_argument("--out", type=Path, default=None, help="figure directory (default: artifacts/figures)")
    return parser


def _cmd_sweep(args) -> int:
    try:
        config = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.include_overhead:
        config["include_overhead"] = True
    if args.seed is not None:
        stream = np.random.SeedSequence(args.seed).generate_state(3)
        config["seeds"] = {
            "sampling": int(stream[0]),
            "postselect": int(stream[1]),
            "ber": int(stream[2]),
        }
    manifest = run_sweep(
        config,
        args.out,
        force=args.force,
        workers=args.workers,
        progress=lambda msg: print(msg),
    )
    print(f"sweep complete: {manifest['n_cells'] - manifest['n_failed']}/{manifest['n_cells']} cells ok")
    if manifest["n_failed"] == manifest["n_cells"]:
        return EXIT_ALL_FAILED
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        config = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(config, indent=2, sort_keys=True))
    print(f"config ok ({config_hash(config)[:12]})")
    return EXIT_OK


def _cmd_reconstruct(args) -> int:
    try:
        records = records_from_csv(args.records)
        config = MleConfig(
            max_iterations=args.max_iterations,
            convergence_epsilon=args.epsilon,
            dilution=args.dilution,
        )
    except (FockError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    state, diag = reconstruct(records, Cutoff(args.cutoff), config)
    args.out.mkdir(parents=True, exist_ok=True)
    state_to_json(state, args.out / "state.json")
    diag.to_json(args.out / "diagnostics.json")
    print(
        f"reconstructed from {diag.n_records} records in {diag.iterations} "
        f"iterations (converged={diag.converged}, backend={diag.backend})"
    )
    return EXIT_OK


def _write_matrix(path: Path, matrix: np.ndarray, header: str) -> None:
    lines = [header]
    lines += [",".join(f"{v:.17g}" for v in row) for row in matrix]
    path.write_text("\n".join(lines) + "\n")


def _cmd_analyze(args) -> int:
    try:
        state = state_from_json(args.state)
    except (FockError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    args.out.mkdir(parents=True, exist_ok=True)
    cov = covariance(state)
    wmap = wigner(state, Mode.A)
    dist = joint_quadrature_distribution(state)
    report = {
        "log_negativity": log_negativity(state),
        "purity": purity(state.entries),
        "entropy_bits": von_neumann_entropy(state.entries),
        "kurtosis_a": kurtosis(state, Mode.A),
        "kurtosis_b": kurtosis(state, Mode.B),
        "wigner_origin": wmap.origin_value,
        "symplectic_eigenvalues": [float(v) for v in cov.symplectic_eigenvalues()],
        "covariance": cov.matrix.tolist(),
        "clipped": state.clipped,
    }
    (args.out / "analysis.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    grid = wmap.grid
    _write_matrix(
        args.out / "wigner_a.csv",
        wmap.values,
        f"# lo={grid.lo:g} hi={grid.hi:g} step={grid.step:g}",
    )
    _write_matrix(
        args.out / "joint_quadrature.csv",
        dist.table,
        f"# lo={dist.x_axis[0]:g} hi={dist.x_axis[-1]:g} step={dist.dx:g}",
    )
    _write_matrix(
        args.out / "photon_joint.csv",
        photon_number_joint(state),
        f"# rows=n_A cols=n_B dim={state.dim}",
    )
    print(f"analysis written to {args.out}")
    return EXIT_OK


def _cmd_figures(args) -> int:
    try:
        written = emit_figures(args.artifacts, args.out)
    except (FigureInputError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {
        "sweep": _cmd_sweep,
        "validate-config": _cmd_validate,
        "reconstruct": _cmd_reconstruct,
        "analyze": _cmd_analyze,
        "figures": _cmd_figures,
    }[args.verb]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
