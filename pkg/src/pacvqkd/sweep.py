"""Reproducible parameter sweeps and figure-data emission.

A sweep evaluates every (k, loss) cell of a declarative config through
one of two pipelines:

* ``exact_operator``: build the photon-added state by direct operator
  application and analyze it;
* ``postselect_tomography``: sample heterodyne/homodyne records from
  the unadded state, postselect with the k-photon filter, reconstruct
  by maximum likelihood, and analyze the reconstruction.

Each cell writes its JSON result atomically and is skipped on rerun
unless forced; rows aggregate into ``sweep.csv`` and a manifest records
the config hash, seeds, versions, and wall times.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from copy import deepcopy
from datetime import datetime, timezone
from pathlib import Path

import jsonschema
import numpy as np
import scipy
import yaml

from . import __version__
from .fock import Cutoff, Mode, TwoModeState
from .grids import PhaseSpaceGrid, QuadratureGrid
from .measurement import (
    FilterParams,
    husimi_sigma_sq,
    postselect,
    predict_success,
    sample_records,
)
from .states import (
    ChannelParams,
    ImpurityParams,
    TmsvParams,
    add_photons,
    loss_channel,
    noisy_tmsv,
)
from .tomography import MleConfig, reconstruct
from .analysis import kurtosis, log_negativity, wigner
from .protocol import BerConfig, bit_error_rate
from .security import evaluate_security, joint_quadrature_distribution

#: Defaults mirror the reference protocol settings; the loss list is the
#: percent series {0, 25, 50, 75, 90, 95, 98, 99}.
DEFAULT_CONFIG: dict = {
    "lambda": 0.5,
    "k_values": [0, 1, 2, 3],
    "loss_values_percent": [0.0, 25.0, 50.0, 75.0, 90.0, 95.0, 98.0, 99.0],
    "cutoff": 10,
    "alpha_c_sq": 6.0,
    "pipeline": "exact_operator",
    "include_overhead": False,
    "include_ber": True,
    "addition_mode": "alice",
    "addition_before_loss": True,
    "impurity": {"loss": 0.0, "phase_sigma": 0.0},
    "grids": {
        "quad": {"lo": -10.0, "hi": 10.0, "step": 0.05},
        "alpha": {"lo": -6.0, "hi": 6.0, "step": 0.05},
        "x": {"lo": -8.0, "hi": 8.0, "step": 0.01},
        "wigner": {"lo": -4.0, "hi": 4.0, "step": 0.08},
    },
    "seeds": {"sampling": 1001, "postselect": 2002, "ber": 3003},
    "records": {"n_samples": 1_000_000},
    "mle": {"max_iterations": 500, "convergence_epsilon": 1.0e-6, "dilution": 1.0},
    "ber": {"n_samples": 1_000_000},
}

_GRID_SCHEMA = {
    "type": "object",
    "properties": {
        "lo": {"type": "number"},
        "hi": {"type": "number"},
        "step": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["lo", "hi", "step"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "lambda": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "k_values": {
            "type": "array",
            "items": {"type": "integer", "minimum": 0},
            "minItems": 1,
        },
        "loss_values_percent": {
            "type": "array",
            "items": {"type": "number", "minimum": 0, "exclusiveMaximum": 100},
            "minItems": 1,
        },
        "loss_values_db": {
            "type": "array",
            "items": {"type": "number", "minimum": 0},
            "minItems": 1,
        },
        "cutoff": {"type": "integer", "minimum": 1},
        "alpha_c_sq": {"type": "number", "exclusiveMinimum": 0},
        "pipeline": {"enum": ["exact_operator", "postselect_tomography"]},
        "include_overhead": {"type": "boolean"},
        "include_ber": {"type": "boolean"},
        "addition_mode": {"enum": ["alice", "bob"]},
        "addition_before_loss": {"type": "boolean"},
        "impurity": {
            "type": "object",
            "properties": {
                "loss": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "phase_sigma": {"type": "number", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "grids": {
            "type": "object",
            "properties": {
                "quad": _GRID_SCHEMA,
                "alpha": _GRID_SCHEMA,
                "x": _GRID_SCHEMA,
                "wigner": _GRID_SCHEMA,
            },
            "additionalProperties": False,
        },
        "seeds": {
            "type": "object",
            "properties": {
                "sampling": {"type": "integer", "minimum": 0},
                "postselect": {"type": "integer", "minimum": 0},
                "ber": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "records": {
            "type": "object",
            "properties": {"n_samples": {"type": "integer", "minimum": 1}},
            "additionalProperties": False,
        },
        "mle": {
            "type": "object",
            "properties": {
                "max_iterations": {"type": "integer", "minimum": 1},
                "convergence_epsilon": {"type": "number", "exclusiveMinimum": 0},
                "dilution": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
            "additionalProperties": False,
        },
        "ber": {
            "type": "object",
            "properties": {"n_samples": {"type": "integer", "minimum": 10000}},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """Raised for malformed or contradictory sweep configs."""


def _deep_merge(base: dict, override: dict) -> dict:
    out = deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = deepcopy(val)
    return out


def load_config(path: str | Path | None = None) -> dict:
    """Load, default, validate, and canonicalize a sweep config.

    Loss may be given as ``loss_values_percent`` or ``loss_values_db``
    (not both); the resolved config always carries ``loss_values_db``.
    """
    user: dict = {}
    if path is not None:
        text = Path(path).read_text()
        user = yaml.safe_load(text) or {}
        if not isinstance(user, dict):
            raise ConfigError("config root must be a mapping")
    if "loss_values_db" in user and "loss_values_percent" in user:
        raise ConfigError("give loss_values_db or loss_values_percent, not both")
    base = deepcopy(DEFAULT_CONFIG)
    if "loss_values_db" in user:
        base.pop("loss_values_percent")
    config = _deep_merge(base, user)
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config invalid: {exc.message}") from exc
    if "loss_values_percent" in config:
        percents = config.pop("loss_values_percent")
        config["loss_values_db"] = [
            0.0 if p == 0.0 else float(-10.0 * np.log10(1.0 - p / 100.0))
            for p in percents
        ]
    config["loss_values_db"] = [float(v) for v in config["loss_values_db"]]
    if config["pipeline"] == "postselect_tomography" and config["addition_mode"] != "alice":
        raise ConfigError(
            "postselect_tomography implements addition on the heterodyned "
            "(alice) mode only"
        )
    return config


def config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _grid(block: dict) -> QuadratureGrid:
    return QuadratureGrid(block["lo"], block["hi"], block["step"])


def _cell_seed(base: int, k: int, loss_db: float) -> int:
    return int(
        np.random.SeedSequence([base, k, int(round(loss_db * 1000))]).generate_state(1)[0]
    )


def _build_source(config: dict) -> TwoModeState:
    cutoff = Cutoff(config["cutoff"])
    params = TmsvParams(config["lambda"])
    imp = config["impurity"]
    return noisy_tmsv(
        params, ImpurityParams(imp["loss"], imp["phase_sigma"]), cutoff
    )


def run_cell(config: dict, k: int, loss_db: float) -> dict:
    """Evaluate one (k, loss) cell; returns the row dict plus extras."""
    t_start = time.perf_counter()
    cutoff = Cutoff(config["cutoff"])
    transmissivity = 10.0 ** (-loss_db / 10.0)
    quad_grid = _grid(config["grids"]["quad"])
    add_mode = Mode.A if config["addition_mode"] == "alice" else Mode.B
    chan = ChannelParams(transmissivity)
    source = _build_source(config)
    filt = FilterParams(k, config["alpha_c_sq"])
    # the channel always attenuates mode B; heralding is evaluated on
    # the state the addition actually sees
    pre = source if config["addition_before_loss"] else loss_channel(
        source, Mode.B, chan
    )
    success = predict_success(husimi_sigma_sq(pre, add_mode), filt)
    extras: dict = {}

    if config["pipeline"] == "exact_operator":
        state, _ = add_photons(pre, add_mode, k)
        if config["addition_before_loss"]:
            state = loss_channel(state, Mode.B, chan)
    else:
        lossy = loss_channel(source, Mode.B, chan)
        n_samples = config["records"]["n_samples"]
        records = sample_records(
            lossy,
            n_samples,
            _cell_seed(config["seeds"]["sampling"], k, loss_db),
            alpha_grid=PhaseSpaceGrid(**config["grids"]["alpha"]),
            x_grid=_grid(config["grids"]["x"]),
        )
        kept, fraction = postselect(
            records, filt, _cell_seed(config["seeds"]["postselect"], k, loss_db)
        )
        if len(kept) == 0:
            raise RuntimeError("postselection rejected every record")
        mle = config["mle"]
        state, diag = reconstruct(
            kept,
            cutoff,
            MleConfig(
                max_iterations=mle["max_iterations"],
                convergence_epsilon=mle["convergence_epsilon"],
                dilution=mle["dilution"],
            ),
        )
        extras["empirical_acceptance"] = fraction
        extras["records_kept"] = len(kept)
        extras["mle"] = {
            "iterations": diag.iterations,
            "converged": diag.converged,
            "final_log_likelihood": diag.final_log_likelihood,
            "final_infidelity": diag.final_infidelity,
            "excluded_records": diag.excluded_records,
            "backend": diag.backend,
        }

    report = evaluate_security(
        state,
        k,
        transmissivity,
        success,
        grid=quad_grid,
    )
    row = {
        "k": k,
        "T": transmissivity,
        "loss_dB": loss_db,
        "I_AB": report.i_ab,
        "chi_E": report.chi_e,
        "keyrate": report.keyrate,
        "gaussian_I_AB": report.gaussian_i_ab,
        "gaussian_chi_E": report.gaussian_chi_e,
        "gaussian_keyrate": report.gaussian_keyrate,
        "success_prob": report.success_probability,
        "plob": report.plob,
    }
    if config["include_ber"]:
        ber, stderr = bit_error_rate(
            state,
            config=BerConfig(
                n_samples=config["ber"]["n_samples"],
                rng_seed=_cell_seed(config["seeds"]["ber"], k, loss_db),
            ),
            grid=quad_grid,
        )
        row["ber"] = ber
        row["ber_stderr"] = stderr
    extras["log_negativity"] = log_negativity(state)
    extras["kurtosis_a"] = kurtosis(state, Mode.A)
    extras["kurtosis_b"] = kurtosis(state, Mode.B)
    extras["wall_time_s"] = time.perf_counter() - t_start

    if loss_db == 0.0:
        wmap = wigner(state, add_mode, PhaseSpaceGrid(**config["grids"]["wigner"]))
        extras["wigner_origin"] = wmap.origin_value
        extras["wigner"] = {
            "lo": wmap.grid.lo,
            "hi": wmap.grid.hi,
            "step": wmap.grid.step,
            "values": wmap.values.tolist(),
        }
        dist = joint_quadrature_distribution(state, grid=quad_grid)
        extras["joint"] = {
            "lo": quad_grid.lo,
            "hi": quad_grid.hi,
            "step": quad_grid.step,
            "table": dist.table.tolist(),
        }
    return {"row": row, "extras": extras}


def _cell_name(k: int, loss_db: float) -> str:
    return f"cell_k{k}_db{int(round(loss_db * 1000))}.json"


def _csv_columns(config: dict) -> list[str]:
    cols = [
        "k",
        "T",
        "loss_dB",
        "I_AB",
        "chi_E",
        "keyrate",
        "gaussian_I_AB",
        "gaussian_chi_E",
        "gaussian_keyrate",
        "success_prob",
        "plob",
    ]
    if config["include_ber"]:
        cols += ["ber", "ber_stderr"]
    return cols


def run_sweep(
    config: dict,
    out_dir: str | Path,
    force: bool = False,
    workers: int | None = None,
    progress=None,
) -> dict:
    """Run every cell, aggregate sweep.csv, and write the manifest.

    Cells already present in ``out_dir`` are reused unless ``force``;
    failures are isolated per cell.  Returns the manifest dict.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = [
        (k, loss_db)
        for k in config["k_values"]
        for loss_db in config["loss_values_db"]
    ]
    workers = workers or os.cpu_count() or 1
    say = progress or (lambda msg: None)

    results: dict[tuple[int, float], dict] = {}
    statuses: dict[tuple[int, float], dict] = {}
    pending = []
    for key in cells:
        path = out / _cell_name(*key)
        if path.exists() and not force:
            results[key] = json.loads(path.read_text())
            statuses[key] = {"status": "cached", "wall_time_s": 0.0}
            say(f"cell k={key[0]} loss={key[1]:g}dB cached")
        else:
            pending.append(key)

    def finish(key, payload, err, elapsed):
        k, loss_db = key
        if err is not None:
            statuses[key] = {
                "status": "failed",
                "error": err,
                "wall_time_s": elapsed,
            }
            say(f"cell k={k} loss={loss_db:g}dB FAILED: {err}")
            return
        path = out / _cell_name(k, loss_db)
        _atomic_write_text(path, json.dumps(payload, sort_keys=True))
        results[key] = payload
        statuses[key] = {"status": "ok", "wall_time_s": elapsed}
        say(f"cell k={k} loss={loss_db:g}dB done in {elapsed:.1f}s")

    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                key: pool.submit(run_cell, config, key[0], key[1])
                for key in pending
            }
            for key, fut in futures.items():
                t0 = time.perf_counter()
                try:
                    finish(key, fut.result(), None, 0.0)
                    statuses[key]["wall_time_s"] = results[key]["extras"][
                        "wall_time_s"
                    ]
                except Exception as exc:  # noqa: BLE001 - cell isolation
                    finish(key, None, str(exc), time.perf_counter() - t0)
    else:
        for key in pending:
            t0 = time.perf_counter()
            try:
                payload = run_cell(config, key[0], key[1])
                finish(key, payload, None, time.perf_counter() - t0)
            except Exception as exc:  # noqa: BLE001 - cell isolation
                finish(key, None, str(exc), time.perf_counter() - t0)

    columns = _csv_columns(config)
    lines = [",".join(columns)]
    for key in cells:
        if key not in results:
            continue
        row = dict(results[key]["row"])
        if config["include_overhead"]:
            row["keyrate"] = row["keyrate"] * row["success_prob"]
            row["gaussian_keyrate"] = row["gaussian_keyrate"] * row["success_prob"]
        lines.append(",".join(_fmt(row.get(col)) for col in columns))
    _atomic_write_text(out / "sweep.csv", "\n".join(lines) + "\n")

    manifest = {
        "config": config,
        "config_sha256": config_hash(config),
        "package_version": __version__,
        "python_version": ".".join(map(str, __import__("sys").version_info[:3])),
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "csv": "sweep.csv",
        "cells": [
            {
                "k": k,
                "loss_db": loss_db,
                "file": _cell_name(k, loss_db),
                **statuses[(k, loss_db)],
            }
            for k, loss_db in cells
        ],
        "n_failed": sum(
            1 for s in statuses.values() if s["status"] == "failed"
        ),
        "n_cells": len(cells),
    }
    _atomic_write_text(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


class FigureInputError(RuntimeError):
    """Raised when figure emission lacks part of its input set."""


def _write_matrix_csv(path: Path, meta: dict, matrix: np.ndarray) -> None:
    header = f"# lo={meta['lo']:g} hi={meta['hi']:g} step={meta['step']:g}"
    rows = [header]
    for row in matrix:
        rows.append(",".join(f"{v:.17g}" for v in row))
    _atomic_write_text(path, "\n".join(rows) + "\n")


def emit_figures(artifact_dir: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Write per-figure CSV bundles from a completed sweep.

    Figures: success probability vs k, log-negativity vs loss, kurtosis
    vs k, joint quadrature tables, rates vs k, rate-loss curves, and
    (when present) BER vs loss.  Raises FigureInputError listing every
    missing input before writing anything.
    """
    src = Path(artifact_dir)
    out = Path(out_dir) if out_dir else src / "figures"
    manifest_path = src / "manifest.json"
    if not manifest_path.exists():
        raise FigureInputError(f"missing manifest: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    config = manifest["config"]
    cells = {}
    missing = []
    for cell in manifest["cells"]:
        if cell["status"] == "failed":
            missing.append(f"cell k={cell['k']} loss={cell['loss_db']:g}dB failed")
            continue
        path = src / cell["file"]
        if not path.exists():
            missing.append(f"missing cell file: {path.name}")
            continue
        cells[(cell["k"], cell["loss_db"])] = json.loads(path.read_text())
    if missing:
        raise FigureInputError("; ".join(missing))
    if not cells:
        raise FigureInputError("sweep produced no cells")

    k_values = sorted({k for k, _ in cells})
    loss_values = sorted({db for _, db in cells})
    written: list[Path] = []
    out.mkdir(parents=True, exist_ok=True)

    def emit(name: str, header: list[str], rows: list[list]) -> None:
        path = out / name
        lines = [",".join(header)]
        lines += [",".join(_fmt(v) for v in row) for row in rows]
        _atomic_write_text(path, "\n".join(lines) + "\n")
        written.append(path)

    base_loss = loss_values[0]
    emit(
        "fig_success_vs_k.csv",
        ["k", "success_prob"],
        [[k, cells[(k, base_loss)]["row"]["success_prob"]] for k in k_values],
    )
    emit(
        "fig_logneg_vs_loss.csv",
        ["loss_dB"] + [f"logneg_k{k}" for k in k_values],
        [
            [db] + [cells[(k, db)]["extras"]["log_negativity"] for k in k_values]
            for db in loss_values
        ],
    )
    emit(
        "fig_kurtosis_vs_k.csv",
        ["k", "kurtosis_a", "kurtosis_b"],
        [
            [
                k,
                cells[(k, base_loss)]["extras"]["kurtosis_a"],
                cells[(k, base_loss)]["extras"]["kurtosis_b"],
            ]
            for k in k_values
        ],
    )
    emit(
        "fig_rates_vs_k.csv",
        ["k", "I_AB", "chi_E", "keyrate", "gaussian_keyrate"],
        [
            [
                k,
                cells[(k, base_loss)]["row"]["I_AB"],
                cells[(k, base_loss)]["row"]["chi_E"],
                cells[(k, base_loss)]["row"]["keyrate"],
                cells[(k, base_loss)]["row"]["gaussian_keyrate"],
            ]
            for k in k_values
        ],
    )
    emit(
        "fig_rate_loss.csv",
        ["loss_dB", "plob"] + [f"keyrate_k{k}" for k in k_values],
        [
            [db, cells[(k_values[0], db)]["row"]["plob"]]
            + [cells[(k, db)]["row"]["keyrate"] for k in k_values]
            for db in loss_values
        ],
    )
    if config.get("include_ber"):
        emit(
            "fig_ber_vs_loss.csv",
            ["loss_dB"]
            + [f"ber_k{k}" for k in k_values]
            + [f"ber_stderr_k{k}" for k in k_values],
            [
                [db]
                + [cells[(k, db)]["row"]["ber"] for k in k_values]
                + [cells[(k, db)]["row"]["ber_stderr"] for k in k_values]
                for db in loss_values
            ],
        )
    for k in k_values:
        extras = cells[(k, base_loss)]["extras"]
        if "joint" in extras:
            meta = extras["joint"]
            path = out / f"fig_joint_distribution_k{k}.csv"
            _write_matrix_csv(path, meta, np.asarray(meta["table"]))
            written.append(path)
        if "wigner" in extras:
            meta = extras["wigner"]
            path = out / f"fig_wigner_k{k}.csv"
            _write_matrix_csv(path, meta, np.asarray(meta["values"]))
            written.append(path)
    return written
