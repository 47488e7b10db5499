"""Run manifests, JSON/CSV emission, and config-file plumbing.

Every output file embeds its manifest so a run can be reproduced from the
file alone; identical manifests give byte-identical output.  All entropies
in emitted files are base-2 (bits) and floats carry 17 significant digits.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

try:
    import tomllib as _toml
except ModuleNotFoundError:
    import tomli as _toml

from .ensemble import (
    Ensemble,
    orthogonal_pair_ensemble,
    trine_ensemble,
    two_state_ensemble,
    uniform_bloch_ensemble,
)
from .exceptions import ConfigError
from .fidelity import (
    FidelityKernel,
    OptimalityCertificate,
    guess_score_kernel,
    matrix_kernel,
    overlap_kernel,
    quartic_kernel,
)

TOOL_VERSION = "0.1.0"
LOG_BASE = "2 (bits)"


def utc_timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Provenance block embedded in every output file."""

    subcommand: str
    config_paths: tuple = ()
    master_seed: int | None = None
    version: str = TOOL_VERSION
    log_base: str = LOG_BASE
    timestamp: str = field(default_factory=utc_timestamp)

    def as_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "config_paths": list(self.config_paths),
            "master_seed": self.master_seed,
            "version": self.version,
            "log_base": self.log_base,
            "timestamp": self.timestamp,
        }


def encode_array(a) -> list:
    """JSON-safe nested lists; complex entries become [re, im] pairs."""
    arr = np.asarray(a)
    if np.iscomplexobj(arr):
        return np.stack([arr.real, arr.imag], axis=-1).tolist()
    return arr.tolist()


def format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def write_json(path, manifest: RunManifest, payload: dict) -> None:
    doc = {"manifest": manifest.as_dict()}
    doc.update(payload)
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def write_csv(path, manifest: RunManifest, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# manifest: " + json.dumps(manifest.as_dict(), sort_keys=True) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])


def load_config(path) -> dict:
    p = Path(path)
    try:
        if p.suffix == ".toml":
            with open(p, "rb") as fh:
                return _toml.load(fh)
        if p.suffix == ".json":
            return json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}")
    except _toml.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}:{exc.lineno}:{exc.colno}: {exc.msg}")
    raise ConfigError(f"{p}: unsupported config format (need .toml or .json)")


ENSEMBLE_KINDS = ("two_state", "trine", "orthogonal_pair", "uniform_bloch")


def build_ensemble(cfg: dict) -> Ensemble:
    kind = cfg.get("kind")
    if kind == "two_state":
        return two_state_ensemble(float(cfg.get("alpha2", 0.9)))
    if kind == "trine":
        return trine_ensemble()
    if kind == "orthogonal_pair":
        return orthogonal_pair_ensemble()
    if kind == "uniform_bloch":
        if "n" not in cfg:
            raise ConfigError("ensemble.n: required for uniform_bloch")
        return uniform_bloch_ensemble(int(cfg["n"]), int(cfg.get("seed", 0)))
    raise ConfigError(f"ensemble.kind: expected one of {ENSEMBLE_KINDS}, got {kind!r}")


KERNEL_KINDS_CLI = ("guess_score", "overlap", "overlap4", "matrix")


def build_kernel(cfg: dict, ensemble: Ensemble) -> FidelityKernel:
    kind = cfg.get("kind", "guess_score")
    if kind == "guess_score":
        return guess_score_kernel(ensemble.states)
    if kind == "overlap":
        return overlap_kernel(ensemble.states)
    if kind == "overlap4":
        return quartic_kernel(ensemble.states)
    if kind == "matrix":
        if "matrix" not in cfg:
            raise ConfigError("kernel.matrix: required for matrix kernels")
        return matrix_kernel(np.asarray(cfg["matrix"], dtype=float))
    raise ConfigError(f"kernel.kind: expected one of {KERNEL_KINDS_CLI}, got {kind!r}")


def certificate_dict(cert: OptimalityCertificate) -> dict:
    return {
        "fidelity": cert.fidelity,
        "stationarity_residual": cert.stationarity_residual,
        "dual_min_eig": cert.dual_min_eig,
        "skew_norm": cert.skew_norm,
        "gap_norm": cert.gap_norm,
        "certified": cert.certified,
        "lambda_hat": encode_array(cert.lambda_hat),
    }


def rank_one_dict(rank1) -> dict:
    return {
        "vectors": encode_array(rank1.vectors),
        "weights": encode_array(rank1.weights),
        "guesses": encode_array(rank1.parent_index),
    }


def povm_dict(povm) -> dict:
    out = {"elements": encode_array(povm.elements)}
    if povm.guess_index is not None:
        out["guesses"] = encode_array(povm.guess_index)
    if povm.labels is not None:
        out["labels"] = list(povm.labels)
    return out


def sqrt_report_dict(rep) -> dict:
    return {
        "seed": rep.seed,
        "n_samples": rep.n_samples,
        "block_length": rep.block_length,
        "dim_hb": rep.dim_hb,
        "completeness_residual": rep.completeness_residual,
        "mean_perp": rep.mean_perp,
        "rank_cutoff_ambiguous": rep.rank_cutoff_ambiguous,
        "fidelity": rep.fidelity,
        "fidelity_pessimistic": rep.fidelity_pessimistic,
        "entropy_per_slot": rep.entropy_per_slot,
        "c0_weight": rep.c0_weight,
    }


def protocol_report_dict(rep, accounting: dict) -> dict:
    return {
        "L_prime": rep.L_prime,
        "L": rep.L,
        "eta_prime": rep.eta_prime,
        "eta": rep.eta,
        "N": rep.N,
        "seeds": list(rep.seeds),
        "f_max_reference": rep.f_max_reference,
        "source_entropy_bits": rep.source_entropy,
        "epsilon_prime": rep.epsilon_prime,
        "i_eps_bits": rep.i_eps,
        "kept_dim": rep.kept_dim,
        "kept_fidelity_reference": rep.kept_fidelity_reference,
        "kept_gap_norm": rep.kept_gap_norm,
        "f_min": rep.f_min,
        "f_total": list(rep.f_total),
        "f_total_mean": rep.f_total_mean,
        "f_total_stderr": rep.f_total_stderr,
        "entropy_bits_total": rep.entropy_bits_total,
        "entropy_bound_bits": rep.entropy_bound,
        "counting_bound_bits": rep.counting_bound,
        "per_state_bits": accounting["per_state_bits"],
        "bound_per_state_bits": accounting["bound_per_state"],
        "epsilon_target": rep.epsilon_target,
        "sqrt_reports": [sqrt_report_dict(r) for r in rep.sqrt_reports],
    }
