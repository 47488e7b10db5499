"""Command-line front end: demos, single runs, and seeded sweeps.

Exit codes: 0 success, 2 bad configuration or arguments, 3 numerical
non-convergence (partial results are still written when --out is given).
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import io as iolib
from .block import block_fidelity, product_rank_one
from .ensemble import density_matrix, uniform_bloch_ensemble, von_neumann_entropy
from .exceptions import ConfigError, NonConvergence, PovmLabError, UnknownDemo
from .fidelity import mean_fidelity, optimize_povm, overlap_kernel
from .linalg import PAULI_X, PAULI_Y, PAULI_Z
from .pipeline import ProtocolConfig, entropy_accounting, run_protocol
from .povm import (
    Povm,
    outcome_distribution,
    refine_to_rank_one,
    shannon_entropy,
)
from .sqrtm import evaluate_sqrt_measurement, n_for_eta
from .typical import typical_projector

DEMO_NAMES = ("example1", "example2", "bloch")


def _add_output_flags(p, default_format="json"):
    p.add_argument("--out", help="output base path; .json/.csv suffixes are appended")
    p.add_argument("--format", choices=("json", "csv", "both"), default=default_format)
    p.add_argument("--timestamp", help="pin the manifest timestamp (reproducible files)")
    p.add_argument("--cap-dim", type=int, default=4096, help="product-space dimension cap")


def _add_problem_flags(p, default_ensemble="two_state"):
    p.add_argument("--ensemble", choices=iolib.ENSEMBLE_KINDS, default=default_ensemble)
    p.add_argument("--alpha2", type=float, default=0.9, help="two_state weight parameter")
    p.add_argument("--samples", type=int, default=100000, help="uniform_bloch sample count")
    p.add_argument("--kernel", choices=iolib.KERNEL_KINDS_CLI, default="guess_score")
    p.add_argument("--seed", type=int, default=0, help="master seed")


def _problem(args):
    cfg = {"kind": args.ensemble, "alpha2": args.alpha2, "n": args.samples, "seed": args.seed}
    ens = iolib.build_ensemble(cfg)
    kernel = iolib.build_kernel({"kind": args.kernel}, ens)
    return ens, kernel


def _manifest(args, subcommand, config_paths=()):
    kw = {}
    if args.timestamp is not None:
        kw["timestamp"] = args.timestamp
    return iolib.RunManifest(
        subcommand=subcommand,
        config_paths=tuple(str(p) for p in config_paths),
        master_seed=getattr(args, "seed", None),
        **kw,
    )


def _emit(args, manifest, payload, header=None, rows=None):
    if not args.out:
        return
    if args.format in ("json", "both"):
        iolib.write_json(args.out + ".json", manifest, payload)
    if args.format in ("csv", "both"):
        if header is None:
            raise ConfigError(f"{manifest.subcommand}: no CSV table for this subcommand")
        iolib.write_csv(args.out + ".csv", manifest, header, rows)


def _bloch_axis(vector: np.ndarray) -> np.ndarray:
    v = vector / np.linalg.norm(vector)
    return np.array(
        [np.real(np.vdot(v, p @ v)) for p in (PAULI_X, PAULI_Y, PAULI_Z)]
    )


def _print_povm(rank1):
    for j in range(rank1.size):
        line = f"  outcome {j}: weight={rank1.weights[j]:.6f} guess={rank1.parent_index[j]}"
        if rank1.dim == 2:
            n = _bloch_axis(rank1.vectors[j])
            line += "  bloch=(%+.4f, %+.4f, %+.4f)" % tuple(n)
        print(line)


def _optimize_payload(args, ens, kernel, povm, cert):
    rank1 = refine_to_rank_one(povm)
    dist = outcome_distribution(povm, ens)
    entropy = shannon_entropy(dist)
    payload = {
        "ensemble": args.ensemble,
        "kernel": args.kernel,
        "entropy_bits": entropy,
        "source_entropy_bits": von_neumann_entropy(density_matrix(ens)),
        "certificate": iolib.certificate_dict(cert),
        "povm": iolib.rank_one_dict(rank1),
    }
    header = ["outcome", "guess", "weight", "marginal_prob"]
    rows = [
        [j, int(rank1.parent_index[j]), rank1.weights[j], dist.probs[j]]
        for j in range(rank1.size)
    ]
    return payload, header, rows, entropy


def _cmd_optimize(args) -> int:
    ens, kernel = _problem(args)
    manifest = _manifest(args, getattr(args, "manifest_name", "optimize"))
    try:
        povm, cert = optimize_povm(
            ens, kernel, max_iter=args.max_iter, tol=args.tol,
            seed=args.seed, restarts=args.restarts,
        )
    except NonConvergence as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        if exc.best_povm is not None:
            payload, header, rows, _ = _optimize_payload(
                args, ens, kernel, exc.best_povm, exc.best_certificate
            )
            payload["converged"] = False
            _emit(args, manifest, payload, header, rows)
        return 3
    payload, header, rows, entropy = _optimize_payload(args, ens, kernel, povm, cert)
    payload["converged"] = True
    print(f"F_max = {cert.fidelity:.12g}")
    print(f"stationarity residual = {cert.stationarity_residual:.3e}")
    print(f"dual min eigenvalue   = {cert.dual_min_eig:.3e}")
    print(f"output entropy        = {entropy:.12g} bits")
    _print_povm(refine_to_rank_one(povm))
    _emit(args, manifest, payload, header, rows)
    return 0


def _cmd_block(args) -> int:
    ens, kernel = _problem(args)
    manifest = _manifest(args, "block")
    povm, cert = optimize_povm(ens, kernel, seed=args.seed)
    rank1 = refine_to_rank_one(povm)
    f_single = mean_fidelity(rank1, ens, kernel)
    blk = product_rank_one(rank1, args.L, dim_cap=args.cap_dim)
    f_block = block_fidelity(blk, ens, kernel, method=args.method)
    print(f"single-copy F = {f_single:.12g}")
    print(f"L={args.L} product F_L = {f_block:.12g}  (|diff| = {abs(f_block - f_single):.3e})")
    payload = {
        "ensemble": args.ensemble, "kernel": args.kernel, "L": args.L,
        "method": args.method, "f_single": f_single, "f_block": f_block,
    }
    header = ["L", "method", "f_single", "f_block", "abs_diff"]
    rows = [[args.L, args.method, f_single, f_block, abs(f_block - f_single)]]
    _emit(args, manifest, payload, header, rows)
    return 0


def _resolve_samples(args, ens) -> int:
    if args.N is not None:
        return args.N
    rho = density_matrix(ens)
    return n_for_eta(ens.dim, float(rho.eigenvalues[0]), args.L, args.eta)


def _cmd_sqrtm(args) -> int:
    ens, kernel = _problem(args)
    manifest = _manifest(args, "sqrtm")
    if not args.seeds:
        raise ConfigError("--seeds: at least one seed required")
    povm, cert = optimize_povm(ens, kernel, seed=args.seed)
    rank1 = refine_to_rank_one(povm)
    n_samples = _resolve_samples(args, ens)
    reports = evaluate_sqrt_measurement(rank1, ens, kernel, args.L, n_samples, args.seeds)
    fids = [r.fidelity for r in reports]
    print(f"F_max reference = {cert.fidelity:.12g}")
    print(f"L={args.L} N={n_samples} seeds={len(args.seeds)}")
    print(f"mean F_L = {np.mean(fids):.12g} (min {min(fids):.12g}, max {max(fids):.12g})")
    print(f"mean entropy/slot = {np.mean([r.entropy_per_slot for r in reports]):.12g} bits")
    payload = {
        "ensemble": args.ensemble, "kernel": args.kernel,
        "L": args.L, "N": n_samples, "eta": args.eta,
        "f_max_reference": cert.fidelity,
        "reports": [iolib.sqrt_report_dict(r) for r in reports],
    }
    header = [
        "seed", "L", "N", "dim_hb", "completeness_residual", "mean_perp",
        "f_l", "f_pessimistic", "entropy_per_slot", "c0_weight",
    ]
    rows = [
        [r.seed, r.block_length, r.n_samples, r.dim_hb, r.completeness_residual,
         r.mean_perp, r.fidelity, r.fidelity_pessimistic, r.entropy_per_slot,
         r.c0_weight]
        for r in reports
    ]
    _emit(args, manifest, payload, header, rows)
    return 0


def _cmd_typical(args) -> int:
    ens, _ = _problem(args)
    manifest = _manifest(args, "typical")
    rho = density_matrix(ens)
    entries = []
    for lp in args.Lprime:
        pi = typical_projector(rho, lp, args.etaprime, dim_cap=args.cap_dim)
        lo, hi = pi.dim_bounds()
        entries.append({
            "L_prime": lp, "eta_prime": args.etaprime, "window": "closed",
            "entropy_bits": pi.entropy, "kept_dim": pi.kept_dim,
            "lower_dim_bound": lo, "upper_dim_bound": hi,
            "kept_weight": pi.kept_weight, "epsilon_prime": pi.epsilon_prime,
        })
    print("L'   kept_dim   [lower_bound, upper_bound]   kept_weight      eps'")
    for e in entries:
        print(
            "%-4d %-10d [%.6g, %.6g]   %.12f   %.12f"
            % (e["L_prime"], e["kept_dim"], e["lower_dim_bound"],
               e["upper_dim_bound"], e["kept_weight"], e["epsilon_prime"])
        )
    payload = {"ensemble": args.ensemble, "rows": entries}
    header = [
        "L_prime", "eta_prime", "entropy_bits", "kept_dim",
        "lower_dim_bound", "upper_dim_bound", "kept_weight", "epsilon_prime",
    ]
    rows = [[e[k] for k in header] for e in entries]
    _emit(args, manifest, payload, header, rows)
    return 0


PIPELINE_CSV_HEADER = [
    "L_prime", "L", "eta_prime", "eta", "N", "seed", "epsilon_prime",
    "kept_dim", "dim_hb", "c0_weight", "f_seq", "f_total",
    "entropy_block_bits", "i_eps_bits", "per_state_bits", "bound_per_state_bits",
]


def _pipeline_rows(rep, acct):
    rows = []
    for r, ft in zip(rep.sqrt_reports, rep.f_total):
        h_block = r.entropy_per_slot * rep.L + rep.L * rep.i_eps
        rows.append([
            rep.L_prime, rep.L, rep.eta_prime, rep.eta, rep.N, r.seed,
            rep.epsilon_prime, rep.kept_dim, r.dim_hb, r.c0_weight,
            r.fidelity, ft, h_block, rep.i_eps,
            acct["per_state_bits"], acct["bound_per_state"],
        ])
    return rows


def _protocol_configs(cfg: dict, cap_dim: int):
    try:
        proto = cfg["protocol"]
    except KeyError:
        raise ConfigError("protocol: section missing from config")
    for key in ("L_prime", "L", "eta_prime", "eta"):
        if key not in proto:
            raise ConfigError(f"protocol.{key}: required")
    seeds = proto.get("seeds", [0])
    if not isinstance(seeds, (list, tuple)) or len(seeds) == 0:
        raise ConfigError("protocol.seeds: must be a nonempty list")
    ens = iolib.build_ensemble(cfg.get("ensemble", {"kind": "two_state"}))
    kernel = iolib.build_kernel(cfg.get("kernel", {}), ens)
    l_values = proto["L"]
    if not isinstance(l_values, (list, tuple)):
        l_values = [l_values]
    configs = []
    for l_val in l_values:
        configs.append(ProtocolConfig(
            ensemble=ens,
            kernel=kernel,
            L_prime=int(proto["L_prime"]),
            L=int(l_val),
            eta_prime=float(proto["eta_prime"]),
            eta=float(proto["eta"]),
            N=proto.get("N", "auto"),
            epsilon_target=proto.get("epsilon_target"),
            seeds=tuple(int(s) for s in seeds),
            dim_cap=int(proto.get("dim_cap", cap_dim)),
            master_seed=int(proto.get("master_seed", 0)),
        ))
    return configs


def _cmd_pipeline(args) -> int:
    cfg = iolib.load_config(args.config)
    manifest = _manifest(args, "pipeline", config_paths=[args.config])
    reports = []
    rows = []
    for pc in _protocol_configs(cfg, args.cap_dim):
        rep = run_protocol(pc)
        acct = entropy_accounting(rep)
        reports.append(iolib.protocol_report_dict(rep, acct))
        rows.extend(_pipeline_rows(rep, acct))
        print(
            f"L'={rep.L_prime} L={rep.L} N={rep.N} eps'={rep.epsilon_prime:.6f} "
            f"F_total={rep.f_total_mean:.6f}±{rep.f_total_stderr:.6f} "
            f"bits/state={acct['per_state_bits']:.6f} (bound {acct['bound_per_state']:.6f})"
        )
    payload = {"reports": reports if len(reports) > 1 else reports[0]}
    _emit(args, manifest, payload, PIPELINE_CSV_HEADER, rows)
    return 0


def _axis(proto, key, default):
    val = proto.get(key, default)
    return list(val) if isinstance(val, (list, tuple)) else [val]


def _cmd_sweep(args) -> int:
    cfg = iolib.load_config(args.config)
    manifest = _manifest(args, "sweep", config_paths=[args.config])
    proto = cfg.get("protocol", {})
    if "L_prime" in proto:
        return _cmd_pipeline(args)

    sweep = cfg.get("sweep")
    if sweep is None:
        raise ConfigError("sweep: section missing from config")
    seeds = sweep.get("seeds", [])
    if not isinstance(seeds, (list, tuple)) or len(seeds) == 0:
        raise ConfigError("sweep.seeds: must be a nonempty list")
    ens = iolib.build_ensemble(cfg.get("ensemble", {"kind": "trine"}))
    kernel = iolib.build_kernel(cfg.get("kernel", {}), ens)
    master_seed = int(sweep.get("master_seed", 0))
    povm, cert = optimize_povm(ens, kernel, seed=master_seed)
    rank1 = refine_to_rank_one(povm)
    rho = density_matrix(ens)

    header = [
        "L", "N", "eta", "seed", "f_max_reference", "f_l", "deficit",
        "f_pessimistic", "entropy_per_slot", "dim_hb", "mean_perp",
        "c0_weight", "completeness_residual",
    ]
    rows = []
    records = []
    for l_val in _axis(sweep, "L", 2):
        for eta in _axis(sweep, "eta", 0.5):
            for n_val in _axis(sweep, "N", "auto"):
                n_res = (
                    n_for_eta(ens.dim, float(rho.eigenvalues[0]), int(l_val), float(eta))
                    if n_val == "auto" else int(n_val)
                )
                reports = evaluate_sqrt_measurement(
                    rank1, ens, kernel, int(l_val), n_res, [int(s) for s in seeds]
                )
                for r in reports:
                    rows.append([
                        int(l_val), n_res, float(eta), r.seed, cert.fidelity,
                        r.fidelity, cert.fidelity - r.fidelity,
                        r.fidelity_pessimistic, r.entropy_per_slot, r.dim_hb,
                        r.mean_perp, r.c0_weight, r.completeness_residual,
                    ])
                    records.append(iolib.sqrt_report_dict(r) | {"L": int(l_val), "eta": float(eta)})
    print(f"swept {len(rows)} rows")
    payload = {"f_max_reference": cert.fidelity, "rows": records}
    _emit(args, manifest, payload, header, rows)
    return 0


def _demo_bloch(args, manifest) -> int:
    ens = uniform_bloch_ensemble(args.samples, args.seed)
    z_states = np.eye(2, dtype=complex)
    povm = Povm(
        np.stack([np.outer(z, z.conj()) for z in z_states]), guess_index=[0, 1]
    )
    fid = mean_fidelity(povm, ens, overlap_kernel(z_states))
    print(f"sigma_z overlap fidelity on {args.samples} uniform samples = {fid:.6f}")
    print(f"|F - 2/3| = {abs(fid - 2.0 / 3.0):.6f}")
    payload = {"demo": "bloch", "samples": args.samples, "seed": args.seed,
               "fidelity": fid, "reference": 2.0 / 3.0}
    header = ["samples", "seed", "fidelity", "abs_error"]
    rows = [[args.samples, args.seed, fid, abs(fid - 2.0 / 3.0)]]
    _emit(args, manifest, payload, header, rows)
    return 0


def _cmd_demo(args) -> int:
    if args.name not in DEMO_NAMES:
        raise UnknownDemo(f"unknown demo {args.name!r}; choose from {DEMO_NAMES}")
    manifest = _manifest(args, f"demo:{args.name}")
    if args.name == "bloch":
        return _demo_bloch(args, manifest)
    args.ensemble = "two_state" if args.name == "example1" else "trine"
    args.kernel = "guess_score"
    args.restarts, args.max_iter, args.tol = 8, 500, 1e-8
    args.manifest_name = f"demo:{args.name}"
    code = _cmd_optimize(args)
    if args.name == "example2":
        print("reference: F_max = 1/3, output entropy = log2(3) = 1.584963 bits")
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="povmlab",
        description="Optimal-measurement laboratory: fidelity optimization, "
        "square-root block measurements, typicality filtering, entropy accounting.",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("optimize", help="fixed-point optimization with certificate")
    _add_problem_flags(p)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-8)
    _add_output_flags(p)
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("block", help="product measurement over L copies")
    _add_problem_flags(p)
    p.add_argument("--L", type=int, default=2)
    p.add_argument("--method", choices=("auto", "direct", "reduced"), default="auto")
    _add_output_flags(p)
    p.set_defaults(func=_cmd_block)

    p = sub.add_parser("sqrtm", help="sampled square-root block measurement")
    _add_problem_flags(p, default_ensemble="trine")
    p.add_argument("--L", type=int, default=2)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--N", type=int, default=None)
    group.add_argument("--auto-n", action="store_true", help="N from the eta threshold")
    p.add_argument("--eta", type=float, default=0.5)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    _add_output_flags(p)
    p.set_defaults(func=_cmd_sqrtm)

    p = sub.add_parser("typical", help="typical-subspace projector table")
    _add_problem_flags(p)
    p.add_argument("--Lprime", type=int, nargs="+", default=[4, 8])
    p.add_argument("--etaprime", type=float, default=0.15)
    _add_output_flags(p)
    p.set_defaults(func=_cmd_typical)

    p = sub.add_parser("pipeline", help="filtered block-measurement protocol")
    p.add_argument("--config", required=True, help="TOML or JSON config file")
    _add_output_flags(p)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("demo", help="built-in demos: example1, example2, bloch")
    p.add_argument("name")
    p.add_argument("--alpha2", type=float, default=0.9)
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--seed", type=int, default=7)
    _add_output_flags(p)
    p.set_defaults(func=_cmd_demo)

    p = sub.add_parser("sweep", help="seeded grid sweep to CSV")
    p.add_argument("--config", required=True, help="TOML or JSON config file")
    _add_output_flags(p, default_format="csv")
    p.set_defaults(func=_cmd_sweep)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UnknownDemo) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NonConvergence as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return 3
    except PovmLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
