"""End-to-end protocol: typicality-filter L'-blocks of source states, then
measure L filtered blocks jointly with a randomized square-root measurement,
and account for every output bit.

Each L'-block either fails the typicality test (its states are scored at
f_min and one pass/fail bit of entropy I_eps is charged) or becomes a single
"super state" living in the kept subspace.  The square-root stage then runs
on L super states exactly as in the single-stage construction, so its
reports are directly comparable with bare runs.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .ensemble import (
    DEFAULT_DIM_CAP,
    Ensemble,
    density_matrix,
    tensor_ensemble,
    von_neumann_entropy,
)
from .exceptions import CapExceeded, ConfigError, EntropyBoundExceeded
from .fidelity import (
    FidelityKernel,
    certify,
    matrix_kernel,
    optimize_povm,
    score_matrix,
)
from .linalg import binary_entropy_bits, ceil_pow2_exponent, product_vectors
from .mc import STAGE_ENSEMBLE_SAMPLING, RunningStats, rng_stream
from .povm import RankOnePovm, refine_to_rank_one
from .sqrtm import SqrtMeasurementReport, evaluate_sqrt_measurement
from .typical import TypicalProjector, typical_projector

SEQUENCE_CAP = 10**5
SAMPLED_SEQUENCES = 10**4
ZERO_PASS_WEIGHT = 1e-14


@dataclass
class ProtocolConfig:
    """Inputs of one protocol run; N may be the literal string "auto"."""

    ensemble: Ensemble
    kernel: FidelityKernel
    L_prime: int
    L: int
    eta_prime: float
    eta: float
    N: int | str = "auto"
    epsilon_target: float | None = None
    seeds: tuple = (0,)
    base_rank1: RankOnePovm | None = None
    dim_cap: int = DEFAULT_DIM_CAP
    master_seed: int = 0

    def __post_init__(self):
        if self.L_prime < 1 or self.L < 1:
            raise ConfigError("block lengths must be positive")
        if self.eta_prime < 0 or self.eta < 0:
            raise ConfigError("slack parameters must be nonnegative")
        if isinstance(self.N, str):
            if self.N != "auto":
                raise ConfigError(f"N must be an integer or 'auto', got {self.N!r}")
        elif self.N < 1:
            raise ConfigError("N must be at least 1")
        if len(self.seeds) == 0:
            raise ConfigError("at least one seed required")


@dataclass
class ProtocolReport:
    """Everything measured in one run, averaged over seeds where noted."""

    L_prime: int
    L: int
    eta_prime: float
    eta: float
    N: int
    seeds: tuple
    f_max_reference: float
    source_entropy: float
    epsilon_prime: float
    i_eps: float
    kept_dim: int
    kept_fidelity_reference: float
    kept_gap_norm: float
    kept_stationarity: float
    f_min: float
    f_total: list[float]
    f_total_mean: float
    f_total_stderr: float
    entropy_bits_total: float
    entropy_bound: float
    counting_bound: float
    sqrt_reports: list[SqrtMeasurementReport]
    epsilon_target: float | None = None

    @property
    def states_per_run(self) -> int:
        return self.L * self.L_prime

    @property
    def mean_dim_hb(self) -> float:
        return float(np.mean([r.dim_hb for r in self.sqrt_reports]))

    @property
    def mean_c0_weight(self) -> float:
        return float(np.mean([r.c0_weight for r in self.sqrt_reports]))


def sequence_kernel(
    kernel: FidelityKernel,
    ensemble: Ensemble,
    L_prime: int,
    sequences: np.ndarray | None = None,
) -> FidelityKernel:
    """Induced kernel on L'-blocks: score of a guess tuple against an input
    sequence is the mean of the per-state scores.  Guess tuples are all
    G**L' combinations in row-major order; input rows follow `sequences`
    (default: all input tuples, row-major)."""
    f = score_matrix(kernel, ensemble)
    n_guess = kernel.n_guesses
    if n_guess**L_prime > SEQUENCE_CAP:
        raise CapExceeded(f"{n_guess}**{L_prime} guess tuples exceed cap {SEQUENCE_CAP}")
    if sequences is None:
        if ensemble.size**L_prime > SEQUENCE_CAP:
            raise CapExceeded(
                f"{ensemble.size}**{L_prime} input tuples exceed cap {SEQUENCE_CAP}"
            )
        sequences = np.array(
            list(itertools.product(range(ensemble.size), repeat=L_prime)), dtype=int
        )
    guess_tuples = np.array(
        list(itertools.product(range(n_guess), repeat=L_prime)), dtype=int
    )
    table = f[sequences[:, None, :], guess_tuples[None, :, :]].mean(axis=2)
    return matrix_kernel(table)


def _flat_guess_index(guess_seq: np.ndarray, n_guess: int) -> np.ndarray:
    return np.ravel_multi_index(guess_seq.T, (n_guess,) * guess_seq.shape[1])


def build_super_problem(
    ensemble: Ensemble,
    kernel: FidelityKernel,
    base_rank1: RankOnePovm,
    L_prime: int,
    pi: TypicalProjector | None = None,
    dim_cap: int = DEFAULT_DIM_CAP,
    master_seed: int = 0,
) -> tuple[RankOnePovm, Ensemble, FidelityKernel]:
    """Lift the single-copy problem to L'-blocks, optionally filtered by pi.

    Without a projector (or with a full-window projector) this is the exact
    tensor lift: product input states, product rank-one pieces, induced
    kernel — no basis change, so downstream floats match a bare block run
    bit for bit.  With a nontrivial projector, states and pieces are
    expressed in the kept orthonormal basis and renormalized.
    """
    from .block import product_rank_one

    n_guess = kernel.n_guesses
    blockp = product_rank_one(base_rank1, L_prime, dim_cap=dim_cap)
    flat_guess = _flat_guess_index(blockp.guess_seq, n_guess)

    if pi is None or pi.kept_dim == pi.dim:
        super_ens = tensor_ensemble(ensemble, L_prime, dim_cap=dim_cap)
        super_kernel = sequence_kernel(kernel, ensemble, L_prime)
        super_rank1 = RankOnePovm(blockp.vectors, flat_guess)
        return super_rank1, super_ens, super_kernel

    basis = pi.kept_basis()
    if ensemble.size**L_prime <= SEQUENCE_CAP:
        sequences = np.array(
            list(itertools.product(range(ensemble.size), repeat=L_prime)), dtype=int
        )
        seq_probs = ensemble.probs[sequences].prod(axis=1)
    else:
        # Post-selection by Monte Carlo: draw sequences from the prior and
        # keep an empirical ensemble of those that pass.
        rng = rng_stream(master_seed, STAGE_ENSEMBLE_SAMPLING)
        sequences = rng.choice(ensemble.size, size=(SAMPLED_SEQUENCES, L_prime), p=ensemble.probs)
        seq_probs = np.full(sequences.shape[0], 1.0 / sequences.shape[0])
    amps = product_vectors(ensemble.states, sequences) @ basis.conj()
    pass_w = np.real(np.einsum("Ik,Ik->I", amps.conj(), amps))
    keep = pass_w > ZERO_PASS_WEIGHT
    if not np.any(keep):
        raise CapExceeded("no input sequence passes the typicality filter")
    amps, pass_w, seq_probs = amps[keep], pass_w[keep], seq_probs[keep]
    sequences = sequences[keep]
    q = seq_probs * pass_w
    super_ens = Ensemble(amps / np.sqrt(pass_w)[:, None], q / q.sum())
    super_kernel = sequence_kernel(kernel, ensemble, L_prime, sequences=sequences)

    pieces = blockp.vectors @ basis.conj()
    super_rank1 = RankOnePovm(pieces, flat_guess)
    return super_rank1, super_ens, super_kernel


def resolve_n(config_n, kept_dim: int, rho_kept_max: float, L: int, eta: float) -> int:
    """The sample-count threshold evaluated with the kept-space parameters."""
    if config_n != "auto":
        return int(config_n)
    exponent = L * (2.0 * math.log2(kept_dim) + math.log2(rho_kept_max) + eta)
    return ceil_pow2_exponent(exponent)


def run_protocol(config: ProtocolConfig) -> ProtocolReport:
    """Filter, measure, and account: the block-coding measurement protocol.

    Raises CapExceeded (with a feasible suggestion) when the kept dimension
    to the L-th power leaves the desk-scale cap, and EntropyBoundExceeded
    if the realized output entropy beats its own counting bound, which
    would indicate an accounting bug.
    """
    ens, kernel = config.ensemble, config.kernel
    rho = density_matrix(ens)
    pi = typical_projector(rho, config.L_prime, config.eta_prime, dim_cap=config.dim_cap)
    eps = pi.epsilon_prime
    i_eps = binary_entropy_bits(eps)

    base = config.base_rank1
    if base is None:
        povm, _ = optimize_povm(ens, kernel, seed=config.master_seed)
        base = refine_to_rank_one(povm)
    base_cert = certify(base, ens, kernel)

    if pi.kept_dim == 0:
        raise CapExceeded(
            f"typicality window is empty at L'={config.L_prime}, "
            f"eta'={config.eta_prime}; widen eta' or change L'"
        )
    if pi.kept_dim**config.L > config.dim_cap:
        max_l = max(1, int(math.floor(math.log(config.dim_cap) / math.log(pi.kept_dim))))
        raise CapExceeded(
            f"effective dimension {pi.kept_dim}**{config.L} exceeds cap "
            f"{config.dim_cap}; largest feasible L here is {max_l}"
        )

    super_rank1, super_ens, super_kernel = build_super_problem(
        ens,
        kernel,
        base,
        config.L_prime,
        pi=pi,
        dim_cap=config.dim_cap,
        master_seed=config.master_seed,
    )
    kept_cert = certify(super_rank1, super_ens, super_kernel)

    rho_kept = density_matrix(super_ens)
    n_samples = resolve_n(
        config.N, pi.kept_dim, float(rho_kept.eigenvalues[0]), config.L, config.eta
    )

    reports = evaluate_sqrt_measurement(
        super_rank1, super_ens, super_kernel, config.L, n_samples, config.seeds
    )

    f_stats = RunningStats()
    h_stats = RunningStats()
    f_total = []
    for rep in reports:
        ft = (1.0 - eps) * rep.fidelity + eps * kernel.f_min
        f_total.append(ft)
        f_stats.push(ft)
        h_stats.push(rep.entropy_per_slot * config.L)

    entropy_bits_total = h_stats.mean + config.L * i_eps
    entropy_bound = math.log2(n_samples) + config.L * i_eps
    counting_bound = math.log2(n_samples + 1) + config.L * i_eps
    if entropy_bits_total > entropy_bound + 1e-9:
        raise EntropyBoundExceeded(
            f"realized entropy {entropy_bits_total:.6f} exceeds counting bound "
            f"{entropy_bound:.6f}"
        )

    return ProtocolReport(
        L_prime=config.L_prime,
        L=config.L,
        eta_prime=config.eta_prime,
        eta=config.eta,
        N=n_samples,
        seeds=tuple(config.seeds),
        f_max_reference=base_cert.fidelity,
        source_entropy=von_neumann_entropy(rho),
        epsilon_prime=eps,
        i_eps=i_eps,
        kept_dim=pi.kept_dim,
        kept_fidelity_reference=kept_cert.fidelity,
        kept_gap_norm=kept_cert.gap_norm,
        kept_stationarity=kept_cert.stationarity_residual,
        f_min=kernel.f_min,
        f_total=f_total,
        f_total_mean=f_stats.mean,
        f_total_stderr=f_stats.stderr,
        entropy_bits_total=entropy_bits_total,
        entropy_bound=entropy_bound,
        counting_bound=counting_bound,
        sqrt_reports=reports,
        epsilon_target=config.epsilon_target,
    )


def entropy_accounting(report: ProtocolReport) -> dict:
    """Realized bits per input state against the composite source bound
    H + 3 eta' + eta/L' + I_eps/L'."""
    per_state = report.entropy_bits_total / report.states_per_run
    bound = (
        report.source_entropy
        + 3.0 * report.eta_prime
        + report.eta / report.L_prime
        + report.i_eps / report.L_prime
    )
    if per_state > bound + 1e-9:
        raise EntropyBoundExceeded(
            f"{per_state:.6f} bits per state exceeds bound {bound:.6f}"
        )
    return {"per_state_bits": per_state, "bound_per_state": bound}
