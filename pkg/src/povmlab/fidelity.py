"""Fidelity kernels, score operators, optimality certificates, and the
fixed-point POVM optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensemble import Ensemble, pure_state
from .exceptions import AlignmentError, NonConvergence, ShapeMismatch
from .linalg import haar_states, hermitize, opnorm_hermitian, psd_inverse_sqrt
from .mc import STAGE_OPTIMIZER, rng_stream
from .povm import (
    Povm,
    RankOnePovm,
    ZERO_WEIGHT_TRACE,
    outcome_distribution,
    prune_zero_outcomes,
    refine_to_rank_one,
)

KERNEL_KINDS = ("overlap", "overlap4", "guess_score", "matrix")

# Shift keeping the iteration operators comfortably positive definite.
MIN_SHIFTED_EIG = 0.1


@dataclass
class FidelityKernel:
    """Score f(i, j) for claiming guess j when the input was state i.

    Named rules score against the stored guess states; a matrix kernel is a
    direct lookup table.  f_min and f_max are cached: named rules use the
    rule's full range so downstream worst-case bounds stay kernel-agnostic,
    matrix kernels use the table's extremes.
    """

    kind: str
    guesses: np.ndarray | None = None
    matrix: np.ndarray | None = None
    f_min: float = field(init=False)
    f_max: float = field(init=False)

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ShapeMismatch(f"unknown kernel kind {self.kind!r}")
        if self.guesses is not None:
            self.guesses = np.atleast_2d(np.asarray(self.guesses, dtype=complex))
        if self.kind == "matrix":
            if self.matrix is None:
                raise ShapeMismatch("matrix kernel requires a score table")
            self.matrix = np.asarray(self.matrix, dtype=float)
            if not np.all(np.isfinite(self.matrix)):
                raise ShapeMismatch("kernel scores must be finite")
            self.f_min = float(self.matrix.min())
            self.f_max = float(self.matrix.max())
        else:
            if self.guesses is None:
                raise ShapeMismatch(f"{self.kind} kernel requires guess states")
            if self.kind == "guess_score":
                self.f_min, self.f_max = -1.0, 1.0
            else:
                self.f_min, self.f_max = 0.0, 1.0

    @property
    def n_guesses(self) -> int:
        if self.kind == "matrix":
            return self.matrix.shape[1]
        return self.guesses.shape[0]

    @property
    def dim(self) -> int | None:
        return None if self.guesses is None else self.guesses.shape[1]


def overlap_kernel(guesses) -> FidelityKernel:
    guesses = np.atleast_2d(np.asarray(guesses, dtype=complex))
    return FidelityKernel("overlap", guesses=np.array([pure_state(g) for g in guesses]))


def quartic_kernel(guesses) -> FidelityKernel:
    guesses = np.atleast_2d(np.asarray(guesses, dtype=complex))
    return FidelityKernel("overlap4", guesses=np.array([pure_state(g) for g in guesses]))


def guess_score_kernel(states) -> FidelityKernel:
    """+1 for naming the input state (by index), -1 otherwise."""
    states = np.atleast_2d(np.asarray(states, dtype=complex))
    return FidelityKernel("guess_score", guesses=np.array([pure_state(s) for s in states]))


def matrix_kernel(matrix, guesses=None) -> FidelityKernel:
    return FidelityKernel("matrix", guesses=guesses, matrix=matrix)


def score_matrix(kernel: FidelityKernel, ensemble: Ensemble) -> np.ndarray:
    """Score table f(i, j), one row per ensemble state."""
    if kernel.kind == "matrix":
        if kernel.matrix.shape[0] != ensemble.size:
            raise ShapeMismatch(
                f"kernel table has {kernel.matrix.shape[0]} rows "
                f"for {ensemble.size} states"
            )
        return kernel.matrix
    if kernel.dim != ensemble.dim:
        raise ShapeMismatch(f"kernel dim {kernel.dim} vs ensemble dim {ensemble.dim}")
    if kernel.kind == "guess_score":
        if kernel.n_guesses != ensemble.size:
            raise ShapeMismatch("guess_score pairs guesses with states by index")
        return 2.0 * np.eye(ensemble.size) - 1.0
    inner = np.abs(ensemble.states.conj() @ kernel.guesses.T) ** 2
    return inner if kernel.kind == "overlap" else inner**2


@dataclass
class ScoreOperators:
    """Weighted state projectors F_j = sum_i p_i f(i,j) |psi_i><psi_i|."""

    operators: np.ndarray

    def __post_init__(self):
        self.operators = np.asarray(self.operators, dtype=complex)
        herm = float(
            max(np.linalg.norm(op - op.conj().T) for op in self.operators)
        )
        if herm > 1e-10:
            raise ShapeMismatch(f"score operator hermiticity residual {herm:.3e}")

    @property
    def size(self) -> int:
        return self.operators.shape[0]

    @property
    def dim(self) -> int:
        return self.operators.shape[1]


def score_operators(ensemble: Ensemble, kernel: FidelityKernel) -> ScoreOperators:
    f = score_matrix(kernel, ensemble)
    ops = np.einsum(
        "ij,i,ia,ib->jab", f, ensemble.probs, ensemble.states, ensemble.states.conj()
    )
    return ScoreOperators(hermitize(ops))


def _guess_map(povm: Povm | RankOnePovm) -> np.ndarray:
    if isinstance(povm, RankOnePovm):
        return povm.parent_index
    if povm.guess_index is not None:
        return povm.guess_index
    return np.arange(povm.size)


def mean_fidelity(
    povm: Povm | RankOnePovm, ensemble: Ensemble, kernel: FidelityKernel
) -> float:
    """Average score sum_i p_i sum_j p(j|i) f(i, guess(j))."""
    guess = _guess_map(povm)
    if guess.size and (guess.min() < 0 or guess.max() >= kernel.n_guesses):
        raise ShapeMismatch("POVM guess index outside kernel range")
    if isinstance(povm, Povm) and povm.guess_index is None:
        if povm.size != kernel.n_guesses:
            raise ShapeMismatch(
                f"{povm.size} outcomes for {kernel.n_guesses} kernel guesses"
            )
    f = score_matrix(kernel, ensemble)
    dist = outcome_distribution(povm, ensemble)
    return float(np.einsum("i,ij,ij->", ensemble.probs, dist.conditional, f[:, guess]))


@dataclass
class OptimalityCertificate:
    """Stationarity and dual diagnostics for a rank-one POVM.

    lambda_hat is the Hermitian part of sum_j F_{g_j} |b_j><b_j|; skew_norm
    is the discarded anti-Hermitian residue.  gap_norm is the largest
    operator norm of F_g - lambda_hat over the kernel guesses, the constant
    appearing in the fidelity perturbation bound.
    """

    lambda_hat: np.ndarray
    stationarity_residual: float
    dual_min_eig: float
    fidelity: float
    skew_norm: float
    gap_norm: float

    @property
    def certified(self) -> bool:
        return bool(self.dual_min_eig >= -1e-8 and self.stationarity_residual <= 1e-6)


def certify(
    povm: RankOnePovm, ensemble: Ensemble, kernel: FidelityKernel
) -> OptimalityCertificate:
    """Evaluate the stationarity condition (F_j - lambda) b_j = 0 and the
    dual feasibility lambda >= F_g for every kernel guess."""
    ops = score_operators(ensemble, kernel).operators
    guess = _guess_map(povm)
    lam = np.einsum("jab,jb,jc->ac", ops[guess], povm.vectors, povm.vectors.conj())
    lam_h = hermitize(lam)
    skew = float(np.linalg.norm(lam - lam_h))
    fidelity = float(np.real(np.trace(lam)))

    residual = 0.0
    for j in range(povm.size):
        beta = povm.weights[j]
        if beta <= ZERO_WEIGHT_TRACE:
            continue
        vec = (ops[guess[j]] - lam_h) @ povm.vectors[j]
        residual = max(residual, float(np.linalg.norm(vec)) / np.sqrt(beta))

    dual_min = min(
        float(np.linalg.eigvalsh(lam_h - ops[g])[0]) for g in range(ops.shape[0])
    )
    gap = max(opnorm_hermitian(ops[g] - lam_h) for g in range(ops.shape[0]))
    return OptimalityCertificate(lam_h, residual, dual_min, fidelity, skew, gap)


def random_rank_one_povm(dim: int, n_outcomes: int, rng: np.random.Generator) -> Povm:
    """Haar-random rank-one POVM: normalize outer products of random kets."""
    vecs = haar_states(rng, n_outcomes, dim)
    raw = np.einsum("ja,jb->jab", vecs, vecs.conj())
    total = raw.sum(axis=0)
    # Fewer outcomes than dimensions cannot span; pad with a sliver of I.
    if np.linalg.eigvalsh(total)[0] < 1e-10:
        raw += 1e-6 * np.eye(dim) / n_outcomes
        total = raw.sum(axis=0)
    inv_sqrt, _, _, _ = psd_inverse_sqrt(total)
    return Povm(inv_sqrt @ raw @ inv_sqrt)


def _iterate_fixed_point(
    start: Povm, ops: np.ndarray, shift: float, max_iter: int, tol: float
) -> tuple[np.ndarray, float, int]:
    """Run a_j <- L^{-1/2} G_j a_j G_j L^{-1/2} until stationary."""
    g_ops = ops + shift * np.eye(ops.shape[1])
    elems = start.elements.copy()
    fid = float(np.real(np.einsum("jab,jba->", ops, elems)))
    for it in range(max_iter):
        pushed = g_ops @ elems @ g_ops
        inv_sqrt, _, _, _ = psd_inverse_sqrt(pushed.sum(axis=0))
        new = inv_sqrt @ pushed @ inv_sqrt
        new_fid = float(np.real(np.einsum("jab,jba->", ops, new)))
        if new_fid < fid - 1e-12:
            # The ascent property failed numerically; keep the better iterate.
            return elems, fid, it
        elems, fid = new, new_fid
        lam_h = hermitize(np.einsum("jab,jbc->ac", ops, elems))
        res = 0.0
        for j in range(elems.shape[0]):
            tr = float(np.real(np.trace(elems[j])))
            if tr <= ZERO_WEIGHT_TRACE:
                continue
            num = float(np.linalg.norm((ops[j] - lam_h) @ elems[j]))
            res = max(res, num / float(np.linalg.norm(elems[j])))
        if res <= 0.5 * tol:
            return elems, fid, it + 1
    return elems, fid, max_iter


def optimize_povm(
    ensemble: Ensemble,
    kernel: FidelityKernel,
    max_iter: int = 500,
    tol: float = 1e-8,
    seed: int = 0,
    restarts: int = 8,
) -> tuple[Povm, OptimalityCertificate]:
    """Maximize the mean fidelity over POVMs with one outcome per guess.

    Fixed-point ascent on positively shifted score operators, restarted from
    Haar-random rank-one POVMs.  The first restart attaining the best
    fidelity (within tol) wins, for reproducibility.  Raises NonConvergence
    carrying the best iterate when no restart meets the stationarity
    tolerance.
    """
    ops = score_operators(ensemble, kernel).operators
    n_out = kernel.n_guesses
    min_eig = min(float(np.linalg.eigvalsh(op)[0]) for op in ops)
    shift = max(0.0, MIN_SHIFTED_EIG - min_eig)

    best = None
    for r in range(restarts):
        rng = rng_stream(seed, STAGE_OPTIMIZER, r)
        start = random_rank_one_povm(ensemble.dim, n_out, rng)
        elems, fid, _ = _iterate_fixed_point(start, ops, shift, max_iter, tol)
        povm = prune_zero_outcomes(Povm(elems, guess_index=np.arange(n_out)))
        cert = certify(refine_to_rank_one(povm), ensemble, kernel)
        # Strict improvement beyond tol replaces; earliest restart keeps ties.
        if best is None or cert.fidelity > best[1].fidelity + tol:
            best = (povm, cert)
    povm, cert = best
    if cert.stationarity_residual > tol:
        raise NonConvergence(
            f"stationarity residual {cert.stationarity_residual:.3e} exceeds "
            f"tol {tol:.1e} after {restarts} restarts",
            best_povm=povm,
            best_certificate=cert,
        )
    return povm, cert


def perturbation_gap(
    povm_prime: Povm | RankOnePovm,
    optimal: RankOnePovm,
    ensemble: Ensemble,
    kernel: FidelityKernel,
) -> dict:
    """Fidelity deficit of a perturbed POVM against the leakage outside the
    optimal rank-one directions.

    Splits each a'_j into pieces along/off |b_j>; the block z_j annihilating
    |b_j> controls the deficit: F(a') >= F_max - C * sum_j tr z_j with
    C the certificate's gap_norm.
    """
    if povm_prime.size != optimal.size:
        raise AlignmentError(
            f"{povm_prime.size} perturbed outcomes vs {optimal.size} optimal"
        )
    guess_prime = _guess_map(povm_prime)
    if not np.array_equal(guess_prime, optimal.parent_index):
        raise AlignmentError("outcome-to-guess maps differ")

    if isinstance(povm_prime, RankOnePovm):
        elements = povm_prime.as_povm().elements
    else:
        elements = povm_prime.elements
    dim = optimal.dim
    z_sum = 0.0
    for j in range(optimal.size):
        q = np.eye(dim) - np.outer(optimal.directions[j], optimal.directions[j].conj())
        z = q @ elements[j] @ q
        z_sum += float(np.real(np.trace(z)))

    f_max = mean_fidelity(optimal, ensemble, kernel)
    gap = f_max - mean_fidelity(povm_prime, ensemble, kernel)
    cert = certify(optimal, ensemble, kernel)
    bound = cert.gap_norm * z_sum
    return {
        "gap": gap,
        "z_trace_sum": z_sum,
        "constant": cert.gap_norm,
        "bound": bound,
        "bound_holds": bool(gap <= bound + 1e-9),
    }


def _real_up_to_phase(states: np.ndarray) -> bool:
    for row in states:
        idx = np.argmax(np.abs(row))
        piv = row[idx]
        if abs(piv) < 1e-12:
            continue
        if np.max(np.abs(np.imag(row * (piv.conj() / abs(piv))))) > 1e-12:
            return False
    return True


def _bloch_projector(n: np.ndarray) -> np.ndarray:
    x, y, z = n
    return 0.5 * np.array([[1 + z, x - 1j * y], [x + 1j * y, 1 - z]])


def _fibonacci_sphere(n: int) -> np.ndarray:
    k = np.arange(n)
    z = 1.0 - (2.0 * k + 1.0) / n
    phi = np.pi * (3.0 - np.sqrt(5.0)) * k
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _best_projective(n: np.ndarray, ops: np.ndarray) -> tuple[float, np.ndarray]:
    """Best fidelity for the axis-n projective pair, assigning each outcome
    its most favorable kernel guess."""
    p1 = _bloch_projector(n)
    p2 = np.eye(2) - p1
    s1 = np.real(np.einsum("gab,ba->g", ops, p1))
    s2 = np.real(np.einsum("gab,ba->g", ops, p2))
    g1, g2 = int(np.argmax(s1)), int(np.argmax(s2))
    return float(s1[g1] + s2[g2]), np.array([g1, g2])


def projective_grid_search(
    ensemble: Ensemble,
    kernel: FidelityKernel,
    n_points: int = 721,
    refine_steps: int = 40,
) -> tuple[float, Povm]:
    """Exhaustive qubit search over projective pairs.

    Real scenarios scan a great circle in the x-z plane; otherwise a
    Fibonacci sphere grid is polished by a local pattern search.  Each
    projector gets the kernel guess that scores it best, so the result is
    the best projective measurement with guesses from the kernel.
    """
    if ensemble.dim != 2:
        raise ShapeMismatch("grid oracle is qubit-only")
    ops = score_operators(ensemble, kernel).operators

    real_case = _real_up_to_phase(ensemble.states) and (
        kernel.guesses is None or _real_up_to_phase(kernel.guesses)
    )
    if real_case:
        thetas = np.linspace(0.0, np.pi, n_points)
        axes = np.stack(
            [np.sin(2 * thetas), np.zeros_like(thetas), np.cos(2 * thetas)], axis=1
        )
    else:
        axes = _fibonacci_sphere(n_points)

    best_f, best_n, best_g = -np.inf, None, None
    for n in axes:
        f, g = _best_projective(n, ops)
        if f > best_f:
            best_f, best_n, best_g = f, n, g

    if not real_case:
        # Deterministic pattern search around the best grid axis.
        step = np.pi / np.sqrt(n_points)
        for _ in range(refine_steps):
            improved = False
            for dv in np.vstack([np.eye(3), -np.eye(3)]):
                cand = best_n + step * dv
                cand /= np.linalg.norm(cand)
                f, g = _best_projective(cand, ops)
                if f > best_f + 1e-15:
                    best_f, best_n, best_g = f, cand, g
                    improved = True
            if not improved:
                step *= 0.5
    p1 = _bloch_projector(best_n)
    povm = Povm(np.stack([p1, np.eye(2) - p1]), guess_index=best_g)
    return best_f, povm
