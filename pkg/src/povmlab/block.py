"""Measurements on length-L blocks: product POVMs, block fidelity via the
direct sum or via single-site reduced operators."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .ensemble import DEFAULT_DIM_CAP, DensityMatrix, Ensemble, density_matrix, tensor_ensemble
from .exceptions import CapExceeded, IndexOutOfRange, PovmLabError, ShapeMismatch
from .fidelity import FidelityKernel, score_matrix, score_operators
from .linalg import kron_all, product_vectors, site_reduced_matrix, site_reduced_rank_one
from .povm import Povm, RankOnePovm

# Direct block-fidelity summation is attempted only below this many terms
# (block outcomes times block inputs).
DIRECT_TERM_GUARD = 10**7

NO_GUESS = -1


@dataclass
class BlockPovm:
    """POVM on (C^d)^{tensor L} with per-slot guess bookkeeping.

    Outcomes come in up to three segments, indexed in this order: dense
    elements, rank-one vectors, and an optional subspace complement stored
    by an orthonormal basis of its range (one outcome equal to the basis
    Gram projector).  guess_seq assigns each outcome a length-L row of
    kernel guess indices; NO_GUESS (-1) marks slots with no claim, scored
    pessimistically at the kernel's f_min.
    """

    d: int
    L: int
    guess_seq: np.ndarray
    elements: np.ndarray | None = None
    vectors: np.ndarray | None = None
    complement_basis: np.ndarray | None = None
    labels: list[str] | None = None

    def __post_init__(self):
        dim = self.dim
        self.guess_seq = np.asarray(self.guess_seq, dtype=int)
        if self.elements is not None:
            self.elements = np.asarray(self.elements, dtype=complex)
            if self.elements.shape[1:] != (dim, dim):
                raise ShapeMismatch(f"dense elements must be (*, {dim}, {dim})")
        if self.vectors is not None:
            self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=complex))
            if self.vectors.shape[1] != dim:
                raise ShapeMismatch(f"vectors must have length {dim}")
        if self.complement_basis is not None:
            self.complement_basis = np.asarray(self.complement_basis, dtype=complex)
            if self.complement_basis.ndim != 2 or self.complement_basis.shape[0] != dim:
                raise ShapeMismatch(f"complement basis must be ({dim}, m)")
            if self.complement_basis.shape[1] == 0:
                self.complement_basis = None
        if self.guess_seq.shape != (self.size, self.L):
            raise ShapeMismatch(
                f"guess_seq must be ({self.size}, {self.L}), got {self.guess_seq.shape}"
            )
        if self.guess_seq.size and self.guess_seq.min() < NO_GUESS:
            raise ShapeMismatch("guess indices must be >= -1")

    @property
    def dim(self) -> int:
        return self.d**self.L

    @property
    def n_dense(self) -> int:
        return 0 if self.elements is None else self.elements.shape[0]

    @property
    def n_vectors(self) -> int:
        return 0 if self.vectors is None else self.vectors.shape[0]

    @property
    def has_complement(self) -> bool:
        return self.complement_basis is not None

    @property
    def size(self) -> int:
        return self.n_dense + self.n_vectors + (1 if self.has_complement else 0)

    def completeness_residual(self) -> float:
        total = np.zeros((self.dim, self.dim), dtype=complex)
        if self.elements is not None:
            total += self.elements.sum(axis=0)
        if self.vectors is not None:
            total += self.vectors.T @ self.vectors.conj()
        if self.has_complement:
            total += self.complement_basis @ self.complement_basis.conj().T
        return float(np.linalg.norm(total - np.eye(self.dim)))

    def outcome_matrix(self, j: int) -> np.ndarray:
        """Dense matrix of outcome j (complement included)."""
        if not 0 <= j < self.size:
            raise IndexOutOfRange(f"outcome {j} of {self.size}")
        if j < self.n_dense:
            return self.elements[j]
        j -= self.n_dense
        if j < self.n_vectors:
            return np.outer(self.vectors[j], self.vectors[j].conj())
        return self.complement_basis @ self.complement_basis.conj().T


def product_povm(povm: Povm, L: int, dim_cap: int = DEFAULT_DIM_CAP) -> BlockPovm:
    """All M**L tensor products of the single-copy elements, row-major."""
    d = povm.dim
    if d**L > dim_cap:
        raise CapExceeded(f"block dimension {d}**{L} exceeds cap {dim_cap}")
    n_out = povm.size**L
    if n_out * (d**L) ** 2 > 5 * 10**7:
        raise CapExceeded(f"{n_out} dense block elements of dim {d**L} exceed memory guard")
    idx = np.array(list(itertools.product(range(povm.size), repeat=L)), dtype=int)
    idx = idx.reshape(n_out, L)
    elements = np.stack([kron_all([povm.elements[i] for i in row]) for row in idx])
    single_guess = povm.guess_index if povm.guess_index is not None else np.arange(povm.size)
    return BlockPovm(d, L, single_guess[idx], elements=elements)


def product_rank_one(povm: RankOnePovm, L: int, dim_cap: int = DEFAULT_DIM_CAP) -> BlockPovm:
    """All K**L tensor products of rank-one pieces, as block vectors."""
    d = povm.dim
    if d**L > dim_cap:
        raise CapExceeded(f"block dimension {d}**{L} exceeds cap {dim_cap}")
    n_out = povm.size**L
    if n_out * d**L > 5 * 10**7:
        raise CapExceeded(f"{n_out} block vectors of dim {d**L} exceed memory guard")
    idx = np.array(list(itertools.product(range(povm.size), repeat=L)), dtype=int)
    idx = idx.reshape(n_out, L)
    return BlockPovm(d, L, povm.parent_index[idx], vectors=product_vectors(povm.vectors, idx))


def _augmented_scores(kernel: FidelityKernel, ensemble: Ensemble) -> np.ndarray:
    """Score table with an extra trailing column so guess -1 reads f_min."""
    f = score_matrix(kernel, ensemble)
    return np.hstack([f, np.full((f.shape[0], 1), kernel.f_min)])


def _augmented_operators(
    kernel: FidelityKernel, ensemble: Ensemble, rho: DensityMatrix
) -> np.ndarray:
    ops = score_operators(ensemble, kernel).operators
    return np.concatenate([ops, kernel.f_min * rho.matrix[None]], axis=0)


def reduced_operator(block: BlockPovm, j: int, k: int, rho: DensityMatrix) -> np.ndarray:
    """Single-site restriction Tr_{l != k}[(rho on the other sites) A_j]."""
    if not 0 <= k < block.L:
        raise IndexOutOfRange(f"slot {k} of {block.L}")
    if not 0 <= j < block.size:
        raise IndexOutOfRange(f"outcome {j} of {block.size}")
    if j < block.n_dense:
        return site_reduced_matrix(block.elements[j], rho.matrix, k, block.d, block.L)
    j -= block.n_dense
    if j < block.n_vectors:
        return site_reduced_rank_one(
            block.vectors[j : j + 1], rho.matrix, k, block.d, block.L
        )[0]
    cols = block.complement_basis.T
    return site_reduced_rank_one(cols, rho.matrix, k, block.d, block.L).sum(axis=0)


def reduced_operator_sum(block: BlockPovm, k: int, rho: DensityMatrix) -> np.ndarray:
    """Sum of all reduced operators at slot k (identity for a complete POVM)."""
    if not 0 <= k < block.L:
        raise IndexOutOfRange(f"slot {k} of {block.L}")
    total = np.zeros((block.d, block.d), dtype=complex)
    if block.elements is not None:
        for j in range(block.n_dense):
            total += site_reduced_matrix(block.elements[j], rho.matrix, k, block.d, block.L)
    if block.vectors is not None:
        total += site_reduced_rank_one(block.vectors, rho.matrix, k, block.d, block.L).sum(
            axis=0
        )
    if block.has_complement:
        cols = block.complement_basis.T
        total += site_reduced_rank_one(cols, rho.matrix, k, block.d, block.L).sum(axis=0)
    return total


def _fidelity_reduced(block: BlockPovm, ensemble: Ensemble, kernel: FidelityKernel) -> float:
    rho = density_matrix(ensemble)
    ops_aug = _augmented_operators(kernel, ensemble, rho)
    total = 0.0
    for k in range(block.L):
        if block.elements is not None:
            for j in range(block.n_dense):
                red = site_reduced_matrix(block.elements[j], rho.matrix, k, block.d, block.L)
                total += float(np.real(np.trace(ops_aug[block.guess_seq[j, k]] @ red)))
        if block.vectors is not None:
            red = site_reduced_rank_one(block.vectors, rho.matrix, k, block.d, block.L)
            g = block.guess_seq[block.n_dense : block.n_dense + block.n_vectors, k]
            total += float(np.real(np.einsum("nab,nba->", ops_aug[g], red)))
        if block.has_complement:
            cols = block.complement_basis.T
            red = site_reduced_rank_one(cols, rho.matrix, k, block.d, block.L).sum(axis=0)
            total += float(np.real(np.trace(ops_aug[block.guess_seq[-1, k]] @ red)))
    return total / block.L


def _fidelity_direct(block: BlockPovm, ensemble: Ensemble, kernel: FidelityKernel) -> float:
    blk_ens = tensor_ensemble(ensemble, block.L, dim_cap=block.dim)
    f_aug = _augmented_scores(kernel, ensemble)
    digits = np.array(
        list(itertools.product(range(ensemble.size), repeat=block.L)), dtype=int
    )
    # slot_score[I, j] = mean_k f(i_k, g_{j,k})
    slot_score = f_aug[digits[:, None, :], block.guess_seq[None, :, :]].mean(axis=2)

    cond = np.zeros((blk_ens.size, block.size))
    if block.elements is not None:
        cond[:, : block.n_dense] = np.real(
            np.einsum(
                "Ia,jab,Ib->Ij",
                blk_ens.states.conj(),
                block.elements,
                blk_ens.states,
                optimize=True,
            )
        )
    if block.vectors is not None:
        lo = block.n_dense
        cond[:, lo : lo + block.n_vectors] = (
            np.abs(blk_ens.states.conj() @ block.vectors.T) ** 2
        )
    if block.has_complement:
        cond[:, -1] = np.sum(
            np.abs(blk_ens.states.conj() @ block.complement_basis) ** 2, axis=1
        )
    return float(blk_ens.probs @ (cond * slot_score).sum(axis=1))


def block_fidelity(
    block: BlockPovm,
    ensemble: Ensemble,
    kernel: FidelityKernel,
    method: str = "auto",
) -> float:
    """Per-slot average fidelity F_L of a block measurement.

    method "reduced" traces each outcome down to single sites against the
    ensemble's density matrix; "direct" sums the full block distribution
    (guarded by DIRECT_TERM_GUARD); "auto" uses the reduced path and, when
    the direct sum is affordable, cross-checks the two to 1e-9.
    """
    if ensemble.dim != block.d:
        raise ShapeMismatch(f"ensemble dim {ensemble.dim} vs block site dim {block.d}")
    n_terms = block.size * ensemble.size**block.L
    if method == "direct":
        if n_terms > DIRECT_TERM_GUARD:
            raise CapExceeded(f"direct sum has {n_terms} terms, guard {DIRECT_TERM_GUARD}")
        return _fidelity_direct(block, ensemble, kernel)
    reduced = _fidelity_reduced(block, ensemble, kernel)
    if method == "auto" and n_terms <= DIRECT_TERM_GUARD:
        direct = _fidelity_direct(block, ensemble, kernel)
        if abs(direct - reduced) > 1e-9:
            raise PovmLabError(
                f"block fidelity paths disagree: direct {direct!r} vs reduced {reduced!r}"
            )
    elif method not in ("auto", "reduced"):
        raise ShapeMismatch(f"unknown method {method!r}")
    return reduced
