"""POVMs, rank-one refinements, and outcome statistics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .ensemble import Ensemble
from .exceptions import (
    DecompositionFailure,
    DimensionMismatch,
    InvalidProbability,
    ShapeMismatch,
)
from .linalg import entropy_bits

COMPLETENESS_TOL = 1e-8
HERMITICITY_TOL = 1e-9
EIG_NEG_TOL = 1e-10

# Rank-one pieces below this relative eigenvalue are discarded on refinement.
REFINE_REL_CUTOFF = 1e-12

# Outcomes with less trace than this are dropped when pruning.
ZERO_WEIGHT_TRACE = 1e-10


@dataclass
class Povm:
    """POVM given by explicit element matrices.

    guess_index maps each outcome to a kernel guess; None means the identity
    map (outcome j is the claim "guess j"), which is the common case.  It
    becomes non-trivial after zero-weight outcomes are pruned.
    """

    elements: np.ndarray
    labels: list[str] | None = None
    guess_index: np.ndarray | None = None

    def __post_init__(self):
        self.elements = np.asarray(self.elements, dtype=complex)
        if self.elements.ndim != 3 or self.elements.shape[1] != self.elements.shape[2]:
            raise ShapeMismatch(f"elements must be (M, d, d), got {self.elements.shape}")
        if self.labels is not None and len(self.labels) != self.size:
            raise ShapeMismatch("one label per outcome required")
        if self.guess_index is not None:
            self.guess_index = np.asarray(self.guess_index, dtype=int).ravel()
            if self.guess_index.size != self.size:
                raise ShapeMismatch("one guess index per outcome required")

    @property
    def size(self) -> int:
        return self.elements.shape[0]

    @property
    def dim(self) -> int:
        return self.elements.shape[1]


@dataclass
class RankOnePovm:
    """Rank-one POVM: outcome j is |b_j><b_j| for the unnormalized row b_j.

    weights are the squared norms beta_j (summing to the dimension for a
    complete POVM); parent_index records which coarse outcome each piece
    refines, which is also its kernel guess.
    """

    vectors: np.ndarray
    parent_index: np.ndarray | None = None
    labels: list[str] | None = None
    weights: np.ndarray = field(init=False)

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=complex))
        if self.parent_index is None:
            self.parent_index = np.arange(self.size)
        else:
            self.parent_index = np.asarray(self.parent_index, dtype=int).ravel()
            if self.parent_index.size != self.size:
                raise ShapeMismatch("one parent index per element required")
        self.weights = np.linalg.norm(self.vectors, axis=1) ** 2

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def directions(self) -> np.ndarray:
        """Unit vectors; zero-weight rows are returned as-is."""
        norms = np.sqrt(self.weights)
        safe = np.where(norms > 0, norms, 1.0)
        return self.vectors / safe[:, None]

    def as_povm(self) -> Povm:
        elems = np.einsum("ja,jb->jab", self.vectors, self.vectors.conj())
        return Povm(elems, labels=self.labels, guess_index=self.parent_index.copy())


@dataclass
class PovmValidation:
    completeness_residual: float
    max_hermiticity_residual: float
    min_eigenvalue: float
    ok: bool
    messages: list[str]


def validate(povm: Povm | RankOnePovm) -> PovmValidation:
    """Structured validity report; never raises on bad input."""
    if isinstance(povm, RankOnePovm):
        elements = povm.as_povm().elements
    else:
        elements = povm.elements
    d = elements.shape[1]
    total = elements.sum(axis=0)
    completeness = float(np.linalg.norm(total - np.eye(d)))
    herm = float(max(np.linalg.norm(e - e.conj().T) for e in elements))
    min_eig = float(min(np.min(np.linalg.eigvalsh(0.5 * (e + e.conj().T))) for e in elements))
    messages = []
    if completeness > COMPLETENESS_TOL:
        messages.append(f"completeness residual {completeness:.3e} exceeds {COMPLETENESS_TOL}")
    if herm > HERMITICITY_TOL:
        messages.append(f"hermiticity residual {herm:.3e} exceeds {HERMITICITY_TOL}")
    if min_eig < -EIG_NEG_TOL:
        messages.append(f"eigenvalue {min_eig:.3e} below -{EIG_NEG_TOL}")
    return PovmValidation(completeness, herm, min_eig, not messages, messages)


def refine_to_rank_one(povm: Povm) -> RankOnePovm:
    """Split every element into rank-one pieces via its eigendecomposition.

    Pieces with eigenvalue at most REFINE_REL_CUTOFF times the element's
    largest are discarded; elements that are numerically zero contribute no
    pieces and are reported with a warning.
    """
    vectors = []
    parents = []
    labels = [] if povm.labels is not None else None
    for j in range(povm.size):
        elem = 0.5 * (povm.elements[j] + povm.elements[j].conj().T)
        vals, vecs = np.linalg.eigh(elem)
        top = float(vals[-1])
        if top <= ZERO_WEIGHT_TRACE / povm.dim:
            warnings.warn(f"outcome {j} is numerically zero and produced no rank-one piece")
            continue
        keep = vals > REFINE_REL_CUTOFF * top
        reassembled = (vecs[:, keep] * vals[keep]) @ vecs[:, keep].conj().T
        if np.linalg.norm(reassembled - elem) > 1e-8:
            raise DecompositionFailure(f"outcome {j} reassembly residual exceeds 1e-8")
        for lam, col in zip(vals[keep], vecs[:, keep].T):
            vectors.append(np.sqrt(lam) * col)
            parents.append(j if povm.guess_index is None else int(povm.guess_index[j]))
            if labels is not None:
                labels.append(povm.labels[j])
    return RankOnePovm(np.array(vectors), np.array(parents, dtype=int), labels=labels)


def prune_zero_outcomes(povm: Povm) -> Povm:
    """Drop outcomes with trace below ZERO_WEIGHT_TRACE, recording guesses."""
    traces = np.real(np.trace(povm.elements, axis1=1, axis2=2))
    keep = traces >= ZERO_WEIGHT_TRACE
    if np.all(keep):
        return povm
    dropped = np.flatnonzero(~keep)
    warnings.warn(f"dropped zero-weight outcomes {dropped.tolist()}")
    guess = povm.guess_index if povm.guess_index is not None else np.arange(povm.size)
    labels = [povm.labels[i] for i in np.flatnonzero(keep)] if povm.labels else None
    return Povm(povm.elements[keep], labels=labels, guess_index=guess[keep])


@dataclass
class OutcomeDistribution:
    """Joint statistics of an ensemble measured by a POVM."""

    input_probs: np.ndarray
    conditional: np.ndarray  # rows p(j | i)
    probs: np.ndarray = field(init=False)  # marginal outcome probabilities

    def __post_init__(self):
        self.input_probs = np.asarray(self.input_probs, dtype=float).ravel()
        self.conditional = np.asarray(self.conditional, dtype=float)
        if self.conditional.shape[0] != self.input_probs.size:
            raise ShapeMismatch("one conditional row per input state required")
        row_err = float(np.max(np.abs(self.conditional.sum(axis=1) - 1.0)))
        if row_err > 1e-9:
            raise InvalidProbability(f"conditional rows sum off by {row_err:.3e}")
        self.probs = self.input_probs @ self.conditional


def outcome_distribution(povm: Povm | RankOnePovm, ensemble: Ensemble) -> OutcomeDistribution:
    """Conditional outcome probabilities <psi_i| a_j |psi_i>."""
    if povm.dim != ensemble.dim:
        raise DimensionMismatch(f"POVM dim {povm.dim} vs ensemble dim {ensemble.dim}")
    if isinstance(povm, RankOnePovm):
        cond = np.abs(ensemble.states.conj() @ povm.vectors.T) ** 2
    else:
        cond = np.real(
            np.einsum(
                "ia,jab,ib->ij",
                ensemble.states.conj(),
                povm.elements,
                ensemble.states,
                optimize=True,
            )
        )
    low = float(cond.min())
    if low < -EIG_NEG_TOL:
        raise InvalidProbability(f"conditional probability {low:.3e} below tolerance")
    cond = np.clip(cond, 0.0, None)
    return OutcomeDistribution(ensemble.probs.copy(), cond)


def shannon_entropy(dist: OutcomeDistribution | np.ndarray) -> float:
    """Entropy of the outcome marginal, in bits."""
    probs = dist.probs if isinstance(dist, OutcomeDistribution) else dist
    return entropy_bits(probs)


def mutual_information(
    dist: OutcomeDistribution | Povm | RankOnePovm, ensemble: Ensemble | None = None
) -> float:
    """I(input; outcome) in bits; accepts a distribution or (povm, ensemble)."""
    if not isinstance(dist, OutcomeDistribution):
        if ensemble is None:
            raise ShapeMismatch("ensemble required when passing a POVM")
        dist = outcome_distribution(dist, ensemble)
    h_in = entropy_bits(dist.input_probs)
    joint = dist.input_probs[:, None] * dist.conditional
    h_cond = 0.0
    for j in range(dist.probs.size):
        pj = dist.probs[j]
        if pj <= 1e-15:
            continue
        h_cond += pj * entropy_bits(joint[:, j] / pj)
    return h_in - h_cond
