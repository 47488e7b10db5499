"""Input ensembles of pure states and their density matrices.

An ensemble is a finite list of unit vectors with prior probabilities.
Continuous sources (e.g. the uniform single-qubit ensemble) are represented
by finite i.i.d. samples drawn from a seeded stream, so every run is
reproducible from its master seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import CapExceeded, DimensionMismatch, InvalidProbability, InvalidState
from .linalg import EIGENVALUE_FLOOR, eigh_descending
from .mc import STAGE_ENSEMBLE_SAMPLING, rng_stream

NORM_TOL = 1e-9
PROB_TOL = 1e-9
DEFAULT_DIM_CAP = 4096

# Memory guard for enumerated tensor-power ensembles (complex entries).
_TENSOR_ENTRY_GUARD = 50_000_000


def pure_state(amplitudes, dim: int | None = None) -> np.ndarray:
    """Validate and return a state vector as a complex array."""
    v = np.asarray(amplitudes, dtype=complex).ravel()
    if v.size == 0:
        raise InvalidState("state vector is empty")
    if dim is not None and v.size != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {v.size}")
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > NORM_TOL:
        raise InvalidState(f"state norm {norm!r} deviates from 1 beyond {NORM_TOL}")
    return v


@dataclass
class Ensemble:
    """Pure states (rows of `states`) with prior probabilities."""

    states: np.ndarray
    probs: np.ndarray
    labels: list[str] | None = None

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=complex))
        self.probs = np.asarray(self.probs, dtype=float).ravel()
        if self.states.shape[0] != self.probs.size:
            raise DimensionMismatch(
                f"{self.states.shape[0]} states but {self.probs.size} probabilities"
            )
        norms = np.linalg.norm(self.states, axis=1)
        worst = float(np.max(np.abs(norms - 1.0)))
        if worst > NORM_TOL:
            raise InvalidState(f"state norms deviate from 1 by up to {worst:.3e}")
        if np.any(self.probs < -PROB_TOL):
            raise InvalidProbability("negative prior probability")
        total = float(self.probs.sum())
        if abs(total - 1.0) > PROB_TOL:
            raise InvalidProbability(f"priors sum to {total!r}, not 1")

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def size(self) -> int:
        return self.states.shape[0]


@dataclass
class DensityMatrix:
    """Hermitian PSD unit-trace matrix with a validated eigendecomposition.

    Eigenvalues are sorted in descending order and clamped to [0, 1];
    eigenvectors are the matching columns.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray = field(init=False)
    eigenvectors: np.ndarray = field(init=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"density matrix must be square, got {m.shape}")
        herm = float(np.linalg.norm(m - m.conj().T))
        if herm > 1e-9:
            raise InvalidState(f"matrix is not Hermitian (residual {herm:.3e})")
        tr = complex(np.trace(m))
        if abs(tr - 1.0) > 1e-9:
            raise InvalidState(f"trace {tr!r} deviates from 1")
        self.matrix = 0.5 * (m + m.conj().T)
        vals, vecs = eigh_descending(self.matrix)
        if float(vals[-1]) < -1e-10:
            raise InvalidState(f"negative eigenvalue {vals[-1]!r}")
        recon = float(np.linalg.norm(self.matrix - (vecs * vals) @ vecs.conj().T))
        if recon > 1e-9:
            raise InvalidState(f"eigendecomposition residual {recon:.3e}")
        self.eigenvalues = np.clip(vals, 0.0, 1.0)
        self.eigenvectors = vecs

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def density_matrix(ensemble: Ensemble) -> DensityMatrix:
    """Weighted sum of state projectors."""
    rho = np.einsum("i,ia,ib->ab", ensemble.probs, ensemble.states, ensemble.states.conj())
    return DensityMatrix(rho)


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """Entropy of the spectrum in bits; eigenvalues <= 1e-12 count as zero."""
    lam = rho.eigenvalues[rho.eigenvalues > EIGENVALUE_FLOOR]
    if lam.size == 0:
        return 0.0
    return float(-np.sum(lam * np.log2(lam)))


def tensor_ensemble(ensemble: Ensemble, L: int, dim_cap: int = DEFAULT_DIM_CAP) -> Ensemble:
    """Enumerated L-fold product ensemble: one entry per input index tuple.

    Tuples are ordered row-major over the single-copy indices, matching the
    ordering used for product measurements and product score tables.
    """
    if L < 1:
        raise DimensionMismatch("L must be at least 1")
    d, m = ensemble.dim, ensemble.size
    if d**L > dim_cap:
        raise CapExceeded(f"d^L = {d**L} exceeds cap {dim_cap}")
    if (m**L) * (d**L) > _TENSOR_ENTRY_GUARD:
        raise CapExceeded(f"{m**L} product states of dimension {d**L} exceed memory guard")
    states = ensemble.states
    probs = ensemble.probs
    for _ in range(L - 1):
        states = (states[:, None, :, None] * ensemble.states[None, :, None, :]).reshape(
            states.shape[0] * m, -1
        )
        probs = (probs[:, None] * ensemble.probs[None, :]).ravel()
    return Ensemble(states, probs)


def two_state_ensemble(alpha_sq: float = 0.75) -> Ensemble:
    """Equiprobable pair alpha|0> +/- beta|1> with alpha^2 = alpha_sq."""
    if not 0.0 < alpha_sq < 1.0:
        raise InvalidProbability("alpha_sq must lie strictly between 0 and 1")
    a = np.sqrt(alpha_sq)
    b = np.sqrt(1.0 - alpha_sq)
    return Ensemble(np.array([[a, b], [a, -b]]), np.array([0.5, 0.5]))


def trine_ensemble() -> Ensemble:
    """Three equiprobable real qubit states at mutual overlap 1/4."""
    s3 = np.sqrt(3.0) / 2.0
    states = np.array([[1.0, 0.0], [0.5, s3], [0.5, -s3]])
    return Ensemble(states, np.full(3, 1.0 / 3.0))


def orthogonal_pair_ensemble() -> Ensemble:
    """Equiprobable computational-basis pair on a qubit."""
    return Ensemble(np.eye(2), np.array([0.5, 0.5]))


def uniform_bloch_ensemble(n_samples: int, seed: int) -> Ensemble:
    """Finite i.i.d. sample of the uniform single-qubit pure-state ensemble."""
    if n_samples < 1:
        raise InvalidProbability("need at least one sample")
    rng = rng_stream(seed, STAGE_ENSEMBLE_SAMPLING)
    u = rng.uniform(-1.0, 1.0, size=n_samples)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n_samples)
    half = 0.5 * np.arccos(u)
    states = np.empty((n_samples, 2), dtype=complex)
    states[:, 0] = np.cos(half)
    states[:, 1] = np.exp(1j * phi) * np.sin(half)
    return Ensemble(states, np.full(n_samples, 1.0 / n_samples))
