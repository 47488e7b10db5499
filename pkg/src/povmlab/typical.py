"""Probable-subspace projector of an i.i.d. source and POVM restriction.

The projector keeps the product eigenvectors of rho^{tensor L'} whose
eigenvalue sits inside the two-sided typicality window
2^{-L'(H+eta')} <= lambda <= 2^{-L'(H-eta')}, H the source entropy in bits.
Boundary hits are kept (closed window).  Counting and weight bookkeeping
run over eigenvalue type classes, which stays exact far beyond the
dimensions that can be materialized.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .block import NO_GUESS, BlockPovm
from .ensemble import DEFAULT_DIM_CAP, DensityMatrix
from .exceptions import CapExceeded, ShapeMismatch
from .fidelity import FidelityKernel
from .linalg import EIGENVALUE_FLOOR, product_vectors

MAX_COUNTING_LENGTH = 64


@dataclass
class TypeClass:
    """All length-L' sequences sharing eigenvalue multiplicities `counts`."""

    counts: tuple[int, ...]
    size: int  # multinomial coefficient, exact
    log2_weight: float  # log2 of each member sequence's eigenvalue
    kept: bool

    @property
    def weight(self) -> float:
        """Total probability weight of the class."""
        return self.size * 2.0**self.log2_weight if np.isfinite(self.log2_weight) else 0.0


def _compositions(total: int, parts: int):
    """All tuples of `parts` nonnegative ints summing to `total`."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


def _multinomial(counts: tuple[int, ...]) -> int:
    total = sum(counts)
    out = 1
    for c in counts:
        out *= math.comb(total, c)
        total -= c
    return out


@dataclass
class TypicalProjector:
    """Projector onto the typicality window of rho^{tensor L'}.

    Exact counting fields are always available; the dense projector, the
    kept orthonormal basis, and the excluded basis materialize on demand
    while d**L_prime stays within dim_cap.
    """

    L_prime: int
    eta_prime: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    entropy: float
    window_lo: float
    window_hi: float
    classes: list[TypeClass]
    kept_dim: int
    kept_weight: float
    epsilon_prime: float
    dim_cap: int = DEFAULT_DIM_CAP
    _digits: np.ndarray | None = field(default=None, repr=False)
    _kept_mask: np.ndarray | None = field(default=None, repr=False)

    @property
    def d(self) -> int:
        return self.eigenvalues.size

    @property
    def dim(self) -> int:
        return self.d**self.L_prime

    def _materialize_masks(self) -> None:
        if self._kept_mask is not None:
            return
        if self.dim > self.dim_cap:
            raise CapExceeded(f"dimension {self.dim} exceeds cap {self.dim_cap}")
        digits = np.stack(
            np.unravel_index(np.arange(self.dim), (self.d,) * self.L_prime)
        ).T
        counts = (digits[:, :, None] == np.arange(self.d)).sum(axis=1)
        decision = {cl.counts: cl.kept for cl in self.classes}
        self._kept_mask = np.array([decision[tuple(c)] for c in counts])
        self._digits = digits

    def kept_basis(self) -> np.ndarray:
        """Orthonormal columns spanning the kept subspace."""
        self._materialize_masks()
        rows = product_vectors(self.eigenvectors.T, self._digits[self._kept_mask])
        return rows.T

    def excluded_basis(self) -> np.ndarray:
        self._materialize_masks()
        rows = product_vectors(self.eigenvectors.T, self._digits[~self._kept_mask])
        return rows.T

    def projector(self) -> np.ndarray:
        w = self.kept_basis()
        return w @ w.conj().T

    def dim_bounds(self) -> tuple[float, float]:
        """Sandwich (1 - eps') 2^{L'(H-eta')} <= kept_dim <= 2^{L'(H+eta')}."""
        lo = (1.0 - self.epsilon_prime) * 2.0 ** (
            self.L_prime * (self.entropy - self.eta_prime)
        )
        hi = 2.0 ** (self.L_prime * (self.entropy + self.eta_prime))
        return lo, hi


def typical_projector(
    rho: DensityMatrix,
    L_prime: int,
    eta_prime: float,
    dim_cap: int = DEFAULT_DIM_CAP,
) -> TypicalProjector:
    """Classify the eigenvalue type classes of rho^{tensor L'} against the
    typicality window and package the exact counts."""
    if not 1 <= L_prime <= MAX_COUNTING_LENGTH:
        raise ShapeMismatch(f"L_prime must be in [1, {MAX_COUNTING_LENGTH}]")
    lams = rho.eigenvalues
    log_lams = np.where(lams > EIGENVALUE_FLOOR, np.log2(np.maximum(lams, 1e-300)), -np.inf)
    h_bits = float(-(lams[lams > EIGENVALUE_FLOOR] @ log_lams[lams > EIGENVALUE_FLOOR]))
    lo = -L_prime * (h_bits + eta_prime)
    hi = -L_prime * (h_bits - eta_prime)

    classes = []
    kept_dim = 0
    kept_weight = 0.0
    excluded_weight = 0.0
    for counts in _compositions(L_prime, lams.size):
        logw = 0.0
        for c, ll in zip(counts, log_lams):
            if c:
                logw += c * ll
        size = _multinomial(counts)
        kept = bool(lo <= logw <= hi)
        cl = TypeClass(counts, size, logw, kept)
        classes.append(cl)
        if kept:
            kept_dim += size
            kept_weight += cl.weight
        else:
            excluded_weight += cl.weight
    if kept_dim == 0:
        warnings.warn(
            f"typicality window kept nothing at L'={L_prime}, eta'={eta_prime}"
        )
    return TypicalProjector(
        L_prime=L_prime,
        eta_prime=eta_prime,
        eigenvalues=lams,
        eigenvectors=rho.eigenvectors,
        entropy=h_bits,
        window_lo=lo,
        window_hi=hi,
        classes=classes,
        kept_dim=kept_dim,
        kept_weight=kept_weight,
        epsilon_prime=excluded_weight,
        dim_cap=dim_cap,
    )


def restrict_povm(
    block_povm: BlockPovm, pi: TypicalProjector, kernel: FidelityKernel
) -> BlockPovm:
    """Compress every outcome into the kept subspace and add the leftover
    projector as a final no-guess outcome (scored at the kernel's f_min).

    On the protocol's narrow-window instances the restriction costs at most
    epsilon' * (f_max - f_min) of fidelity.  The bound is not pointwise in
    (L', eta'): a wide window at a very short block length can lose more,
    because the score-range argument ignores sign cancellations between
    outcomes.  A zero leftover (full window) is dropped rather than stored.
    """
    if block_povm.d != pi.d or block_povm.L != pi.L_prime:
        raise ShapeMismatch(
            f"block on {block_povm.d}^{block_povm.L}, projector on {pi.d}^{pi.L_prime}"
        )
    if block_povm.has_complement:
        raise ShapeMismatch("restriction of an already-complemented POVM is not supported")
    if block_povm.guess_seq.size and block_povm.guess_seq.max() >= kernel.n_guesses:
        raise ShapeMismatch("block guesses outside kernel range")
    proj = pi.projector()
    elements = block_povm.elements
    if elements is not None:
        elements = proj @ elements @ proj
    vectors = block_povm.vectors
    if vectors is not None:
        vectors = vectors @ proj.T
    excluded = pi.excluded_basis()
    if excluded.shape[1] == 0:
        excluded = None
        guess = block_povm.guess_seq.copy()
    else:
        guess = np.vstack([block_povm.guess_seq, np.full((1, pi.L_prime), NO_GUESS)])
    if pi.kept_dim == 0:
        warnings.warn("restriction onto an empty subspace; all weight is unguessed")
    return BlockPovm(
        block_povm.d,
        block_povm.L,
        guess,
        elements=elements,
        vectors=vectors,
        complement_basis=excluded,
    )
