"""Dense linear-algebra helpers used throughout the package.

Everything here works on plain numpy arrays.  Multi-slot (tensor-power)
operations address a vector of length d**L as L sites of local dimension d,
site 0 being the most significant factor in kron order.
"""

from __future__ import annotations

import math

import numpy as np

from .exceptions import DecompositionFailure, ShapeMismatch

# Eigenvalues below this (relative) scale are treated as exact zeros when
# computing entropies or pseudo-inverses of density-like operators.
EIGENVALUE_FLOOR = 1e-12

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def hermitize(m: np.ndarray) -> np.ndarray:
    """Hermitian part over the trailing two axes (works on stacks)."""
    return 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))


def opnorm_hermitian(m: np.ndarray) -> float:
    """Operator (spectral) norm of a Hermitian matrix."""
    if m.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(hermitize(m)))))


def eigh_descending(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian eigendecomposition with eigenvalues sorted high to low."""
    vals, vecs = np.linalg.eigh(m)
    return vals[::-1].copy(), vecs[:, ::-1].copy()


def psd_inverse_sqrt(
    m: np.ndarray, rel_cutoff: float = 1e-10
) -> tuple[np.ndarray, np.ndarray, int, bool]:
    """Pseudo-inverse square root of a PSD matrix.

    Eigenvalues at or below rel_cutoff times the largest are dropped.
    Returns (m^{-1/2} on the kept span, projector onto the kept span,
    rank, ambiguous) where ambiguous is True when the spectral gap around
    the cutoff is smaller than a factor of 10, i.e. the numerical rank is
    not clear-cut.
    """
    vals, vecs = np.linalg.eigh(hermitize(m))
    top = float(vals[-1]) if vals.size else 0.0
    if top <= 0.0:
        raise DecompositionFailure("matrix has no positive eigenvalues")
    keep = vals > rel_cutoff * top
    rank = int(np.count_nonzero(keep))
    ambiguous = False
    if rank < vals.size:
        largest_dropped = float(np.max(vals[~keep]))
        smallest_kept = float(np.min(vals[keep]))
        if largest_dropped > 0.0 and smallest_kept / largest_dropped < 10.0:
            ambiguous = True
    vk = vecs[:, keep]
    inv_sqrt = (vk * vals[keep] ** -0.5) @ vk.conj().T
    projector = vk @ vk.conj().T
    return inv_sqrt, projector, rank, ambiguous


def entropy_bits(probs: np.ndarray, floor: float = EIGENVALUE_FLOOR) -> float:
    """Shannon entropy in bits; values at or below floor count as exact zeros."""
    p = np.asarray(probs, dtype=float).ravel()
    p = p[p > floor]
    if p.size == 0:
        return 0.0
    return float(-np.sum(p * np.log2(p)))


def binary_entropy_bits(eps: float) -> float:
    return entropy_bits(np.array([eps, 1.0 - eps]))


def kron_all(mats: list[np.ndarray]) -> np.ndarray:
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def kron_power(m: np.ndarray, n: int) -> np.ndarray:
    out = m
    for _ in range(n - 1):
        out = np.kron(out, m)
    return out


def product_vectors(factors: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Batched kron products.

    factors has shape (K, d); indices has shape (N, L).  Row n of the result
    is factors[indices[n,0]] kron ... kron factors[indices[n,L-1]], so the
    result has shape (N, d**L).
    """
    n_rows, L = indices.shape
    if n_rows == 0:
        return np.zeros((0, factors.shape[1] ** L), dtype=factors.dtype)
    out = factors[indices[:, 0]]
    for k in range(1, L):
        nxt = factors[indices[:, k]]
        out = (out[:, :, None] * nxt[:, None, :]).reshape(n_rows, -1)
    return out


def apply_site(vecs: np.ndarray, op: np.ndarray, site: int, d: int, L: int) -> np.ndarray:
    """Apply a local (d, d) operator to one site of batched d**L vectors.

    vecs has shape (..., d**L); the result has the same shape.
    """
    dim = d**L
    if vecs.shape[-1] != dim:
        raise ShapeMismatch(f"expected trailing dimension {dim}, got {vecs.shape[-1]}")
    lead = vecs.shape[:-1]
    pre = d**site
    post = d ** (L - 1 - site)
    v = vecs.reshape(-1, pre, d, post)
    out = np.einsum("ab,npbq->npaq", op, v)
    return out.reshape(lead + (dim,))


def apply_all_sites(vecs: np.ndarray, op: np.ndarray, d: int, L: int) -> np.ndarray:
    out = vecs
    for site in range(L):
        out = apply_site(out, op, site, d, L)
    return out


def apply_sites_except(
    vecs: np.ndarray, op: np.ndarray, skip: int, d: int, L: int
) -> np.ndarray:
    out = vecs
    for site in range(L):
        if site != skip:
            out = apply_site(out, op, site, d, L)
    return out


def expectation_product_state(vecs: np.ndarray, rho: np.ndarray, d: int, L: int) -> np.ndarray:
    """<v| rho^{kron L} |v> for each row of vecs, returned as a real array."""
    t = apply_all_sites(vecs, rho, d, L)
    return np.real(np.einsum("...a,...a->...", vecs.conj(), t))


def site_reduced_rank_one(
    vecs: np.ndarray, rho: np.ndarray, site: int, d: int, L: int
) -> np.ndarray:
    """Reduced operators of rank-one projectors |v><v| at one site.

    For each row v the remaining L-1 sites are traced out against rho,
    giving Tr_{l != site}[(rho^{kron(L-1)} tensor I_site) |v><v|].
    Returns an array of shape (N, d, d).
    """
    n_rows = vecs.shape[0]
    w = apply_sites_except(vecs, rho, site, d, L)

    def _site_first(batch: np.ndarray) -> np.ndarray:
        t = batch.reshape((n_rows,) + (d,) * L)
        t = np.moveaxis(t, site + 1, 1)
        return t.reshape(n_rows, d, -1)

    return np.einsum("nar,nbr->nab", _site_first(w), _site_first(vecs).conj())


def site_reduced_matrix(
    mat: np.ndarray, rho: np.ndarray, site: int, d: int, L: int
) -> np.ndarray:
    """Reduced operator of a dense matrix on (C^d)^{kron L} at one site.

    Computes Tr_{l != site}[(rho on every other site) @ mat] as a (d, d)
    matrix.  Row indices of mat contract with rho's column index.
    """
    if 2 * L > len(_LETTERS):
        raise ShapeMismatch(f"site_reduced_matrix supports at most {len(_LETTERS)//2} sites")
    t = mat.reshape((d,) * (2 * L))
    rows = list(_LETTERS[:L])
    cols = list(_LETTERS[L : 2 * L])
    operands = [t]
    subs = ["".join(rows + cols)]
    for l in range(L):
        if l == site:
            continue
        operands.append(rho)
        subs.append(cols[l] + rows[l])
    out_sub = rows[site] + cols[site]
    return np.einsum(",".join(subs) + "->" + out_sub, *operands, optimize=True)


def haar_state(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def haar_states(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    v = rng.standard_normal((n, d)) + 1j * rng.standard_normal((n, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def ceil_pow2_exponent(exponent: float) -> int:
    """ceil(2**exponent) as an exact integer, valid for huge exponents.

    Exponents within 1e-9 of an integer are snapped to it first: counting
    thresholds routinely arrive through eigendecompositions, and one ulp of
    slop should not bump the budget to the next integer.
    """
    if exponent <= 0:
        return 1
    nearest = round(exponent)
    if abs(exponent - nearest) < 1e-9:
        return 1 << nearest
    if exponent < 50:
        return math.ceil(2.0**exponent)
    whole = math.floor(exponent)
    frac = exponent - whole
    return math.ceil(2.0**frac) << whole
