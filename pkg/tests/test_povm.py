import numpy as np
import pytest

from povmlab import (
    Povm,
    RankOnePovm,
    mutual_information,
    outcome_distribution,
    prune_zero_outcomes,
    refine_to_rank_one,
    shannon_entropy,
    trine_ensemble,
    validate,
)
from povmlab.exceptions import DecompositionFailure, DimensionMismatch
from conftest import trine_rank1, x_pair_rank1

LOG2_3 = 1.584962500721156


def test_povm_validate_passes_on_exact_completeness():
    p = Povm(np.stack([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]).astype(complex))
    v = validate(p)
    assert v.ok
    assert v.completeness_residual < 1e-15
    assert v.min_eigenvalue >= 0.0


def test_povm_validate_reports_defects_without_raising():
    bad = Povm(np.stack([np.diag([1.2, 0.0]), np.diag([0.0, 1.0])]).astype(complex))
    v = validate(bad)
    assert not v.ok and v.completeness_residual > 0.1

    neg = Povm(np.stack([np.diag([1.5, 0.5]), np.diag([-0.5, 0.5])]).astype(complex))
    v = validate(neg)
    assert not v.ok and v.min_eigenvalue < -0.4


def test_rank_one_weights_sum_to_dim():
    r1 = trine_rank1()
    assert np.isclose(r1.weights.sum(), 2.0)
    assert np.allclose(np.linalg.norm(r1.directions, axis=1), 1.0)
    assert validate(r1).ok


def test_refine_to_rank_one_reassembles():
    # a rank-2 element plus its complement
    e0 = np.diag([0.9, 0.4]).astype(complex)
    e1 = np.eye(2, dtype=complex) - e0
    r1 = refine_to_rank_one(Povm(np.stack([e0, e1])))
    assert r1.size == 4
    assert np.all(r1.parent_index == [0, 0, 1, 1])
    back = np.zeros((2, 2), dtype=complex)
    for v, parent in zip(r1.vectors, r1.parent_index):
        if parent == 0:
            back += np.outer(v, v.conj())
    assert np.allclose(back, e0, atol=1e-12)


def test_refine_rejects_indefinite_elements():
    # a genuinely negative eigenvalue cannot be reassembled from kept pieces
    m = np.diag([0.6, -0.3]).astype(complex)
    with pytest.raises(DecompositionFailure):
        refine_to_rank_one(Povm(np.stack([m, np.eye(2) - m])))


def test_prune_zero_outcomes_relabels_guesses():
    elems = np.stack([
        np.diag([0.5, 0.0]), np.zeros((2, 2)), np.diag([0.5, 1.0]),
    ]).astype(complex)
    with pytest.warns(UserWarning):
        pruned = prune_zero_outcomes(Povm(elems, guess_index=[0, 1, 2]))
    assert pruned.size == 2
    assert list(pruned.guess_index) == [0, 2]


def test_outcome_distribution_rows_sum_to_one(trine):
    dist = outcome_distribution(trine_rank1(), trine)
    assert np.allclose(dist.conditional.sum(axis=1), 1.0)
    assert np.allclose(dist.probs, 1.0 / 3.0)
    # dense and rank-one paths agree
    dense = outcome_distribution(trine_rank1().as_povm(), trine)
    assert np.allclose(dense.conditional, dist.conditional, atol=1e-12)


def test_outcome_distribution_dimension_check(trine):
    with pytest.raises(DimensionMismatch):
        outcome_distribution(
            Povm(np.eye(3, dtype=complex)[None].repeat(1, axis=0) * 0 + np.eye(3)), trine
        )


def test_trine_entropy_and_mutual_information(trine):
    dist = outcome_distribution(trine_rank1(), trine)
    assert abs(shannon_entropy(dist) - LOG2_3) < 1e-12
    assert abs(mutual_information(dist) - 1.0 / 3.0) < 1e-9
    assert abs(mutual_information(trine_rank1(), trine) - 1.0 / 3.0) < 1e-9


def test_x_pair_perfectly_distinguishes_orthogonal_pair():
    from povmlab import orthogonal_pair_ensemble

    z = np.eye(2, dtype=complex)
    povm = Povm(np.stack([np.outer(v, v.conj()) for v in z]), guess_index=[0, 1])
    dist = outcome_distribution(povm, orthogonal_pair_ensemble())
    assert np.array_equal(dist.conditional, np.eye(2))
    assert shannon_entropy(dist) == 1.0
    assert np.isclose(mutual_information(dist), 1.0)


def test_x_pair_rank_one_is_complete():
    r1 = x_pair_rank1()
    total = sum(np.outer(v, v.conj()) for v in r1.vectors)
    assert np.allclose(total, np.eye(2), atol=1e-15)
