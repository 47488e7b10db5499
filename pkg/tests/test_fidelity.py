import numpy as np
import pytest

from povmlab import (
    RankOnePovm,
    certify,
    guess_score_kernel,
    matrix_kernel,
    mean_fidelity,
    optimize_povm,
    outcome_distribution,
    overlap_kernel,
    perturbation_gap,
    projective_grid_search,
    quartic_kernel,
    random_rank_one_povm,
    refine_to_rank_one,
    shannon_entropy,
    trine_ensemble,
    two_state_ensemble,
    validate,
)
from povmlab.exceptions import AlignmentError, NonConvergence
from povmlab.fidelity import score_matrix, score_operators
from povmlab.mc import rng_stream
from conftest import RT2, trine_rank1, x_pair_rank1

SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)

# best projective-pair score on the trine, frozen from the 721-point grid
TRINE_GRID_BEST = 0.24401693585629247


def test_kernel_tables_and_extremes():
    tr = trine_ensemble()
    k = overlap_kernel(tr.states)
    f = score_matrix(k, tr)
    assert np.allclose(np.diag(f), 1.0)
    off = f[~np.eye(3, dtype=bool)]
    assert np.allclose(off, 0.25, atol=1e-12)
    # f_min/f_max are the kernel's a-priori range, not the realized table
    assert k.f_min == 0.0 and k.f_max == 1.0

    k4 = quartic_kernel(tr.states)
    assert np.allclose(score_matrix(k4, tr), f**2, atol=1e-12)

    kg = guess_score_kernel(tr.states)
    fg = score_matrix(kg, tr)
    assert np.array_equal(fg, 2.0 * np.eye(3) - 1.0)
    assert kg.f_min == -1.0 and kg.f_max == 1.0

    km = matrix_kernel(np.array([[0.0, 1.0], [2.0, 3.0]]))
    assert km.f_min == 0.0 and km.f_max == 3.0


def test_score_operators_for_symmetric_pair_are_pm_sigma_x():
    # the +-1 scored pair a|0> +- b|1> has score operators +- ab sigma_x
    ens = two_state_ensemble(0.9)
    ops = score_operators(ens, guess_score_kernel(ens.states)).operators
    ab = np.sqrt(0.9) * np.sqrt(0.1)
    assert np.abs(ops[0] - ab * SX).max() < 1e-15
    assert np.abs(ops[1] + ab * SX).max() < 1e-15


def test_mean_fidelity_of_x_basis_pair_is_2ab():
    ens = two_state_ensemble(0.9)
    k = guess_score_kernel(ens.states)
    f = mean_fidelity(x_pair_rank1(), ens, k)
    assert abs(f - 0.6) < 1e-12


def test_certificate_exact_at_the_x_basis_optimum():
    ens = two_state_ensemble(0.9)
    cert = certify(x_pair_rank1(), ens, guess_score_kernel(ens.states))
    ab = 0.3
    assert np.abs(cert.lambda_hat - ab * np.eye(2)).max() < 1e-14
    assert cert.skew_norm == 0.0
    assert cert.stationarity_residual < 1e-12
    assert cert.dual_min_eig >= -1e-12
    assert abs(cert.fidelity - 2 * ab) < 1e-12
    assert abs(cert.gap_norm - 2 * ab) < 1e-12
    assert cert.certified


def test_certificate_flags_the_wrong_basis():
    # measuring along z on the +-x-symmetric pair is maximally non-stationary
    ens = two_state_ensemble(0.9)
    z = RankOnePovm(np.eye(2, dtype=complex), parent_index=[0, 1])
    cert = certify(z, ens, guess_score_kernel(ens.states))
    assert cert.stationarity_residual == 0.29999999999999993
    assert np.isclose(cert.skew_norm, 0.3 * np.sqrt(2.0), atol=1e-15)
    assert cert.fidelity == 0.0
    assert not cert.certified


@pytest.mark.parametrize("alpha2", [0.5, 0.75, 0.9])
def test_optimizer_reaches_the_pair_optimum(alpha2):
    ens = two_state_ensemble(alpha2)
    k = guess_score_kernel(ens.states)
    povm, cert = optimize_povm(ens, k, seed=0)
    ab2 = 2.0 * np.sqrt(alpha2) * np.sqrt(1.0 - alpha2)
    assert abs(cert.fidelity - ab2) < 1e-6
    assert cert.certified
    r1 = refine_to_rank_one(povm)
    # both outcomes lie along the sigma_x eigenvectors
    x_axes = np.array([[RT2, RT2], [RT2, -RT2]])
    for v in r1.directions:
        align = np.abs(x_axes @ v.conj())
        assert align.max() > 1.0 - 1e-5


def test_optimizer_output_entropy_is_one_bit():
    ens = two_state_ensemble(0.9)
    povm, _ = optimize_povm(ens, guess_score_kernel(ens.states), seed=0)
    h = shannon_entropy(outcome_distribution(povm, ens))
    assert abs(h - 1.0) < 1e-9


def test_optimizer_nonconvergence_carries_best_iterate():
    ens = two_state_ensemble(0.9)
    k = guess_score_kernel(ens.states)
    with pytest.raises(NonConvergence) as exc_info:
        optimize_povm(ens, k, max_iter=1, tol=1e-12, restarts=1, seed=0)
    exc = exc_info.value
    assert exc.best_povm is not None
    assert exc.best_certificate is not None
    assert validate(exc.best_povm).ok
    assert exc.best_certificate.fidelity <= 0.6 + 1e-9


def test_perturbation_gap_is_tight_for_rotations():
    ens = two_state_ensemble(0.9)
    k = guess_score_kernel(ens.states)
    opt = x_pair_rank1()
    theta = 0.07
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    rotated = RankOnePovm(opt.vectors @ rot.T, parent_index=[0, 1])
    rep = perturbation_gap(rotated, opt, ens, k)
    # rotating both outcomes by theta saturates the leakage bound
    assert rep["bound_holds"]
    assert abs(rep["gap"] - rep["bound"]) < 1e-12
    assert abs(rep["z_trace_sum"] - 2.0 * np.sin(theta) ** 2) < 1e-12
    assert abs(rep["constant"] - 0.6) < 1e-12


def test_perturbation_gap_identity_mix():
    ens = two_state_ensemble(0.9)
    k = guess_score_kernel(ens.states)
    opt = x_pair_rank1()
    s = 0.2
    elems = np.stack(
        [
            (1 - s) * np.outer(v, v.conj()) + s * np.eye(2) / 2.0
            for v in opt.vectors
        ]
    )
    from povmlab import Povm

    mixed = Povm(elems, guess_index=[0, 1])
    rep = perturbation_gap(mixed, opt, ens, k)
    assert rep["bound_holds"]
    assert abs(rep["z_trace_sum"] - s) < 1e-12
    assert rep["gap"] <= rep["bound"] + 1e-12


def test_perturbation_gap_alignment_errors():
    ens = two_state_ensemble(0.9)
    k = guess_score_kernel(ens.states)
    with pytest.raises(AlignmentError):
        perturbation_gap(trine_rank1(), x_pair_rank1(), ens, k)
    swapped = RankOnePovm(x_pair_rank1().vectors, parent_index=[1, 0])
    with pytest.raises(AlignmentError):
        perturbation_gap(swapped, x_pair_rank1(), ens, k)


def test_projective_grid_matches_pair_optimum():
    # the pair optimum is projective, so the grid must find it
    ens = two_state_ensemble(0.9)
    best, povm = projective_grid_search(ens, guess_score_kernel(ens.states))
    assert abs(best - 0.6) < 1e-9
    assert validate(povm).ok


def test_projective_grid_cannot_reach_the_trine_optimum():
    tr = trine_ensemble()
    best, povm = projective_grid_search(tr, guess_score_kernel(tr.states))
    assert abs(best - TRINE_GRID_BEST) < 1e-9
    assert best < 1.0 / 3.0 - 0.05
    assert validate(povm).ok


@pytest.mark.parametrize("dim,n", [(2, 2), (2, 4), (3, 2), (4, 9)])
def test_random_rank_one_povm_is_complete(dim, n):
    povm = random_rank_one_povm(dim, n, rng_stream(3, 11, 0))
    v = validate(povm)
    assert v.ok and v.completeness_residual < 1e-10
