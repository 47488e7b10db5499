import math

import numpy as np
import pytest

from povmlab import (
    ProtocolConfig,
    entropy_accounting,
    evaluate_sqrt_measurement,
    guess_score_kernel,
    run_protocol,
    sequence_kernel,
    trine_ensemble,
    two_state_ensemble,
)
from povmlab.exceptions import CapExceeded, ConfigError
from povmlab.linalg import binary_entropy_bits
from povmlab.pipeline import resolve_n
from conftest import trine_rank1, x_pair_rank1

# the trine density matrix sits one ulp off I/2, so an exactly-zero window
# would keep nothing; this slack keeps everything while adding 3e-9 bits
TRINE_ETA = 1e-9


def trine_config(**kw):
    tr = trine_ensemble()
    base = dict(
        ensemble=tr,
        kernel=guess_score_kernel(tr.states),
        L_prime=2,
        L=2,
        eta_prime=TRINE_ETA,
        eta=0.5,
        seeds=(0, 1, 2),
        base_rank1=trine_rank1(),
    )
    base.update(kw)
    return ProtocolConfig(**base)


def pair_config(**kw):
    ens = two_state_ensemble(0.9)
    base = dict(
        ensemble=ens,
        kernel=guess_score_kernel(ens.states),
        L_prime=8,
        L=2,
        eta_prime=0.15,
        eta=0.5,
        seeds=(0, 1),
        base_rank1=x_pair_rank1(),
    )
    base.update(kw)
    return ProtocolConfig(**base)


def test_config_validation():
    with pytest.raises(ConfigError):
        trine_config(L_prime=0)
    with pytest.raises(ConfigError):
        trine_config(L=0)
    with pytest.raises(ConfigError):
        trine_config(eta=-0.1)
    with pytest.raises(ConfigError):
        trine_config(N=0)
    with pytest.raises(ConfigError):
        trine_config(N="all")
    with pytest.raises(ConfigError):
        trine_config(seeds=())


def test_resolve_n_auto_and_explicit():
    assert resolve_n(37, 4, 0.25, 2, 0.5) == 37
    # 2^{L (2 log2 k + log2 rho_max + eta)} with k=4, rho_max=1/4: 2^{2*2.5}
    assert resolve_n("auto", 4, 0.25, 2, 0.5) == 32
    # example-1 kept space: k=8, rho_max=1/8 within one ulp -> 2^{2*3.5}
    assert resolve_n("auto", 8, 0.12500000000000003, 2, 0.5) == 128


def test_sequence_kernel_matches_explicit_loop():
    tr = trine_ensemble()
    k = guess_score_kernel(tr.states)
    sk = sequence_kernel(k, tr, 2)
    assert sk.kind == "matrix"
    f = 2.0 * np.eye(3) - 1.0
    for idx_i, (i0, i1) in enumerate([(a, b) for a in range(3) for b in range(3)]):
        for idx_j, (j0, j1) in enumerate([(a, b) for a in range(3) for b in range(3)]):
            want = 0.5 * (f[i0, j0] + f[i1, j1])
            assert sk.matrix[idx_i, idx_j] == want
    assert sk.f_min == -1.0 and sk.f_max == 1.0


def test_trine_pipeline_keeps_everything_and_matches_bare_run():
    cfg = trine_config()
    rep = run_protocol(cfg)
    assert rep.epsilon_prime == 0.0
    assert rep.i_eps == 0.0
    assert rep.kept_dim == 4
    assert rep.N == 32

    # with the filter wide open the protocol is a bare sampled run on
    # 2-slot sequence problems; reports must match field-for-field
    tr = trine_ensemble()
    sk = sequence_kernel(guess_score_kernel(tr.states), tr, 2)
    from povmlab import tensor_ensemble
    from povmlab.block import product_rank_one

    seq_ens = tensor_ensemble(tr, 2)
    seq_povm = product_rank_one(trine_rank1(), 2)
    from povmlab import RankOnePovm

    seq_rank1 = RankOnePovm(
        seq_povm.vectors, parent_index=np.arange(seq_povm.n_vectors)
    )
    bare = evaluate_sqrt_measurement(seq_rank1, seq_ens, sk, L=2, N=32, seeds=cfg.seeds)
    assert len(bare) == len(rep.sqrt_reports)
    for mine, ref in zip(rep.sqrt_reports, bare):
        assert mine.fidelity == ref.fidelity
        assert mine.entropy_per_slot == ref.entropy_per_slot
        assert mine.dim_hb == ref.dim_hb
        assert mine.c0_weight == ref.c0_weight
        assert np.array_equal(mine.alpha_sq, ref.alpha_sq)
        assert np.array_equal(mine.perp_norms, ref.perp_norms)


def test_total_fidelity_decomposition():
    rep = run_protocol(pair_config())
    eps, fmin = rep.epsilon_prime, rep.f_min
    for ft, sq in zip(rep.f_total, rep.sqrt_reports):
        assert abs(ft - ((1.0 - eps) * sq.fidelity + eps * fmin)) < 1e-12
    assert abs(rep.f_total_mean - np.mean(rep.f_total)) < 1e-12


def test_entropy_decomposition_and_bounds():
    rep = run_protocol(pair_config())
    assert abs(rep.i_eps - binary_entropy_bits(rep.epsilon_prime)) < 1e-15
    h_seq = np.mean([sq.entropy_per_slot * rep.L for sq in rep.sqrt_reports])
    assert abs(rep.entropy_bits_total - (h_seq + rep.L * rep.i_eps)) < 1e-12
    assert abs(rep.entropy_bound - (np.log2(rep.N) + rep.L * rep.i_eps)) < 1e-12
    assert abs(rep.counting_bound - (np.log2(rep.N + 1) + rep.L * rep.i_eps)) < 1e-12
    assert rep.entropy_bits_total <= rep.entropy_bound + 1e-9


def test_example_pair_protocol_accounting():
    rep = run_protocol(pair_config())
    assert rep.N == 128
    assert rep.kept_dim == 8
    acc = entropy_accounting(rep)
    per_state = rep.entropy_bits_total / (rep.L * rep.L_prime)
    assert abs(acc["per_state_bits"] - per_state) < 1e-15
    want_bound = (
        rep.source_entropy
        + 3.0 * rep.eta_prime
        + rep.eta / rep.L_prime
        + rep.i_eps / rep.L_prime
    )
    assert abs(acc["bound_per_state"] - want_bound) < 1e-12
    assert acc["per_state_bits"] <= acc["bound_per_state"] + 1e-9
    # the source needs under one bit per state and the protocol respects it
    assert acc["per_state_bits"] < 1.0


def test_deficit_shrinks_with_block_length():
    # seed-averaged gap to the reference nonincreasing within 2 stderr
    seeds = tuple(range(30))
    stats = []
    for L in (1, 2, 3):
        rep = run_protocol(trine_config(L=L, seeds=seeds))
        deficit = rep.kept_fidelity_reference - rep.f_total_mean
        stats.append((deficit, rep.f_total_stderr))
    for (d0, s0), (d1, s1) in zip(stats, stats[1:]):
        assert d1 <= d0 + 2.0 * math.hypot(s0, s1)


def test_cap_exceeded_suggests_feasible_length():
    with pytest.raises(CapExceeded, match="largest feasible L here is 6"):
        run_protocol(trine_config(L=7))


def test_empty_window_raises_with_guidance():
    ens = two_state_ensemble(0.9)
    cfg = ProtocolConfig(
        ensemble=ens,
        kernel=guess_score_kernel(ens.states),
        L_prime=4,
        L=2,
        eta_prime=0.15,
        eta=0.5,
        base_rank1=x_pair_rank1(),
    )
    with pytest.warns(UserWarning):
        with pytest.raises(CapExceeded, match="widen eta'"):
            run_protocol(cfg)
