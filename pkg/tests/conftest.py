import numpy as np
import pytest

from povmlab import (
    Ensemble,
    RankOnePovm,
    guess_score_kernel,
    trine_ensemble,
    two_state_ensemble,
)

RT2 = 1.0 / np.sqrt(2.0)


def x_pair_rank1() -> RankOnePovm:
    """Exact optimal measurement for the two-state problem: the x basis."""
    vectors = np.array([[RT2, RT2], [RT2, -RT2]], dtype=complex)
    return RankOnePovm(vectors, parent_index=[0, 1])


def trine_rank1() -> RankOnePovm:
    """Exact optimal trine measurement: 2/3-weighted trine projectors."""
    states = trine_ensemble().states
    return RankOnePovm(np.sqrt(2.0 / 3.0) * states, parent_index=[0, 1, 2])


@pytest.fixture
def trine():
    return trine_ensemble()


@pytest.fixture
def trine_kernel(trine):
    return guess_score_kernel(trine.states)


@pytest.fixture
def pair09():
    return two_state_ensemble(0.9)


@pytest.fixture
def pair09_kernel(pair09):
    return guess_score_kernel(pair09.states)
