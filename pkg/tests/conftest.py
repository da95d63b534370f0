import numpy as np
import pytest

from baikit import BanditInstance, PosteriorState, RewardFamily

# the two benchmark instances used throughout: a 5-arm Gaussian set with a
# near-tie among the trailing arms, and a 4-arm set with evenly spread means
MU_1 = (0.5, 0.9, 0.4, 0.45, 0.44999)
MU_2 = (1.0, 0.8, 0.75, 0.7)


@pytest.fixture(scope="session")
def mu1_instance() -> BanditInstance:
    return BanditInstance(RewardFamily.gaussian(), MU_1)


@pytest.fixture(scope="session")
def mu2_instance() -> BanditInstance:
    return BanditInstance(RewardFamily.gaussian(), MU_2)


def make_state(family: RewardFamily, counts, means) -> PosteriorState:
    """Posterior state frozen at given pull counts and empirical means."""
    counts = np.asarray(counts, dtype=np.int64)
    state = PosteriorState.fresh(family, counts.size)
    state.counts = counts.copy()
    sums = np.asarray(means, dtype=float) * counts
    if family.kind == "bernoulli":
        sums = np.round(sums)
        if np.any(sums > counts) or np.any(sums < 0):
            raise ValueError("bernoulli sums out of range")
        state.rounds = int(counts.sum())
    else:
        state.init_offset = counts.size
        state.rounds = int(counts.sum()) - counts.size
    state.sums = sums
    return state


@pytest.fixture
def frozen_state():
    return make_state
