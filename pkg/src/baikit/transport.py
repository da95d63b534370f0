"""Transportation costs between posterior arms and the GLR statistic."""
from __future__ import annotations

import numpy as np

from .bandits import GAUSSIAN, RewardFamily, kl_div
from .posterior import PosteriorState

__all__ = [
    "pooled_mean", "transportation_cost", "glr_statistic",
    "population_cost", "CostMatrixView",
]


def pooled_mean(state: PosteriorState, i: int, j: int) -> float:
    """Count-weighted average of two arms' empirical means."""
    state._check_arm(i)
    state._check_arm(j)
    ti, tj = int(state.counts[i]), int(state.counts[j])
    if ti + tj == 0:
        raise ValueError("pooled mean undefined with zero pulls on both arms")
    return (state.sums[i] + state.sums[j]) / (ti + tj)


def transportation_cost(state: PosteriorState, i: int, j: int) -> float:
    """Evidence against "arm j beats arm i" accumulated so far.

    Zero whenever arm j already looks at least as good as arm i; otherwise
    the weighted KL cost of moving both empirical means to their pooled
    value: T_i d(m_i; m_ij) + T_j d(m_j; m_ij).
    """
    state._check_arm(i)
    state._check_arm(j)
    if i == j:
        raise ValueError("arms must differ")
    ti, tj = int(state.counts[i]), int(state.counts[j])
    if ti < 1 or tj < 1:
        raise ValueError("transportation cost needs at least one pull per arm")
    mi = state.sums[i] / ti
    mj = state.sums[j] / tj
    if mj >= mi:
        return 0.0
    family = state.family
    if family.kind == GAUSSIAN:
        gap = mi - mj
        denom = 2.0 * family.sigma * family.sigma * (1.0 / ti + 1.0 / tj)
        return gap * gap / denom
    pooled = (state.sums[i] + state.sums[j]) / (ti + tj)
    return ti * kl_div(family, mi, pooled) + tj * kl_div(family, mj, pooled)


def glr_statistic(state: PosteriorState) -> float:
    """Generalized likelihood ratio statistic max_i min_{j != i} W(i, j).

    Any arm other than the empirical best has a zero inner minimum, so the
    outer maximum is attained at the empirical best arm and the whole
    statistic reduces to its smallest cost against the challengers.
    """
    if np.any(state.counts < 1):
        raise ValueError("GLR statistic needs at least one pull per arm")
    means = state.sums / state.counts
    best = int(np.argmax(means))
    return min(transportation_cost(state, best, j)
               for j in range(state.n_arms) if j != best)


def population_cost(family: RewardFamily, mu_star: float, mu_i: float,
                    w_star: float, w_i: float) -> float:
    """Large-deviation cost C_i of confusing two population means.

    min over x of w_star d(mu_star; x) + w_i d(mu_i; x); the minimizer is
    the weight-averaged mean, giving a closed form for both families.
    Either weight at zero makes the cost zero.
    """
    if mu_star <= mu_i:
        raise ValueError("requires mu_star > mu_i")
    if w_star < 0.0 or w_i < 0.0:
        raise ValueError("weights must be nonnegative")
    if w_star == 0.0 or w_i == 0.0:
        return 0.0
    if family.kind == GAUSSIAN:
        gap = mu_star - mu_i
        denom = 2.0 * family.sigma * family.sigma * (1.0 / w_star + 1.0 / w_i)
        return gap * gap / denom
    pooled = (w_star * mu_star + w_i * mu_i) / (w_star + w_i)
    return w_star * kl_div(family, mu_star, pooled) + w_i * kl_div(family, mu_i, pooled)


class CostMatrixView:
    """Lazy view of all pairwise transportation costs over a frozen state.

    Entries are computed on first access and cached; ``to_array`` fills the
    whole matrix (diagonal zero).
    """

    def __init__(self, state: PosteriorState):
        self._state = state
        k = state.n_arms
        self._cache = np.full((k, k), np.nan)
        np.fill_diagonal(self._cache, 0.0)

    @property
    def n_arms(self) -> int:
        return self._state.n_arms

    def cost(self, i: int, j: int) -> float:
        value = self._cache[i, j]
        if np.isnan(value):
            value = transportation_cost(self._state, i, j)
            self._cache[i, j] = value
        return float(value)

    def __getitem__(self, key) -> float:
        i, j = key
        return self.cost(i, j)

    def to_array(self) -> np.ndarray:
        k = self.n_arms
        for i in range(k):
            for j in range(k):
                if i != j:
                    self.cost(i, j)
        return self._cache.copy()
