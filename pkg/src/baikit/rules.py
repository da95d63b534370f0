"""Sampling rules: which arm to pull at each round.

All top-two rules share the same skeleton: pick a leader, keep it with
probability beta, otherwise pick a challenger. They differ in how the two
are chosen. Every argmax/argmin tie is broken uniformly at random with the
round's random stream.

The Thompson challenger search (resample the posterior until the argmax
changes) is implemented in three regimes that share one distribution: a
literal batched loop while the dethroning probability is not tiny, an exact
geometric/categorical shortcut driven by log-space posterior argmax
probabilities once it drops below 1e-2, and a certified cap exhaustion once
an in-house tail bound proves that even ``resample_cap`` draws succeed with
probability below 1e-12.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .allocation import AllocationResult, optimal_allocation
from .bandits import GAUSSIAN, RngStream
from .posterior import (PosteriorState, beta_tail_bound, gaussian_tail_bounds,
                        log_optimal_action_probabilities, sample_theta)
from .transport import transportation_cost

__all__ = [
    "SelectionTrace", "SamplingRule", "TTTS", "T3C", "TTPS",
    "BestChallenger", "DTracking", "UniformRule", "selection_probabilities",
    "make_rule", "RULE_NAMES",
]

# challenger-search regime thresholds, see module docstring
_SHORTCUT_BELOW = 1e-2
_CERTIFIED_SKIP = 1e-12


@dataclass
class SelectionTrace:
    """What a rule decided this round and why."""

    arm: int
    role: str                      # leader / challenger / forced / tracking / round-robin
    resamples: int = 0
    tie_break_size: int = 1
    resample_cap_hit: bool = False


def _tie_break(indices: np.ndarray, rng: RngStream) -> tuple:
    if indices.size == 1:
        return int(indices[0]), 1
    pick = int(indices[int(rng.gen.integers(indices.size))])
    return pick, int(indices.size)


def _argmax_tie(values: np.ndarray, rng: RngStream) -> tuple:
    values = np.asarray(values)
    return _tie_break(np.flatnonzero(values == values.max()), rng)


class SamplingRule:
    """Base interface; subclasses implement :meth:`select_arm`."""

    name = "base"

    def fresh(self) -> "SamplingRule":
        """A new instance with the same hyperparameters and empty scratch."""
        raise NotImplementedError

    def select_arm(self, state: PosteriorState, rng: RngStream,
                   a=None) -> tuple:
        """Pick the arm to pull; returns ``(arm, SelectionTrace)``."""
        raise NotImplementedError


def _transport_challenger(state: PosteriorState, leader: int,
                          rng: RngStream) -> tuple:
    """Arm with the smallest transportation cost against the leader.

    Pairs involving an unpulled arm carry no evidence yet and are treated
    as zero-cost challengers.
    """
    k = state.n_arms
    costs = np.empty(k)
    costs[leader] = np.inf
    for j in range(k):
        if j == leader:
            continue
        if state.counts[j] < 1 or state.counts[leader] < 1:
            costs[j] = 0.0
        else:
            costs[j] = transportation_cost(state, leader, j)
    return _tie_break(np.flatnonzero(costs == costs.min()), rng)


def _dethrone_probability_bound(state: PosteriorState, leader: int) -> float:
    """Certified upper bound on P[posterior argmax != leader], or inf.

    Boole's inequality over pairwise tail bounds. Returns inf when the
    bounds' preconditions fail (e.g. the leader trails some arm
    empirically), meaning no certificate is available.
    """
    total = 0.0
    for j in range(state.n_arms):
        if j == leader:
            continue
        try:
            if state.family.kind == GAUSSIAN:
                total += gaussian_tail_bounds(state, j, leader).upper
            else:
                a, b = int(state.sums[j]) + 1, int(state.counts[j] - state.sums[j]) + 1
                c, d = int(state.sums[leader]) + 1, int(state.counts[leader] - state.sums[leader]) + 1
                total += beta_tail_bound(a, b, c, d).bound
        except ValueError:
            return math.inf
    return total


@dataclass
class TTTS(SamplingRule):
    """Top-two Thompson sampling.

    The leader is the argmax of one posterior draw; the challenger is the
    argmax of fresh posterior draws repeated until it differs from the
    leader, capped at ``resample_cap`` redraws per round. On cap exhaustion
    the transportation-cost challenger is used instead and the trace is
    flagged.
    """

    beta: float = 0.5
    resample_cap: int = 1_000_000

    name = "ttts"

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie strictly between 0 and 1")
        if self.resample_cap < 1:
            raise ValueError("resample_cap must be positive")

    def fresh(self) -> "TTTS":
        return TTTS(beta=self.beta, resample_cap=self.resample_cap)

    def _resample_challenger(self, state: PosteriorState, leader: int,
                             rng: RngStream) -> tuple:
        """Returns (challenger or None, resamples consumed, cap_hit)."""
        cap = self.resample_cap
        q_bound = _dethrone_probability_bound(state, leader)
        if q_bound * cap < _CERTIFIED_SKIP:
            return None, cap, True
        if q_bound < _SHORTCUT_BELOW:
            log_a = log_optimal_action_probabilities(state)
            mask = np.arange(state.n_arms) != leader
            log_q = float(logsumexp(log_a[mask]))
            q = min(max(math.exp(log_q), 1e-300), 1.0 - 1e-16)
            u = max(float(rng.gen.random()), 1e-320)
            needed = math.floor(math.log(u) / math.log1p(-q)) + 1
            if needed > cap:
                return None, cap, True
            weights = np.exp(log_a[mask] - log_q)
            weights = weights / weights.sum()
            pick = int(rng.gen.choice(np.flatnonzero(mask), p=weights))
            return pick, int(needed), False
        params = state.posterior_params()
        gaussian = state.family.kind == GAUSSIAN
        drawn = 0
        batch = 64
        while drawn < cap:
            size = min(batch, cap - drawn)
            if gaussian:
                theta = rng.gen.normal(params.means, params.scales,
                                       size=(size, state.n_arms))
            else:
                theta = rng.gen.beta(params.alpha, params.beta,
                                     size=(size, state.n_arms))
            winners = np.argmax(theta, axis=1)
            hits = np.flatnonzero(winners != leader)
            if hits.size:
                first = int(hits[0])
                return int(winners[first]), drawn + first + 1, False
            drawn += size
            batch = min(batch * 8, 262_144)
        return None, cap, True

    def select_arm(self, state, rng, a=None):
        theta = sample_theta(state, rng)
        leader, ties = _argmax_tie(theta, rng)
        if rng.gen.random() < self.beta:
            return leader, SelectionTrace(arm=leader, role="leader",
                                          tie_break_size=ties)
        challenger, resamples, cap_hit = self._resample_challenger(
            state, leader, rng)
        tie_size = 1
        if challenger is None:
            challenger, tie_size = _transport_challenger(state, leader, rng)
        return challenger, SelectionTrace(arm=challenger, role="challenger",
                                          resamples=resamples,
                                          tie_break_size=tie_size,
                                          resample_cap_hit=cap_hit)


@dataclass
class T3C(SamplingRule):
    """Top-two Thompson leader with a transportation-cost challenger."""

    beta: float = 0.5

    name = "t3c"

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie strictly between 0 and 1")

    def fresh(self) -> "T3C":
        return T3C(beta=self.beta)

    def select_arm(self, state, rng, a=None):
        theta = sample_theta(state, rng)
        leader, ties = _argmax_tie(theta, rng)
        if rng.gen.random() < self.beta:
            return leader, SelectionTrace(arm=leader, role="leader",
                                          tie_break_size=ties)
        challenger, tie_size = _transport_challenger(state, leader, rng)
        return challenger, SelectionTrace(arm=challenger, role="challenger",
                                          tie_break_size=tie_size)


@dataclass
class TTPS(SamplingRule):
    """Top-two probability sampling: leader and challenger from a_n.

    Needs the optimal-action probability vector each round, which makes it
    far more expensive per step than TTTS/T3C; provided for completeness.
    """

    beta: float = 0.5

    name = "ttps"

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie strictly between 0 and 1")

    def fresh(self) -> "TTPS":
        return TTPS(beta=self.beta)

    def select_arm(self, state, rng, a=None):
        if a is None:
            raise ValueError("TTPS needs the optimal-action probability vector")
        a = np.asarray(a, dtype=float)
        leader, ties = _argmax_tie(a, rng)
        if rng.gen.random() < self.beta:
            return leader, SelectionTrace(arm=leader, role="leader",
                                          tie_break_size=ties)
        rest = a.copy()
        rest[leader] = -np.inf
        challenger, tie_size = _argmax_tie(rest, rng)
        return challenger, SelectionTrace(arm=challenger, role="challenger",
                                          tie_break_size=tie_size)


@dataclass
class BestChallenger(SamplingRule):
    """Empirical-best leader with forced exploration of starved arms.

    Any arm pulled fewer than sqrt(n) times is force-played (least pulled
    first); otherwise the empirical best leads and the transportation-cost
    challenger responds, mixed with probability beta.
    """

    beta: float = 0.5

    name = "bc"

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie strictly between 0 and 1")

    def fresh(self) -> "BestChallenger":
        return BestChallenger(beta=self.beta)

    def select_arm(self, state, rng, a=None):
        counts = state.counts
        n = state.total_pulls
        starved = np.flatnonzero((counts == 0) | (counts < math.sqrt(n)))
        if starved.size:
            least = starved[counts[starved] == counts[starved].min()]
            arm, ties = _tie_break(least, rng)
            return arm, SelectionTrace(arm=arm, role="forced",
                                       tie_break_size=ties)
        leader, ties = _argmax_tie(state.empirical_means(), rng)
        if rng.gen.random() < self.beta:
            return leader, SelectionTrace(arm=leader, role="leader",
                                          tie_break_size=ties)
        challenger, tie_size = _transport_challenger(state, leader, rng)
        return challenger, SelectionTrace(arm=challenger, role="challenger",
                                          tie_break_size=tie_size)


@dataclass
class DTracking(SamplingRule):
    """Direct tracking of the plug-in optimal allocation.

    Re-solves the beta-optimized allocation at the empirical means every
    non-forced round and plays the arm furthest behind its target share.
    Forced exploration kicks in while min_i T_i < sqrt(n) - K/2. Empirical
    ties at the top are separated by 1e-9 before solving.
    """

    beta_tol: float = 2e-3
    last_allocation: AllocationResult | None = field(default=None, repr=False)

    name = "dtracking"

    def fresh(self) -> "DTracking":
        return DTracking(beta_tol=self.beta_tol)

    def select_arm(self, state, rng, a=None):
        counts = state.counts
        n = state.total_pulls
        k = state.n_arms
        if np.any(counts == 0) or counts.min() < math.sqrt(n) - k / 2.0:
            least = np.flatnonzero(counts == counts.min())
            arm, ties = _tie_break(least, rng)
            return arm, SelectionTrace(arm=arm, role="forced",
                                       tie_break_size=ties)
        means = self._separated_means(state)
        alloc = optimal_allocation(means, state.family, beta_tol=self.beta_tol)
        self.last_allocation = alloc
        deficit = n * alloc.weights - counts
        arm, ties = _argmax_tie(deficit, rng)
        return arm, SelectionTrace(arm=arm, role="tracking",
                                   tie_break_size=ties)

    @staticmethod
    def _separated_means(state: PosteriorState) -> np.ndarray:
        means = state.sums / state.counts
        top = means.max()
        tied = np.flatnonzero(means == top)
        if tied.size > 1:
            means = means.copy()
            if state.family.kind == GAUSSIAN or top + 1e-9 < 1.0:
                means[tied[0]] += 1e-9
            else:
                means[tied[1:]] -= 1e-9 * np.arange(1, tied.size)
        return means


@dataclass
class UniformRule(SamplingRule):
    """Round-robin: round n plays arm n mod K."""

    name = "uniform"

    def fresh(self) -> "UniformRule":
        return UniformRule()

    def select_arm(self, state, rng, a=None):
        arm = state.rounds % state.n_arms
        return arm, SelectionTrace(arm=arm, role="round-robin")


def selection_probabilities(rule: SamplingRule, state: PosteriorState,
                            a, costs=None) -> np.ndarray:
    """Analytic per-round selection law psi of TTTS or T3C.

    ``a`` is the optimal-action probability vector at the state; for T3C
    ``costs`` may supply the transportation cost matrix (computed from the
    state when omitted, which requires every arm pulled at least once).
    """
    a = np.asarray(a, dtype=float)
    k = a.size
    if isinstance(rule, TTTS):
        ratios = a / (1.0 - a)
        total = ratios.sum()
        return rule.beta * a + (1.0 - rule.beta) * a * (total - ratios)
    if isinstance(rule, T3C):
        if costs is None:
            matrix = np.zeros((k, k))
            for i in range(k):
                for j in range(k):
                    if i != j:
                        matrix[i, j] = transportation_cost(state, i, j)
        elif hasattr(costs, "to_array"):
            matrix = costs.to_array()
        else:
            matrix = np.asarray(costs, dtype=float)
        psi = rule.beta * a
        for j in range(k):
            row = np.delete(matrix[j], j)
            others = np.delete(np.arange(k), j)
            winners = others[row == row.min()]
            psi[winners] += (1.0 - rule.beta) * a[j] / winners.size
        return psi
    raise ValueError(f"selection probabilities unavailable for rule {rule.name!r}")


RULE_NAMES = ("ttts", "t3c", "ttps", "bc", "dtracking", "uniform")


def make_rule(name: str, beta: float = 0.5, resample_cap: int = 1_000_000,
              beta_tol: float = 2e-3) -> SamplingRule:
    """Build a rule from its command-line name.

    ``beta`` applies to the top-two rules, ``resample_cap`` to TTTS only,
    and ``beta_tol`` to the direct-tracking rule's per-round solver;
    irrelevant settings are ignored.
    """
    table = {
        "ttts": lambda: TTTS(beta=beta, resample_cap=resample_cap),
        "t3c": lambda: T3C(beta=beta),
        "ttps": lambda: TTPS(beta=beta),
        "bc": lambda: BestChallenger(beta=beta),
        "dtracking": lambda: DTracking(beta_tol=beta_tol),
        "uniform": lambda: UniformRule(),
    }
    if name not in table:
        raise ValueError(f"unknown rule {name!r}; expected one of {RULE_NAMES}")
    return table[name]()
