"""Stopping rules: decide when enough evidence has accumulated.

Two rules share one interface. The Bayesian rule stops once the posterior
probability that some arm is the best, max_i a_{n,i}, clears a threshold
c_{n,delta}; the Chernoff rule stops once the generalized likelihood ratio
statistic Z_n clears d_{n,delta}. Both thresholds guarantee an error
probability of at most delta for Gaussian rewards; for Bernoulli rewards
the same thresholds are exposed unchanged but the guarantee is heuristic.

Near the decision boundary both c_{n,delta} and max_i a_{n,i} sit within
1e-9 of one, so the Bayesian comparison is carried out on complements
(1 - c versus 1 - max a) to avoid cancellation; the recorded statistic and
threshold may round to 1.0 at extreme sample sizes, but the decision does
not degrade.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .posterior import PosteriorState

__all__ = [
    "BAYES", "CHERNOFF", "THEOREM1", "CLOSED_FORM",
    "StoppingCriterion", "StopDecision",
    "chernoff_threshold", "bayes_threshold", "bayes_threshold_complement",
    "should_stop",
]

BAYES = "bayes"
CHERNOFF = "chernoff"
THEOREM1 = "theorem1"
CLOSED_FORM = "closed-form"

_SQRT_2PI = math.sqrt(2.0 * math.pi)
_SQRT_2PIE = math.sqrt(2.0 * math.pi * math.e)


@dataclass(frozen=True)
class StoppingCriterion:
    """Which stopping rule to run and at what risk level."""

    kind: str
    delta: float
    n_arms: int
    threshold_variant: str = THEOREM1

    def __post_init__(self):
        if self.kind not in (BAYES, CHERNOFF):
            raise ValueError(f"kind must be {BAYES!r} or {CHERNOFF!r}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie strictly between 0 and 1")
        if self.n_arms < 2:
            raise ValueError("need at least two arms")
        if self.threshold_variant not in (THEOREM1, CLOSED_FORM):
            raise ValueError(
                f"threshold_variant must be {THEOREM1!r} or {CLOSED_FORM!r}")


@dataclass(frozen=True)
class StopDecision:
    """Outcome of one stopping check.

    ``recommendation`` is populated exactly when ``stop`` is true.
    """

    stop: bool
    recommendation: int | None
    statistic: float
    threshold: float

    def __post_init__(self):
        if self.stop != (self.recommendation is not None):
            raise ValueError("recommendation must be present iff stopping")


def _check_args(n: int, delta: float, n_arms: int) -> None:
    if n < 1:
        raise ValueError("sample count must be at least 1")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie strictly between 0 and 1")
    if n_arms < 2:
        raise ValueError("need at least two arms")


def chernoff_threshold(n: int, delta: float, n_arms: int) -> float:
    """GLR stopping threshold d_{n,delta}.

    Uses 4 ln(4 + ln n) + 2 C(x) at x = ln((K-1)/delta)/2 with the
    correction C(x) = x + ln(max(x, 1)); the clamp keeps the correction
    nonnegative for tiny x, which errs on the conservative (larger) side.
    """
    _check_args(n, delta, n_arms)
    x = math.log((n_arms - 1) / delta) / 2.0
    c_of_x = x + math.log(max(x, 1.0))
    return 4.0 * math.log(4.0 + math.log(n)) + 2.0 * c_of_x


def bayes_threshold_complement(n: int, delta: float, n_arms: int,
                               variant: str = THEOREM1) -> float:
    """1 - c_{n,delta}, computed directly so no precision is lost."""
    _check_args(n, delta, n_arms)
    if variant == THEOREM1:
        d = chernoff_threshold(n, delta, n_arms)
        return math.exp(-(math.sqrt(d) + 1.0 / math.sqrt(2.0)) ** 2) / _SQRT_2PI
    if variant == CLOSED_FORM:
        m = 2.0 * n * (n_arms - 1) / delta
        return delta / (2.0 * n * (n_arms - 1) * _SQRT_2PIE
                        * math.exp(math.sqrt(2.0 * math.log(m))))
    raise ValueError(f"unknown threshold variant {variant!r}")


def bayes_threshold(n: int, delta: float, n_arms: int,
                    variant: str = THEOREM1) -> float:
    """Posterior-confidence stopping threshold c_{n,delta} in (1/2, 1)."""
    return 1.0 - bayes_threshold_complement(n, delta, n_arms, variant)


def should_stop(criterion: StoppingCriterion, state: PosteriorState,
                a=None, glr: float | None = None) -> StopDecision:
    """Evaluate the stopping rule at the current state.

    The Bayesian rule needs the optimal-action probability vector ``a``;
    the Chernoff rule needs the GLR statistic ``glr`` and every arm pulled
    at least once (its recommendation is the empirical best). Thresholds
    are evaluated at n = total pulls including any initialization pulls.
    """
    n = state.total_pulls
    if criterion.kind == CHERNOFF:
        if glr is None:
            raise ValueError("Chernoff stopping needs the GLR statistic")
        threshold = chernoff_threshold(n, criterion.delta, criterion.n_arms)
        if glr > threshold:
            rec = int(np.argmax(state.empirical_means()))
            return StopDecision(True, rec, float(glr), threshold)
        return StopDecision(False, None, float(glr), threshold)
    if a is None:
        raise ValueError("Bayesian stopping needs the action probabilities")
    a = np.asarray(a, dtype=float)
    complement = bayes_threshold_complement(n, criterion.delta,
                                            criterion.n_arms,
                                            criterion.threshold_variant)
    best = int(np.argmax(a))
    statistic = float(a[best])
    threshold = 1.0 - complement
    if 1.0 - statistic <= complement:
        return StopDecision(True, best, statistic, threshold)
    return StopDecision(False, None, statistic, threshold)
