"""Arm distributions, problem instances, and reproducible random streams."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

GAUSSIAN = "gaussian"
BERNOULLI = "bernoulli"

# Instances with more arms than this are outside the validated envelope of the
# allocation solvers and the exhaustive tail-bound checks.
MAX_ARMS = 6


@dataclass(frozen=True)
class RewardFamily:
    """Reward distribution family shared by every arm of an instance.

    ``sigma`` is the known standard deviation for the Gaussian family and is
    ignored for Bernoulli.
    """

    kind: str
    sigma: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in (GAUSSIAN, BERNOULLI):
            raise ValueError(f"unknown reward family {self.kind!r}")
        if self.kind == GAUSSIAN and not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError("gaussian family needs sigma > 0")

    @classmethod
    def gaussian(cls, sigma: float = 1.0) -> "RewardFamily":
        return cls(GAUSSIAN, float(sigma))

    @classmethod
    def bernoulli(cls) -> "RewardFamily":
        return cls(BERNOULLI)

    @property
    def is_gaussian(self) -> bool:
        return self.kind == GAUSSIAN


@dataclass(frozen=True)
class BanditInstance:
    """A finite set of arms with known family and fixed (hidden) means."""

    family: RewardFamily
    means: tuple

    def __post_init__(self) -> None:
        means = tuple(float(m) for m in self.means)
        object.__setattr__(self, "means", means)
        k = len(means)
        if k < 2:
            raise ValueError("an instance needs at least two arms")
        if k > MAX_ARMS:
            raise ValueError(
                f"{k} arms exceeds the validated limit of {MAX_ARMS}; refusing"
            )
        if not all(math.isfinite(m) for m in means):
            raise ValueError("arm means must be finite")
        if self.family.kind == BERNOULLI and not all(0.0 < m < 1.0 for m in means):
            raise ValueError("bernoulli means must lie strictly inside (0, 1)")
        top = max(means)
        if sum(1 for m in means if m == top) > 1:
            raise ValueError("the best arm must be unique")
        gaps = sorted(top - m for m in means)
        if gaps[1] < 1e-12:  # gaps[0] is the best arm itself
            warnings.warn(
                "smallest gap below 1e-12; identification will be extremely slow",
                stacklevel=2,
            )

    @property
    def n_arms(self) -> int:
        return len(self.means)

    @property
    def best_arm(self) -> int:
        return best_arm(self)


def best_arm(instance: BanditInstance) -> int:
    """Index of the unique arm with the largest mean."""
    means = instance.means
    return max(range(len(means)), key=means.__getitem__)


class RngStream:
    """Counter-based random stream keyed by ``(seed, stream)``.

    The same key reproduces the same draw sequence on every platform, and
    distinct stream ids give statistically independent streams, so
    replication ``r`` of an experiment can safely use ``stream=r``. Treat an
    instance as owned by a single consumer; clone with :meth:`fresh` to
    restart the sequence.
    """

    __slots__ = ("seed", "stream", "gen")

    def __init__(self, seed: int, stream: int = 0):
        for name, value in (("seed", seed), ("stream", stream)):
            if not isinstance(value, (int, np.integer)):
                raise ValueError(f"{name} must be an integer")
            if not 0 <= value < 2**64:
                raise ValueError(f"{name} must fit in 64 bits")
        self.seed = int(seed)
        self.stream = int(stream)
        self.gen = np.random.Generator(np.random.Philox(key=(self.stream << 64) | self.seed))

    def fresh(self) -> "RngStream":
        """A new stream restarted at the beginning of the same sequence."""
        return RngStream(self.seed, self.stream)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"RngStream(seed={self.seed}, stream={self.stream})"


def sample_reward(instance: BanditInstance, arm: int, rng: RngStream) -> float:
    """Draw one reward from ``arm``. Consumes exactly one generator variate."""
    if not 0 <= arm < instance.n_arms:
        raise IndexError(f"arm {arm} out of range for {instance.n_arms} arms")
    mean = instance.means[arm]
    if instance.family.kind == GAUSSIAN:
        return float(rng.gen.normal(mean, instance.family.sigma))
    return float(rng.gen.random() < mean)


def kl_div(family: RewardFamily, mu1: float, mu2: float) -> float:
    """KL divergence d(mu1; mu2) between two single-parameter distributions.

    Gaussian: (mu1 - mu2)^2 / (2 sigma^2).
    Bernoulli: mu1 log(mu1/mu2) + (1-mu1) log((1-mu1)/(1-mu2)), with the
    0 log 0 = 0 convention. A boundary second argument with mu1 != mu2 has
    infinite divergence and is reported as ``math.inf`` rather than NaN.
    """
    if family.kind == GAUSSIAN:
        diff = mu1 - mu2
        return diff * diff / (2.0 * family.sigma * family.sigma)
    if not (0.0 <= mu1 <= 1.0 and 0.0 <= mu2 <= 1.0):
        raise ValueError("bernoulli means must lie in [0, 1]")
    if mu1 == mu2:
        return 0.0
    if mu2 <= 0.0 or mu2 >= 1.0:
        return math.inf
    total = 0.0
    if mu1 > 0.0:
        total += mu1 * math.log(mu1 / mu2)
    if mu1 < 1.0:
        total += (1.0 - mu1) * math.log((1.0 - mu1) / (1.0 - mu2))
    return total
