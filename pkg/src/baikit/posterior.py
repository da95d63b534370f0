"""Posterior state, posterior sampling, and posterior tail quantities.

The Gaussian family uses the improper flat prior, so the posterior for an
arm pulled T times with empirical mean m is N(m, sigma^2 / T) and every arm
must be pulled once before sampling is meaningful. The Bernoulli family uses
the uniform Beta(1, 1) prior, giving Beta(S + 1, T - S + 1) posteriors that
are proper from the start.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, log_ndtr, logsumexp, ndtr

from .bandits import GAUSSIAN, BanditInstance, RewardFamily, RngStream, kl_div
from .numerics import QuadratureError, integrate_vector, log_betainc, log_integrate_vector, betainc

__all__ = [
    "PosteriorState", "GaussianPosterior", "BetaPosterior", "TailBoundPair",
    "BetaTailBound", "ImproperPosteriorError", "update", "sample_theta",
    "optimal_action_probabilities", "log_optimal_action_probabilities",
    "gaussian_tail_bounds", "beta_tail_bound",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class ImproperPosteriorError(RuntimeError):
    """Sampling was requested from a Gaussian posterior with an unpulled arm."""


@dataclass
class PosteriorState:
    """Sufficient statistics of the posterior over all arm means.

    ``rounds`` counts sampling-rule rounds only; rewards recorded through
    :meth:`record_initial` (the one-pull-per-arm Gaussian initialization)
    are counted in ``init_offset`` instead, so that
    ``counts.sum() == rounds + init_offset`` always holds.
    """

    family: RewardFamily
    counts: np.ndarray
    sums: np.ndarray
    rounds: int = 0
    init_offset: int = 0

    @classmethod
    def fresh(cls, family: RewardFamily, n_arms: int) -> "PosteriorState":
        if n_arms < 2:
            raise ValueError("need at least two arms")
        return cls(family=family,
                   counts=np.zeros(n_arms, dtype=np.int64),
                   sums=np.zeros(n_arms, dtype=np.float64))

    @classmethod
    def for_instance(cls, instance: BanditInstance) -> "PosteriorState":
        return cls.fresh(instance.family, instance.n_arms)

    @property
    def n_arms(self) -> int:
        return int(self.counts.size)

    @property
    def total_pulls(self) -> int:
        return self.rounds + self.init_offset

    def _check_arm(self, arm: int) -> None:
        if not 0 <= arm < self.n_arms:
            raise IndexError(f"arm {arm} out of range for {self.n_arms} arms")

    def observe(self, arm: int, reward: float) -> None:
        """Record one round's reward in place. Caller owns the state."""
        self._check_arm(arm)
        self.counts[arm] += 1
        self.sums[arm] += reward
        self.rounds += 1

    def record_initial(self, arm: int, reward: float) -> None:
        """Record an initialization pull that does not advance the round count."""
        self._check_arm(arm)
        self.counts[arm] += 1
        self.sums[arm] += reward
        self.init_offset += 1

    def copy(self) -> "PosteriorState":
        return PosteriorState(self.family, self.counts.copy(), self.sums.copy(),
                              self.rounds, self.init_offset)

    def empirical_means(self) -> np.ndarray:
        """Per-arm empirical means; unpulled arms yield NaN."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, self.sums / self.counts, np.nan)

    def posterior_params(self):
        if self.family.kind == GAUSSIAN:
            if np.any(self.counts < 1):
                raise ImproperPosteriorError(
                    "gaussian posterior undefined before every arm is pulled once")
            means = self.sums / self.counts
            scales = self.family.sigma / np.sqrt(self.counts)
            return GaussianPosterior(means=means, scales=scales)
        return BetaPosterior(alpha=self.sums + 1.0,
                             beta=self.counts - self.sums + 1.0)


@dataclass(frozen=True)
class GaussianPosterior:
    means: np.ndarray
    scales: np.ndarray


@dataclass(frozen=True)
class BetaPosterior:
    alpha: np.ndarray
    beta: np.ndarray


def update(state: PosteriorState, arm: int, reward: float) -> PosteriorState:
    """Pure form of :meth:`PosteriorState.observe`: returns a new state."""
    out = state.copy()
    out.observe(arm, reward)
    return out


def sample_theta(state: PosteriorState, rng: RngStream) -> np.ndarray:
    """One joint posterior draw, one value per arm."""
    params = state.posterior_params()
    if isinstance(params, GaussianPosterior):
        return rng.gen.normal(params.means, params.scales)
    return rng.gen.beta(params.alpha, params.beta)


# ---------------------------------------------------------------------------
# Optimal-action probabilities a_i = P[arm i has the largest posterior mean]
# ---------------------------------------------------------------------------

def _gaussian_integrand(params: GaussianPosterior):
    means = params.means[:, None]
    scales = params.scales[:, None]

    def fn(x: np.ndarray) -> np.ndarray:
        z = (x[None, :] - means) / scales
        pdf = np.exp(-0.5 * z * z) / (scales * math.sqrt(2.0 * math.pi))
        cdf = ndtr(z)
        k = means.shape[0]
        out = np.empty_like(pdf)
        for i in range(k):
            rest = np.ones_like(x)
            for j in range(k):
                if j != i:
                    rest = rest * cdf[j]
            out[i] = pdf[i] * rest
        return out

    return fn


def _beta_integrand(params: BetaPosterior):
    alpha = params.alpha[:, None]
    beta = params.beta[:, None]
    log_norm = betaln(alpha, beta)

    def fn(x: np.ndarray) -> np.ndarray:
        xs = np.clip(x[None, :], 1e-300, 1.0 - 1e-16)
        logpdf = ((alpha - 1.0) * np.log(xs) + (beta - 1.0) * np.log1p(-xs)
                  - log_norm)
        pdf = np.exp(logpdf)
        k = alpha.shape[0]
        cdf = np.vstack([betainc(params.alpha[j], params.beta[j], x)
                         for j in range(k)])
        out = np.empty_like(pdf)
        for i in range(k):
            rest = np.ones_like(x)
            for j in range(k):
                if j != i:
                    rest = rest * cdf[j]
            out[i] = pdf[i] * rest
        return out

    return fn


def _gaussian_support(params: GaussianPosterior) -> tuple:
    lo = float(np.min(params.means - 8.0 * params.scales))
    hi = float(np.max(params.means + 8.0 * params.scales))
    return lo, hi


def optimal_action_probabilities(state: PosteriorState, tol: float = 1e-10,
                                 return_defect: bool = False):
    """Posterior probability that each arm is the best one.

    Computed as the integral of pdf_i(x) * prod_{j != i} cdf_j(x) with an
    adaptive Gauss-Legendre scheme, then renormalized to sum to one. With
    ``return_defect`` the pre-normalization defect |sum - 1| is also
    returned as a quadrature-quality diagnostic.
    """
    params = state.posterior_params()
    if isinstance(params, GaussianPosterior):
        lo, hi = _gaussian_support(params)
        raw = integrate_vector(_gaussian_integrand(params), lo, hi, tol=tol)
    else:
        raw = integrate_vector(_beta_integrand(params), 0.0, 1.0, tol=tol)
    raw = np.clip(raw, 0.0, None)
    total = float(raw.sum())
    if not total > 0.0:
        raise QuadratureError("action-probability quadrature returned zero mass")
    defect = abs(total - 1.0)
    probs = raw / total
    if return_defect:
        return probs, defect
    return probs


def _gaussian_log_integrand(params: GaussianPosterior):
    means = params.means[:, None]
    scales = params.scales[:, None]

    def logfn(x: np.ndarray) -> np.ndarray:
        z = (x[None, :] - means) / scales
        logpdf = -0.5 * z * z - np.log(scales) - _LOG_SQRT_2PI
        logcdf = log_ndtr(z)
        k = means.shape[0]
        out = np.empty_like(logpdf)
        for i in range(k):
            rest = np.zeros_like(x)
            for j in range(k):
                if j != i:
                    rest = rest + logcdf[j]
            out[i] = logpdf[i] + rest
        return out

    return logfn


def _beta_log_integrand(params: BetaPosterior):
    alpha = params.alpha[:, None]
    beta = params.beta[:, None]
    log_norm = betaln(alpha, beta)

    def logfn(x: np.ndarray) -> np.ndarray:
        xs = np.clip(x[None, :], 1e-300, 1.0 - 1e-16)
        logpdf = ((alpha - 1.0) * np.log(xs) + (beta - 1.0) * np.log1p(-xs)
                  - log_norm)
        k = alpha.shape[0]
        logcdf = np.vstack([log_betainc(params.alpha[j], params.beta[j], x)
                            for j in range(k)])
        out = np.empty_like(logpdf)
        for i in range(k):
            rest = np.zeros_like(x)
            for j in range(k):
                if j != i:
                    rest = rest + logcdf[j]
            out[i] = logpdf[i] + rest
        return out

    return logfn


_PER_ARM_OFFSETS = np.array([-8.0, -5.0, -3.0, -2.0, -1.0, 0.0,
                             1.0, 2.0, 3.0, 5.0, 8.0])


def _gaussian_log_edges(params: GaussianPosterior) -> np.ndarray:
    pieces = [m + s * _PER_ARM_OFFSETS for m, s in zip(params.means, params.scales)]
    means = np.sort(params.means)
    # extra resolution between adjacent posterior means, where the products
    # of a small pdf and a small cdf put their mass
    for lo, hi in zip(means[:-1], means[1:]):
        if hi > lo:
            pieces.append(np.linspace(lo, hi, 8))
    edges = np.unique(np.concatenate(pieces))
    return edges


def _beta_log_edges(params: BetaPosterior) -> np.ndarray:
    total = params.alpha + params.beta
    means = params.alpha / total
    scales = np.sqrt(means * (1.0 - means) / (total + 1.0))
    pieces = [np.clip(m + s * _PER_ARM_OFFSETS, 0.0, 1.0)
              for m, s in zip(means, scales)]
    order = np.sort(means)
    for lo, hi in zip(order[:-1], order[1:]):
        if hi > lo:
            pieces.append(np.linspace(lo, hi, 8))
    pieces.append(np.array([0.0, 1.0]))
    return np.unique(np.concatenate(pieces))


def log_optimal_action_probabilities(state: PosteriorState,
                                     rel_tol: float = 1e-8) -> np.ndarray:
    """Log of the optimal-action probabilities, accurate deep in the tails.

    The plain probabilities underflow once an arm dominates (1 - a_best can
    reach exp(-1000) at long horizons); this log-space version keeps full
    relative precision there, which the convergence diagnostics and the
    resampling shortcut rely on. Two Gaussian arms admit a closed form.
    """
    params = state.posterior_params()
    if isinstance(params, GaussianPosterior):
        if state.n_arms == 2:
            gap = params.means[0] - params.means[1]
            scale = math.hypot(params.scales[0], params.scales[1])
            z = gap / scale
            return np.array([log_ndtr(z), log_ndtr(-z)])
        edges = _gaussian_log_edges(params)
        logs = log_integrate_vector(_gaussian_log_integrand(params), edges,
                                    rel_tol=rel_tol)
    else:
        edges = _beta_log_edges(params)
        logs = log_integrate_vector(_beta_log_integrand(params), edges,
                                    rel_tol=rel_tol)
    # renormalize so that logsumexp(logs) == 0
    return logs - logsumexp(logs)


# ---------------------------------------------------------------------------
# Tail bounds on posterior comparison probabilities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailBoundPair:
    """Certified lower/upper bounds on a posterior comparison probability."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (0.0 <= self.lower <= self.upper <= 1.0):
            raise ValueError("bounds must satisfy 0 <= lower <= upper <= 1")


def gaussian_tail_bounds(state: PosteriorState, i: int, j: int) -> TailBoundPair:
    """Bounds on P[theta_i >= theta_j] when arm i trails arm j empirically.

    With gap = mean_j - mean_i >= 0 and s^2 = sigma^2/T_i + sigma^2/T_j:
    upper = exp(-gap^2 / (2 s^2)) / 2 and
    lower = exp(-(gap + s)^2 / (2 s^2)) / sqrt(2 pi).
    """
    if state.family.kind != GAUSSIAN:
        raise ValueError("gaussian_tail_bounds needs a gaussian-family state")
    state._check_arm(i)
    state._check_arm(j)
    if i == j:
        raise ValueError("arms must differ")
    if state.counts[i] < 1 or state.counts[j] < 1:
        raise ValueError("both arms need at least one pull")
    mi = state.sums[i] / state.counts[i]
    mj = state.sums[j] / state.counts[j]
    if mi > mj:
        raise ValueError("requires empirical mean of arm i <= arm j")
    sigma = state.family.sigma
    s2 = sigma * sigma * (1.0 / state.counts[i] + 1.0 / state.counts[j])
    s = math.sqrt(s2)
    gap = mj - mi
    upper = 0.5 * math.exp(-gap * gap / (2.0 * s2))
    lower = math.exp(-((gap + s) ** 2) / (2.0 * s2)) / math.sqrt(2.0 * math.pi)
    return TailBoundPair(lower=lower, upper=upper)


@dataclass(frozen=True)
class BetaTailBound:
    """Upper bound D * exp(-C) on P[X > Y] for two Beta posteriors."""

    rate: float        # C
    prefactor: float   # D
    bound: float       # min(1, D exp(-C))


_BERNOULLI_FAMILY = RewardFamily.bernoulli()


def _bern_kl(p: float, q: float) -> float:
    return kl_div(_BERNOULLI_FAMILY, p, q)


_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_min(fn, lo: float, hi: float, tol: float) -> float:
    """Golden-section minimum of a unimodal scalar function on [lo, hi]."""
    a, b = lo, hi
    c = b - _INV_GOLDEN * (b - a)
    d = a + _INV_GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    while (b - a) > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_GOLDEN * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def beta_tail_bound(a: int, b: int, c: int, d: int) -> BetaTailBound:
    """Closed-form tail bound on P[X > Y], X ~ Beta(a, b), Y ~ Beta(c, d).

    Requires 0 < (a-1)/(a+b-1) < (c-1)/(c+d-1). The exponent C is the
    infimum of C_ab(y) + C_cd(y) over y between those two ratios, where
    C_pq(y) = (p+q-1) kl((p-1)/(p+q-1); y); it is a sum of convex functions,
    so golden-section search (interval tolerance 1e-10) finds it.
    """
    for name, v in (("a", a), ("b", b), ("c", c), ("d", d)):
        if int(v) != v or v < 1:
            raise ValueError(f"{name} must be a positive integer")
    a, b, c, d = int(a), int(b), int(c), int(d)
    mx = (a - 1) / (a + b - 1)
    my = (c - 1) / (c + d - 1)
    if not 0.0 < mx < my:
        raise ValueError("requires 0 < (a-1)/(a+b-1) < (c-1)/(c+d-1)")

    nab = a + b - 1
    ncd = c + d - 1

    def objective(y: float) -> float:
        return nab * _bern_kl(mx, y) + ncd * _bern_kl(my, y)

    y_star = _golden_min(objective, mx, my, tol=1e-10)
    rate = objective(y_star)
    prefactor = 3.0 + min(nab * _bern_kl(mx, my), ncd * _bern_kl(my, mx))
    return BetaTailBound(rate=rate, prefactor=prefactor,
                         bound=min(1.0, prefactor * math.exp(-rate)))
