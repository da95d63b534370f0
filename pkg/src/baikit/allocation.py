"""Solvers for the confidence-optimal sampling allocation.

For a fixed share ``beta`` of samples on the best arm, the optimal split of
the remaining mass equalizes the pairwise costs C_i(beta, w_i). The general
solver exploits that g_i(x) = C_i(beta, x) is strictly increasing from 0 to
beta * d(mu_star; mu_i): an outer bisection finds the common cost level y
whose inverse images x_i(y) sum to 1 - beta, and an inner bisection inverts
each g_i. Gaussian instances also get a one-shot fast path: with
x_i = 1/w_i + 1/beta and gap ratios rho_j = (gap_ref / gap_j)^2 the
equalization collapses to a single scalar root-find.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import rel_entr

from .bandits import GAUSSIAN, MAX_ARMS, RewardFamily, kl_div
from .transport import population_cost

__all__ = [
    "AllocationResult", "optimal_allocation_beta", "gaussian_fast_path",
    "optimal_allocation", "brute_force_gamma", "AllocationError",
]


class AllocationError(RuntimeError):
    """The allocation solver could not reach its tolerance."""


@dataclass(frozen=True)
class AllocationResult:
    """An allocation over arms with its equalized cost level.

    ``residual`` is the achieved equalization defect
    max_i C_i - min_i C_i across the suboptimal arms.
    """

    weights: np.ndarray
    gamma: float
    beta: float
    residual: float


def _validate_means(means) -> tuple:
    means = [float(m) for m in means]
    k = len(means)
    if k < 2:
        raise ValueError("need at least two arms")
    if k > MAX_ARMS:
        raise ValueError(f"{k} arms exceeds the validated limit of {MAX_ARMS}")
    top = max(means)
    star = means.index(top)
    if means.count(top) > 1:
        raise ValueError("allocation requires a unique best arm")
    return means, star


def _finalize(means, star, family, beta, others, xs) -> AllocationResult:
    k = len(means)
    total = sum(xs)
    scale = (1.0 - beta) / total
    weights = np.zeros(k)
    weights[star] = beta
    for i, x in zip(others, xs):
        weights[i] = x * scale
    costs = [population_cost(family, means[star], means[i], beta, weights[i])
             for i in others]
    gamma = min(costs)
    return AllocationResult(weights=weights, gamma=gamma, beta=beta,
                            residual=max(costs) - gamma)


def optimal_allocation_beta(means, family: RewardFamily, beta: float,
                            tol: float = 1e-12,
                            bracket_growth: float = 2.0) -> AllocationResult:
    """Cost-equalizing allocation with mass ``beta`` pinned on the best arm.

    Family-generic double bisection: the outer loop solves
    sum_i x_i(y) = 1 - beta for the common cost level y (tolerance ``tol``
    on y, at most 200 iterations), the inner loop inverts each increasing
    per-arm cost by bisection.
    """
    means, star = _validate_means(means)
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie strictly between 0 and 1")
    if bracket_growth <= 1.0:
        raise ValueError("bracket_growth must exceed 1")
    mu_star = means[star]
    others = [i for i in range(len(means)) if i != star]
    mass = 1.0 - beta

    def invert(i: int, y: float) -> float:
        # smallest x with C_i(beta, x) == y; C_i increases from 0
        if y <= 0.0:
            return 0.0
        hi = 1.0
        grown = 0
        while population_cost(family, mu_star, means[i], beta, hi) < y:
            hi *= bracket_growth
            grown += 1
            if grown > 600:
                raise AllocationError("per-arm inversion bracket failed to close")
        lo = 0.0
        while hi - lo > 2e-15 * hi + 1e-18:
            mid = 0.5 * (lo + hi)
            if population_cost(family, mu_star, means[i], beta, mid) < y:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def shortfall(y: float) -> float:
        return sum(invert(i, y) for i in others) - mass

    sups = [beta * kl_div(family, mu_star, means[i]) for i in others]
    finite = [s for s in sups if math.isfinite(s)]
    if finite:
        y_hi = min(finite) * (1.0 - 1e-13)
        attempts = 0
        while shortfall(y_hi) < 0.0:
            # numerically the sup slack can be too generous; tighten toward it
            y_hi = min(finite) * (1.0 - (1.0 - y_hi / min(finite)) / 4.0)
            attempts += 1
            if attempts > 60:
                raise AllocationError("outer bracket failed against cost supremum")
    else:
        y_hi = 1.0
        attempts = 0
        while shortfall(y_hi) < 0.0:
            y_hi *= 2.0
            attempts += 1
            if attempts > 200:
                raise AllocationError("outer bracket failed to close")
    y_lo = 0.0
    for _ in range(200):
        if y_hi - y_lo <= tol:
            break
        y_mid = 0.5 * (y_lo + y_hi)
        if shortfall(y_mid) < 0.0:
            y_lo = y_mid
        else:
            y_hi = y_mid
    y = 0.5 * (y_lo + y_hi)
    xs = [invert(i, y) for i in others]
    return _finalize(means, star, family, beta, others, xs)


def gaussian_fast_path(means, sigma: float, beta: float,
                       tol: float = 1e-14,
                       bracket_growth: float = 2.0) -> AllocationResult:
    """Closed-form-assisted Gaussian solver; one scalar bisection total.

    In the variables x_j = 1/w_j + 1/beta the equalized costs force
    x_j = rho_j^{-1} x_ref with rho_j = (gap_ref/gap_j)^2, so the simplex
    constraint becomes sum_j rho_j / (x - rho_j/beta) = 1 - beta, solved for
    x on (max_j rho_j / beta, infinity) where the left side decreases from
    +inf to 0. ``tol`` is the relative width at which the bisection stops.
    """
    means, star = _validate_means(means)
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie strictly between 0 and 1")
    if not sigma > 0.0:
        raise ValueError("sigma must be positive")
    family = RewardFamily.gaussian(sigma)
    mu_star = means[star]
    others = [i for i in range(len(means)) if i != star]
    gaps = [mu_star - means[i] for i in others]
    gap_ref = min(gaps)
    rhos = [(gap_ref / g) ** 2 for g in gaps]
    mass = 1.0 - beta
    pole = max(rhos) / beta  # == 1/beta

    def lhs(x: float) -> float:
        return sum(r / (x - r / beta) for r in rhos)

    hi = pole + 1.0 / mass
    while lhs(hi) > mass:
        hi = pole + (hi - pole) * bracket_growth
    lo = pole
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if lhs(mid) > mass:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    xs = [r / (x - r / beta) for r in rhos]  # these are the weights already
    return _finalize(means, star, family, beta, others, xs)


def _gamma_at(means, family: RewardFamily, beta: float,
              tol: float) -> AllocationResult:
    if family.kind == GAUSSIAN:
        return gaussian_fast_path(means, family.sigma, beta, tol=min(tol, 1e-12))
    return optimal_allocation_beta(means, family, beta, tol=tol)


_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def optimal_allocation(means, family: RewardFamily, tol: float = 1e-10,
                       beta_tol: float = 1e-8,
                       grid_guard: bool = False) -> AllocationResult:
    """Allocation maximizing the cost level over the best-arm share beta.

    Golden-section search on beta over [1e-4, 1 - 1e-4] under the premise
    that beta -> Gamma_beta is unimodal; with ``grid_guard`` a 99-point beta
    grid is also scanned and a warning is raised (and the better point kept)
    if the grid beats the search by more than ``tol``.
    """
    means, _ = _validate_means(means)

    cache: dict = {}

    def gamma(b: float) -> float:
        if b not in cache:
            cache[b] = _gamma_at(means, family, b, tol)
        return cache[b].gamma

    a, b = 1e-4, 1.0 - 1e-4
    c = b - _INV_GOLDEN * (b - a)
    d = a + _INV_GOLDEN * (b - a)
    fc, fd = gamma(c), gamma(d)
    while (b - a) > beta_tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_GOLDEN * (b - a)
            fc = gamma(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_GOLDEN * (b - a)
            fd = gamma(d)
    best_beta = c if fc >= fd else d
    best = cache[best_beta]

    if grid_guard:
        grid_best = None
        for gb in np.linspace(0.01, 0.99, 99):
            result = _gamma_at(means, family, float(gb), tol)
            if grid_best is None or result.gamma > grid_best.gamma:
                grid_best = result
        if grid_best.gamma > best.gamma + tol:
            warnings.warn(
                "beta grid beat golden-section search by "
                f"{grid_best.gamma - best.gamma:.3e}; using the grid point",
                stacklevel=2,
            )
            best = grid_best
    return best


def _min_cost_vector(family: RewardFamily, mu_star: float, mus, beta: float,
                     weight_cols) -> np.ndarray:
    """Pointwise min over arms of C_i(beta, w_i) for columns of weights."""
    result = None
    for mu_i, w in zip(mus, weight_cols):
        if family.kind == GAUSSIAN:
            gap = mu_star - mu_i
            s2 = 2.0 * family.sigma * family.sigma
            with np.errstate(divide="ignore"):
                c = np.where(w > 0.0, gap * gap / (s2 * (1.0 / beta + 1.0 / np.maximum(w, 1e-300))), 0.0)
        else:
            pooled = (beta * mu_star + w * mu_i) / (beta + w)
            c = (beta * (rel_entr(mu_star, pooled) + rel_entr(1.0 - mu_star, 1.0 - pooled))
                 + w * (rel_entr(mu_i, pooled) + rel_entr(1.0 - mu_i, 1.0 - pooled)))
        result = c if result is None else np.minimum(result, c)
    return result


def brute_force_gamma(means, family: RewardFamily, beta: float,
                      grid_step: float = 2e-3) -> float:
    """Grid-search maximin oracle for the fixed-beta allocation level.

    Enumerates every lattice point of the simplex slice with resolution
    ``grid_step`` and returns the best min-cost found. Exponential in the
    number of arms; intended as an independent check, not production use.
    """
    means, star = _validate_means(means)
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie strictly between 0 and 1")
    mu_star = means[star]
    mus = [means[i] for i in range(len(means)) if i != star]
    r = len(mus)
    mass = 1.0 - beta
    m = max(1, int(round(mass / grid_step)))
    unit = mass / m

    if r == 1:
        return float(population_cost(family, mu_star, mus[0], beta, mass))

    best = -math.inf

    def descend(idx: int, remaining: int, prefix_min: float,
                prefix_weights: list) -> None:
        nonlocal best
        if idx == r - 2:
            counts = np.arange(remaining + 1, dtype=float)
            w_a = counts * unit
            w_b = (remaining - counts) * unit
            cols = [np.full(remaining + 1, w) for w in prefix_weights]
            cols.extend([w_a, w_b])
            cand = _min_cost_vector(family, mu_star, mus, beta, cols)
            if prefix_min < math.inf:
                cand = np.minimum(cand, prefix_min)
            local = float(np.max(cand))
            if local > best:
                best = local
            return
        for count in range(remaining + 1):
            w = count * unit
            cost = population_cost(family, mu_star, mus[idx], beta, w)
            new_min = min(prefix_min, cost)
            if new_min <= best:
                continue  # cannot improve the maximin along this branch
            descend(idx + 1, remaining - count, new_min, prefix_weights + [w])

    descend(0, m, math.inf, [])
    return best
