import math

import numpy as np
import pytest

from baikit import (AllocationError, RewardFamily, brute_force_gamma,
                    gaussian_fast_path, kl_div, optimal_allocation,
                    optimal_allocation_beta, population_cost)
from conftest import MU_1, MU_2

GAUSS = RewardFamily.gaussian()
BERN = RewardFamily.bernoulli()


def test_symmetric_three_arm_exact():
    # unit gap, two identical challengers: weights (b, (1-b)/2, (1-b)/2)
    res = optimal_allocation_beta(np.array([1.0, 0.0, 0.0]), GAUSS, 0.5)
    assert np.allclose(res.weights, [0.5, 0.25, 0.25], atol=1e-10)
    assert math.isclose(res.gamma, 1.0 / 12.0, rel_tol=1e-10)


def test_two_arm_closed_form():
    # K=2: the suboptimal arm takes 1-beta; gamma = gap^2/(2 sigma^2 (1/b + 1/(1-b)))
    means = np.array([1.0, 0.0])
    for beta in (0.2, 0.5, 0.7):
        res = optimal_allocation_beta(means, GAUSS, beta)
        assert np.allclose(res.weights, [beta, 1 - beta], atol=1e-12)
        expect = 1.0 / (2 * (1 / beta + 1 / (1 - beta)))
        assert math.isclose(res.gamma, expect, rel_tol=1e-12)


def test_equalization_random_sweep_gaussian():
    rng = np.random.default_rng(314)
    for _ in range(30):
        k = int(rng.integers(2, 6))
        means = np.sort(rng.normal(0, 1, size=k))[::-1].copy()
        means[0] += 0.3       # guarantee a clear unique best
        beta = float(rng.uniform(0.05, 0.95))
        res = optimal_allocation_beta(means, GAUSS, beta)
        assert math.isclose(res.weights.sum(), 1.0, rel_tol=1e-12)
        assert math.isclose(res.weights[0], beta, rel_tol=1e-12)
        assert np.all(res.weights > 0)
        assert res.residual <= 1e-10
        costs = [population_cost(GAUSS, means[0], means[i],
                                 res.weights[0], res.weights[i])
                 for i in range(1, k)]
        assert max(costs) - min(costs) <= 1e-9 * max(costs)


def test_equalization_random_sweep_bernoulli():
    rng = np.random.default_rng(2718)
    for _ in range(20):
        k = int(rng.integers(2, 6))
        means = np.sort(rng.uniform(0.05, 0.95, size=k))[::-1].copy()
        means[0] = min(means[0] + 0.05, 0.97)
        if means[0] - means[1] < 1e-3:
            continue
        beta = float(rng.uniform(0.1, 0.9))
        res = optimal_allocation_beta(means, BERN, beta)
        assert res.residual <= 1e-10
        assert math.isclose(res.weights.sum(), 1.0, rel_tol=1e-12)
        assert math.isclose(res.weights[0], beta, rel_tol=1e-12)


def test_fast_path_agrees_with_general_solver():
    for means in (np.array(MU_1), np.array(MU_2)):
        for beta in (0.2, 0.5, 0.8):
            fast = gaussian_fast_path(means, 1.0, beta)
            general = optimal_allocation_beta(means, GAUSS, beta)
            assert np.max(np.abs(fast.weights - general.weights)) < 1e-8
            assert math.isclose(fast.gamma, general.gamma, rel_tol=1e-8)


def test_fast_path_random_sweep():
    rng = np.random.default_rng(99)
    for _ in range(25):
        k = int(rng.integers(2, 6))
        means = rng.normal(0, 1, size=k)
        means[int(np.argmax(means))] += 0.2
        sigma = float(rng.uniform(0.5, 2.0))
        beta = float(rng.uniform(0.05, 0.95))
        fam = RewardFamily.gaussian(sigma)
        fast = gaussian_fast_path(means, sigma, beta)
        general = optimal_allocation_beta(means, fam, beta)
        assert np.max(np.abs(fast.weights - general.weights)) < 1e-8


def test_brute_force_small_grid():
    means = np.array([0.9, 0.5, 0.3])
    beta = 0.5
    solver = optimal_allocation_beta(means, GAUSS, beta)
    brute = brute_force_gamma(means, GAUSS, beta, grid_step=5e-3)
    assert brute <= solver.gamma + 1e-12      # solver is the true maximum
    assert solver.gamma - brute <= 1e-3


def test_brute_force_bernoulli():
    means = np.array([0.7, 0.5, 0.4])
    solver = optimal_allocation_beta(means, BERN, 0.4)
    brute = brute_force_gamma(means, BERN, 0.4, grid_step=5e-3)
    assert brute <= solver.gamma + 1e-12
    assert solver.gamma - brute <= 1e-3


def test_beta_optimization_mu1():
    res = optimal_allocation(np.array(MU_1), GAUSS)
    # regression values pinned by a 99-point grid cross-check
    assert math.isclose(res.gamma, 0.010903291149, rel_tol=1e-6)
    assert math.isclose(res.beta, 0.3396, abs_tol=2e-3)
    at_half = optimal_allocation_beta(np.array(MU_1), GAUSS, 0.5)
    assert res.gamma >= at_half.gamma
    # global optimum dominates a beta grid
    for beta in np.linspace(0.05, 0.95, 19):
        assert res.gamma >= optimal_allocation_beta(
            np.array(MU_1), GAUSS, float(beta)).gamma - 1e-9


def test_beta_optimization_two_arm_symmetric():
    res = optimal_allocation(np.array([1.0, 0.0]), GAUSS)
    assert math.isclose(res.beta, 0.5, abs_tol=1e-4)
    assert math.isclose(res.gamma, 1.0 / 8.0, rel_tol=1e-8)


def test_grid_guard_smoke():
    res = optimal_allocation(np.array([0.8, 0.2]), GAUSS, grid_guard=True)
    assert math.isclose(res.gamma, 0.36 / 8, rel_tol=1e-6)


def test_validation_errors():
    with pytest.raises(ValueError):
        optimal_allocation_beta(np.array([0.5, 0.5]), GAUSS, 0.5)   # tied best
    with pytest.raises(ValueError):
        optimal_allocation_beta(np.array([0.5]), GAUSS, 0.5)
    with pytest.raises(ValueError):
        optimal_allocation_beta(np.array([0.9, 0.1]), GAUSS, 0.0)
    with pytest.raises(ValueError):
        optimal_allocation_beta(np.array([0.9, 0.1]), GAUSS, 1.0)
    assert issubclass(AllocationError, RuntimeError)


def test_gamma_matches_population_cost_definition():
    means = np.array([0.9, 0.5, 0.3, 0.1])
    res = optimal_allocation_beta(means, GAUSS, 0.35)
    costs = [population_cost(GAUSS, 0.9, means[i], res.weights[0],
                             res.weights[i]) for i in range(1, 4)]
    assert math.isclose(res.gamma, min(costs), rel_tol=1e-10)
