import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.special import ndtr
from scipy.stats import beta as beta_dist

from baikit import (BanditInstance, ImproperPosteriorError, PosteriorState,
                    RewardFamily, RngStream, beta_tail_bound,
                    gaussian_tail_bounds, log_optimal_action_probabilities,
                    optimal_action_probabilities, sample_theta, update)
from conftest import make_state
from oracles import exact_beta_prob_greater

GAUSS = RewardFamily.gaussian()
BERN = RewardFamily.bernoulli()


def test_state_bookkeeping():
    st = PosteriorState.fresh(GAUSS, 3)
    assert st.total_pulls == 0
    st.record_initial(0, 1.5)
    st.record_initial(1, -0.5)
    st.record_initial(2, 0.0)
    assert st.total_pulls == 3 and st.rounds == 0 and st.init_offset == 3
    st.observe(0, 2.5)
    assert st.total_pulls == 4 and st.rounds == 1
    assert st.counts.tolist() == [2, 1, 1]
    means = st.empirical_means()
    assert math.isclose(means[0], 2.0)
    with pytest.raises(IndexError):
        st.observe(3, 0.0)


def test_update_is_pure():
    st = PosteriorState.fresh(BERN, 2)
    st2 = update(st, 1, 1.0)
    assert st.counts.tolist() == [0, 0]
    assert st2.counts.tolist() == [0, 1]
    assert st2.sums[1] == 1.0


def test_copy_independent():
    st = make_state(GAUSS, [3, 4], [0.2, 0.9])
    cp = st.copy()
    cp.observe(0, 5.0)
    assert st.counts[0] == 3 and cp.counts[0] == 4


def test_empirical_means_unpulled_nan():
    st = PosteriorState.fresh(BERN, 2)
    st.observe(0, 1.0)
    means = st.empirical_means()
    assert means[0] == 1.0 and math.isnan(means[1])


def test_posterior_params_gaussian():
    st = make_state(RewardFamily.gaussian(2.0), [4, 16], [0.3, 0.8])
    params = st.posterior_params()
    assert np.allclose(params.means, [0.3, 0.8])
    assert np.allclose(params.scales, [1.0, 0.5])     # sigma / sqrt(T)
    empty = PosteriorState.fresh(GAUSS, 2)
    with pytest.raises(ImproperPosteriorError):
        empty.posterior_params()


def test_posterior_params_beta():
    st = PosteriorState.fresh(BERN, 2)
    st.observe(0, 1.0)
    st.observe(0, 0.0)
    st.observe(0, 1.0)
    params = st.posterior_params()
    assert params.alpha.tolist() == [3.0, 1.0]     # successes + 1
    assert params.beta.tolist() == [2.0, 1.0]      # failures + 1


def test_sample_theta_moments():
    st = make_state(GAUSS, [100, 25], [0.0, 1.0])
    rng = RngStream(3, 0)
    draws = np.array([sample_theta(st, rng) for _ in range(20000)])
    assert np.allclose(draws.mean(axis=0), [0.0, 1.0], atol=0.01)
    assert np.allclose(draws.std(axis=0), [0.1, 0.2], atol=0.01)


def test_two_arm_gaussian_closed_form():
    # posterior argmax probability = Phi(gap / joint scale); gap/scale = sqrt2
    st = make_state(GAUSS, [1, 1], [0.0, 0.0])
    st.sums = np.array([2.0, 0.0])
    a = optimal_action_probabilities(st)
    assert math.isclose(a[0], 0.9213503964748575, rel_tol=1e-9)
    assert math.isclose(a.sum(), 1.0, rel_tol=1e-12)


def test_action_probabilities_match_monte_carlo_gaussian():
    st = make_state(GAUSS, [40, 90, 25, 30], [0.5, 0.9, 0.4, 0.45])
    a = optimal_action_probabilities(st)
    rng = np.random.default_rng(1234)
    params = st.posterior_params()
    theta = rng.normal(params.means, params.scales, size=(400000, 4))
    counts = np.bincount(np.argmax(theta, axis=1), minlength=4)
    emp = counts / counts.sum()
    sigma = np.sqrt(a * (1 - a) / 400000)
    assert np.all(np.abs(emp - a) < 4 * sigma + 1e-12)


def test_action_probabilities_match_monte_carlo_beta():
    st = make_state(BERN, [50, 40, 30], [0.5, 0.4, 0.3])
    a = optimal_action_probabilities(st)
    params = st.posterior_params()
    rng = np.random.default_rng(88)
    theta = rng.beta(params.alpha, params.beta, size=(400000, 3))
    emp = np.bincount(np.argmax(theta, axis=1), minlength=3) / 400000
    sigma = np.sqrt(a * (1 - a) / 400000)
    assert np.all(np.abs(emp - a) < 4 * sigma + 1e-12)


def test_action_probabilities_two_beta_arms_exact():
    st = PosteriorState.fresh(BERN, 2)
    for _ in range(3):
        st.observe(0, 1.0)
    st.observe(0, 0.0)
    st.observe(1, 1.0)
    st.observe(1, 0.0)
    a = optimal_action_probabilities(st)
    exact = exact_beta_prob_greater(4, 2, 2, 2)
    assert math.isclose(a[0], float(exact), rel_tol=1e-9)


def test_action_probabilities_defect_diagnostic():
    st = make_state(GAUSS, [40, 90, 25], [0.5, 0.9, 0.4])
    a, defect = optimal_action_probabilities(st, return_defect=True)
    assert abs(defect) < 1e-8
    assert math.isclose(a.sum(), 1.0, rel_tol=1e-12)


def test_log_probabilities_match_linear():
    for st in (make_state(GAUSS, [40, 90, 25, 30, 30],
                          [0.5, 0.9, 0.4, 0.45, 0.44999]),
               make_state(BERN, [50, 40, 30], [0.5, 0.4, 0.3])):
        a = optimal_action_probabilities(st)
        la = log_optimal_action_probabilities(st)
        assert np.allclose(np.exp(la), a, rtol=1e-7, atol=1e-12)


def test_log_probabilities_two_arm_closed_form():
    st = make_state(GAUSS, [1, 1], [0.0, 0.0])
    st.sums = np.array([2.0, 0.0])
    la = log_optimal_action_probabilities(st)
    z = math.sqrt(2.0)
    assert math.isclose(la[0], math.log(ndtr(z)), rel_tol=1e-12)
    assert math.isclose(la[1], math.log(ndtr(-z)), rel_tol=1e-12)


def test_log_probabilities_deep_tail_bracketed_by_pairwise():
    # at a heavily sampled state, 1 - a_best lies between the largest single
    # pairwise dethroning probability and their sum (Boole), both exact here
    st = make_state(GAUSS, [20000, 45000, 12000], [0.5, 0.9, 0.4])
    la = log_optimal_action_probabilities(st)
    params = st.posterior_params()
    log_pair = []
    from scipy.special import log_ndtr
    for j in (0, 2):
        gap = params.means[1] - params.means[j]
        s = math.hypot(params.scales[1], params.scales[j])
        log_pair.append(float(log_ndtr(-gap / s)))
    from scipy.special import logsumexp
    log_q = float(logsumexp([la[0], la[2]]))
    assert max(log_pair) - 1e-6 <= log_q <= float(logsumexp(log_pair)) + 1e-6
    assert log_q < -700.0     # genuinely beyond linear-precision territory


def test_gaussian_tail_bounds_sandwich_exact():
    rng = np.random.default_rng(5150)
    for _ in range(500):
        counts = rng.integers(1, 400, size=2)
        means = np.sort(rng.normal(0, 1, size=2))
        st = make_state(GAUSS, counts, means)
        pair = gaussian_tail_bounds(st, 0, 1)
        s = math.hypot(*st.posterior_params().scales)
        exact = float(ndtr(-(means[1] - means[0]) / s))
        assert pair.lower <= exact <= pair.upper


def test_gaussian_tail_bounds_validation():
    st = make_state(GAUSS, [5, 5], [0.8, 0.2])
    with pytest.raises(ValueError):
        gaussian_tail_bounds(st, 0, 1)     # trailing arm must come first
    st2 = make_state(BERN, [5, 5], [0.2, 0.8])
    with pytest.raises(ValueError):
        gaussian_tail_bounds(st2, 0, 1)    # wrong family


def test_beta_tail_bound_dominates_exact_spot_checks():
    cases = [(2, 8, 8, 2), (3, 10, 9, 3), (2, 5, 6, 2), (4, 9, 11, 4)]
    for a, b, c, d in cases:
        bound = beta_tail_bound(a, b, c, d)
        exact = float(exact_beta_prob_greater(a, b, c, d))
        assert bound.bound >= exact
        assert 0.0 < bound.bound <= 1.0


def test_beta_tail_bound_validation():
    with pytest.raises(ValueError):
        beta_tail_bound(1, 5, 5, 1)     # mode at zero: mx = 0
    with pytest.raises(ValueError):
        beta_tail_bound(5, 2, 2, 5)     # means not increasing
    with pytest.raises(ValueError):
        beta_tail_bound(0, 2, 2, 2)


def test_exact_beta_oracle_self_checks():
    assert exact_beta_prob_greater(1, 1, 1, 1) == Fraction(1, 2)
    assert exact_beta_prob_greater(2, 1, 1, 1) == Fraction(2, 3)
    # numeric cross-check against scipy quadrature of P[X > Y]
    from scipy import integrate
    val, _ = integrate.quad(
        lambda y: beta_dist.pdf(y, 3, 4) * beta_dist.sf(y, 5, 2), 0, 1)
    assert math.isclose(float(exact_beta_prob_greater(5, 2, 3, 4)), val,
                        rel_tol=1e-9)


def test_for_instance_layout():
    inst = BanditInstance(BERN, (0.2, 0.7))
    st = PosteriorState.for_instance(inst)
    assert st.n_arms == 2 and st.family.kind == "bernoulli"
