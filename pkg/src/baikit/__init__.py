"""Fixed-confidence best-arm identification toolkit.

Bayesian and tracking sampling rules, posterior machinery, two stopping
rules with explicit thresholds, an optimal-allocation solver, and a
reproducible Monte Carlo harness with CSV/JSON export.
"""

__version__ = "0.1.0"

from .bandits import (BERNOULLI, GAUSSIAN, MAX_ARMS, BanditInstance,
                      RewardFamily, RngStream, best_arm, kl_div, sample_reward)
from .numerics import QuadratureError, betainc, integrate_vector, log_betainc, log_integrate_vector
from .posterior import (BetaPosterior, BetaTailBound, GaussianPosterior,
                        ImproperPosteriorError, PosteriorState, TailBoundPair,
                        beta_tail_bound, gaussian_tail_bounds,
                        log_optimal_action_probabilities,
                        optimal_action_probabilities, sample_theta, update)
from .transport import (CostMatrixView, glr_statistic, pooled_mean,
                        population_cost, transportation_cost)
from .allocation import (AllocationError, AllocationResult, brute_force_gamma,
                         gaussian_fast_path, optimal_allocation,
                         optimal_allocation_beta)
from .rules import (RULE_NAMES, T3C, TTPS, TTTS, BestChallenger, DTracking,
                    SamplingRule, SelectionTrace, UniformRule, make_rule,
                    selection_probabilities)
from .stopping import (BAYES, CHERNOFF, CLOSED_FORM, THEOREM1, StopDecision,
                       StoppingCriterion, bayes_threshold,
                       bayes_threshold_complement, chernoff_threshold,
                       should_stop)
from .harness import (ConvergenceDiagnostics, ExperimentConfig,
                      ExperimentSummary, ExportError, InsufficientDataError,
                      RunRecord, StepTimingResult, TracePoint, TrialError,
                      benchmark_step_time, convergence_diagnostics, export,
                      run_experiment, run_trial)

__all__ = [
    "__version__",
    # bandits
    "BERNOULLI", "GAUSSIAN", "MAX_ARMS", "BanditInstance", "RewardFamily",
    "RngStream", "best_arm", "kl_div", "sample_reward",
    # numerics
    "QuadratureError", "betainc", "integrate_vector", "log_betainc",
    "log_integrate_vector",
    # posterior
    "BetaPosterior", "BetaTailBound", "GaussianPosterior",
    "ImproperPosteriorError", "PosteriorState", "TailBoundPair",
    "beta_tail_bound", "gaussian_tail_bounds",
    "log_optimal_action_probabilities", "optimal_action_probabilities",
    "sample_theta", "update",
    # transport
    "CostMatrixView", "glr_statistic", "pooled_mean", "population_cost",
    "transportation_cost",
    # allocation
    "AllocationError", "AllocationResult", "brute_force_gamma",
    "gaussian_fast_path", "optimal_allocation", "optimal_allocation_beta",
    # rules
    "RULE_NAMES", "T3C", "TTPS", "TTTS", "BestChallenger", "DTracking",
    "SamplingRule", "SelectionTrace", "UniformRule", "make_rule",
    "selection_probabilities",
    # stopping
    "BAYES", "CHERNOFF", "CLOSED_FORM", "THEOREM1", "StopDecision",
    "StoppingCriterion", "bayes_threshold", "bayes_threshold_complement",
    "chernoff_threshold", "should_stop",
    # harness
    "ConvergenceDiagnostics", "ExperimentConfig", "ExperimentSummary",
    "ExportError", "InsufficientDataError", "RunRecord", "StepTimingResult",
    "TracePoint", "TrialError", "benchmark_step_time",
    "convergence_diagnostics", "export", "run_experiment", "run_trial",
]
