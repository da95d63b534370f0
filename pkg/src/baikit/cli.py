"""Command-line interface.

Subcommands:
  solve-allocation  optimal sampling weights and error-decay rates
  run               replicated stopping-rule experiment, CSV/JSON export
  bench             per-step timing of a sampling rule on a converged state
  diagnose          fixed-horizon single run with convergence diagnostics

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
The BAI_THREADS environment variable overrides the worker count for `run`.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .allocation import AllocationError, optimal_allocation, optimal_allocation_beta
from .bandits import (BERNOULLI, GAUSSIAN, BanditInstance, RewardFamily,
                      RngStream, sample_reward)
from .harness import (ExperimentConfig, ExportError, InsufficientDataError,
                      TrialError, benchmark_step_time,
                      convergence_diagnostics, export, run_experiment,
                      run_trial)
from .numerics import QuadratureError
from .posterior import ImproperPosteriorError, PosteriorState
from .rules import RULE_NAMES, DTracking, make_rule
from .stopping import (BAYES, CHERNOFF, CLOSED_FORM, THEOREM1,
                       StoppingCriterion, should_stop)
from .transport import glr_statistic

_BERNOULLI_NOTE = ("note: the delta-correctness guarantee is proven for "
                   "Gaussian rewards; Bernoulli use of these thresholds is heuristic")


def _add_instance_args(parser: argparse.ArgumentParser, required: bool) -> None:
    parser.add_argument("--means", type=float, nargs="+", required=required,
                        help="arm means, e.g. --means 0.5 0.9 0.4")
    parser.add_argument("--family", choices=(GAUSSIAN, BERNOULLI),
                        default=None, help="reward family (default gaussian)")
    parser.add_argument("--sigma", type=float, default=None,
                        help="Gaussian reward standard deviation (default 1)")


def _build_instance(args) -> BanditInstance:
    family_kind = args.family or GAUSSIAN
    if family_kind == GAUSSIAN:
        family = RewardFamily.gaussian(args.sigma if args.sigma is not None else 1.0)
    else:
        if args.sigma is not None:
            raise ValueError("--sigma only applies to the gaussian family")
        family = RewardFamily.bernoulli()
    if args.means is None:
        raise ValueError("--means is required")
    return BanditInstance(family, tuple(args.means))


def _cmd_solve_allocation(args) -> int:
    instance = _build_instance(args)
    means = np.asarray(instance.means)
    at_beta = optimal_allocation_beta(means, instance.family, args.beta)
    best = optimal_allocation(means, instance.family, grid_guard=args.grid_guard)
    fmt = lambda v: " ".join(f"{x:.10g}" for x in v)
    print(f"family: {instance.family.kind}"
          + (f" (sigma={instance.family.sigma:g})"
             if instance.family.kind == GAUSSIAN else ""))
    print(f"means: {fmt(means)}")
    print(f"beta = {args.beta:.10g}")
    print(f"w_beta = {fmt(at_beta.weights)}")
    print(f"gamma_beta = {at_beta.gamma:.12g}")
    print(f"equalization residual = {at_beta.residual:.3e}")
    print(f"beta_star = {best.beta:.10g}")
    print(f"gamma_star = {best.gamma:.12g}")
    print(f"w_star = {fmt(best.weights)}")
    return 0


def _config_from_args(args) -> ExperimentConfig:
    spec = {}
    if args.config is not None:
        with open(args.config, "r", encoding="utf-8") as fh:
            spec = json.load(fh)
        if "instance" not in spec and "instance" in spec.get("config", {}):
            spec = spec["config"]     # accept an export sidecar verbatim
    if args.means is not None or "instance" not in spec:
        instance = _build_instance(args)
        spec["instance"] = {"family": instance.family.kind,
                            "sigma": instance.family.sigma,
                            "means": list(instance.means)}
    if args.rule is not None or "rule" not in spec:
        if args.rule is None:
            raise ValueError("--rule is required (or provide it in --config)")
        rule_spec = {"name": args.rule}
        if args.beta is not None:
            rule_spec["beta"] = args.beta
        spec["rule"] = rule_spec
    elif args.beta is not None:
        spec["rule"]["beta"] = args.beta
    if args.stopping is not None or "criterion" not in spec:
        spec["criterion"] = {"kind": args.stopping or CHERNOFF,
                             "delta": 0.01,
                             "threshold_variant": THEOREM1}
    if args.delta is not None:
        spec["criterion"]["delta"] = args.delta
    if args.threshold_variant is not None:
        spec["criterion"]["threshold_variant"] = args.threshold_variant
    for flag, key in (("replications", "replications"), ("seed", "base_seed"),
                      ("n_max", "n_max"), ("check_every", "check_every"),
                      ("trace_stride", "trace_stride")):
        value = getattr(args, flag)
        if value is not None:
            spec[key] = value
    if args.record_step_time:
        spec["record_step_time"] = True
    return ExperimentConfig.from_dict(spec)


def _cmd_run(args) -> int:
    config = _config_from_args(args)
    summary = run_experiment(config, workers=args.workers)
    crit = config.criterion
    stopping = "none" if crit is None else f"{crit.kind} delta={crit.delta:g}"
    print(f"rule={config.rule.name} stopping={stopping} "
          f"replications={summary.n_replications}")
    if config.instance.family.kind == BERNOULLI and crit is not None:
        print(_BERNOULLI_NOTE)
    print(f"error_rate={summary.error_rate:.4f} censored={summary.n_censored}")
    print(f"tau mean={summary.tau_mean:.1f} median={summary.tau_median:.1f} "
          f"p90={summary.tau_p90:.1f}")
    if summary.tracking_error is not None:
        print(f"tracking_error={summary.tracking_error:.4f}")
    if summary.mean_step_time_s is not None:
        print(f"mean_step_time_s={summary.mean_step_time_s:.3e}")
    if args.out is not None:
        export(summary, args.format, args.out)
        print(f"wrote {args.out} and {args.out}.meta.json")
    return 0


def _converged_state(instance: BanditInstance, seed: int) -> PosteriorState:
    """A post-stopping posterior snapshot, identical across rules.

    Runs one cheap transportation-cost-challenger trial to the Chernoff
    stopping time so every benchmarked rule sees the same state.
    """
    criterion = StoppingCriterion(CHERNOFF, 0.01, instance.n_arms)
    rng = RngStream(seed, 0)
    rule = make_rule("t3c")
    state = PosteriorState.for_instance(instance)
    if instance.family.kind == GAUSSIAN:
        for arm in range(instance.n_arms):
            state.record_initial(arm, sample_reward(instance, arm, rng))
    while state.total_pulls < 1_000_000:
        arm, _ = rule.select_arm(state, rng)
        state.observe(arm, sample_reward(instance, arm, rng))
        if int(state.counts.min()) >= 1:
            if should_stop(criterion, state, glr=glr_statistic(state)).stop:
                break
    return state


def _cmd_bench(args) -> int:
    instance = _build_instance(args)
    state = _converged_state(instance, args.seed if args.seed is not None else 0)
    rule = make_rule(args.rule, beta=args.beta if args.beta is not None else 0.5)
    result = benchmark_step_time(rule, state,
                                 iterations=args.iterations,
                                 seed=args.seed if args.seed is not None else 0)
    print(f"rule={args.rule} iterations={result.iterations} "
          f"state_pulls={state.total_pulls}")
    print(f"mean_step_time_s={result.mean_seconds:.6e}")
    return 0


def _cmd_diagnose(args) -> int:
    instance = _build_instance(args)
    beta = args.beta if args.beta is not None else 0.5
    rule = make_rule(args.rule, beta=beta)
    config = ExperimentConfig(
        instance=instance, rule=rule, criterion=None, replications=1,
        base_seed=args.seed if args.seed is not None else 0,
        n_max=args.horizon, collect_trace=True,
        trace_stride=args.trace_stride if args.trace_stride is not None else 100)
    record = run_trial(config, 0)
    means = np.asarray(instance.means)
    if isinstance(rule, DTracking):
        target = optimal_allocation(means, instance.family)
    else:
        target = optimal_allocation_beta(means, instance.family, beta)
    diag = convergence_diagnostics(record.trace, target)
    print(f"rule={rule.name} horizon={args.horizon} "
          f"trace_points={len(record.trace)}")
    print(f"posterior_slope={diag.slope:.6g}")
    print(f"gamma_reference={target.gamma:.6g} (beta={target.beta:.4g})")
    print(f"slope/gamma = {diag.slope / target.gamma:.3f}")
    print(f"tracking_error={diag.tracking_error:.5f}")
    print(f"final_fractions = {' '.join(f'{x:.4f}' for x in record.trace[-1].fractions)}")
    print(f"target_weights  = {' '.join(f'{x:.4f}' for x in target.weights)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="baikit",
        description="Fixed-confidence best-arm identification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve-allocation",
                             help="optimal weights and error-decay rates")
    _add_instance_args(p_solve, required=True)
    p_solve.add_argument("--beta", type=float, default=0.5,
                         help="best-arm sampling fraction (default 0.5)")
    p_solve.add_argument("--grid-guard", action="store_true",
                         help="cross-check the beta optimizer on a 99-point grid")
    p_solve.set_defaults(func=_cmd_solve_allocation)

    p_run = sub.add_parser("run", help="replicated stopping experiment")
    _add_instance_args(p_run, required=False)
    p_run.add_argument("--rule", choices=RULE_NAMES, default=None)
    p_run.add_argument("--beta", type=float, default=None,
                       help="top-two mixing weight (default 0.5)")
    p_run.add_argument("--stopping", choices=(BAYES, CHERNOFF), default=None,
                       help="stopping rule (default chernoff)")
    p_run.add_argument("--threshold-variant", choices=(THEOREM1, CLOSED_FORM),
                       default=None, help="Bayesian threshold variant")
    p_run.add_argument("--delta", type=float, default=None,
                       help="risk level (default 0.01)")
    p_run.add_argument("--replications", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None, help="base seed")
    p_run.add_argument("--n-max", type=int, default=None, dest="n_max",
                       help="horizon cap per replication")
    p_run.add_argument("--check-every", type=int, default=None,
                       dest="check_every", help="stopping-check stride")
    p_run.add_argument("--trace-stride", type=int, default=None,
                       dest="trace_stride")
    p_run.add_argument("--record-step-time", action="store_true",
                       help="time select_arm calls (CSV reruns then differ)")
    p_run.add_argument("--workers", type=int, default=None,
                       help="process count (BAI_THREADS overrides)")
    p_run.add_argument("--config", type=str, default=None,
                       help="JSON file with ExperimentConfig fields; flags override")
    p_run.add_argument("--out", type=str, default=None, help="output path")
    p_run.add_argument("--format", choices=("csv", "json"), default="csv")
    p_run.set_defaults(func=_cmd_run)

    p_bench = sub.add_parser("bench", help="per-step timing on a converged state")
    _add_instance_args(p_bench, required=True)
    p_bench.add_argument("--rule", choices=RULE_NAMES, required=True)
    p_bench.add_argument("--beta", type=float, default=None)
    p_bench.add_argument("--iterations", type=int, default=200)
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.set_defaults(func=_cmd_bench)

    p_diag = sub.add_parser("diagnose",
                            help="fixed-horizon run with convergence diagnostics")
    _add_instance_args(p_diag, required=True)
    p_diag.add_argument("--rule", choices=RULE_NAMES, required=True)
    p_diag.add_argument("--beta", type=float, default=None)
    p_diag.add_argument("--horizon", type=int, default=200_000)
    p_diag.add_argument("--trace-stride", type=int, default=None,
                        dest="trace_stride")
    p_diag.add_argument("--seed", type=int, default=None)
    p_diag.set_defaults(func=_cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError,
            ExportError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (QuadratureError, AllocationError, InsufficientDataError,
            ImproperPosteriorError, TrialError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
