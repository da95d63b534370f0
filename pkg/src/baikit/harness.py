"""Experiment harness: replicated trials, aggregation, diagnostics, export.

A trial is a pure function of (config, replication index): the replication
index selects an independent counter-based random stream, so experiments
reproduce exactly and parallel execution aggregates in replication order
with output identical to a serial run.

Per-step wall-clock timing is off by default because recording it makes the
CSV export differ between reruns; everything else in the output files is
byte-stable.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import __version__
from .allocation import optimal_allocation, optimal_allocation_beta
from .bandits import GAUSSIAN, BanditInstance, RewardFamily, RngStream, sample_reward
from .posterior import (PosteriorState, log_optimal_action_probabilities,
                        optimal_action_probabilities)
from .rules import TTPS, SamplingRule, make_rule
from .stopping import BAYES, CHERNOFF, StoppingCriterion, should_stop
from .transport import glr_statistic

__all__ = [
    "ExperimentConfig", "TracePoint", "RunRecord", "ExperimentSummary",
    "ConvergenceDiagnostics", "StepTimingResult",
    "run_trial", "run_experiment", "convergence_diagnostics",
    "benchmark_step_time", "export",
    "InsufficientDataError", "TrialError", "ExportError",
]

# solver settings recorded in export metadata for reproducibility
SOLVER_TOLERANCES = {
    "allocation_tol": 1e-10,
    "allocation_beta_tol": 1e-8,
    "quadrature_tol": 1e-10,
    "log_quadrature_rel_tol": 1e-8,
}


class InsufficientDataError(RuntimeError):
    """A diagnostic was asked for with too little recorded data."""


class TrialError(RuntimeError):
    """A replication failed; carries the replication index."""

    def __init__(self, replication: int, cause: Exception):
        super().__init__(f"replication {replication} failed: {cause}")
        self.replication = replication
        self.cause = cause


class ExportError(RuntimeError):
    """Writing experiment output to disk failed."""


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce an experiment exactly.

    ``criterion=None`` disables stopping entirely: the run continues to
    ``n_max`` and is recorded as censored; diagnostics use this for
    fixed-horizon convergence studies.
    """

    instance: BanditInstance
    rule: SamplingRule
    criterion: StoppingCriterion | None
    replications: int = 1000
    base_seed: int = 0
    n_max: int = 1_000_000
    check_every: int | None = None   # None: 1 for Chernoff, 10 for Bayesian
    trace_stride: int = 100
    collect_trace: bool = False
    record_step_time: bool = False

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.n_max < self.instance.n_arms:
            raise ValueError("n_max must allow at least one pull per arm")
        if self.check_every is not None and self.check_every < 1:
            raise ValueError("check_every must be positive")
        if self.trace_stride < 1:
            raise ValueError("trace_stride must be positive")
        if (self.criterion is not None
                and self.criterion.n_arms != self.instance.n_arms):
            raise ValueError("criterion and instance disagree on arm count")

    def effective_check_every(self) -> int:
        """The stopping-check stride; Bayesian checks are quadrature-heavy."""
        if self.check_every is not None:
            return self.check_every
        if self.criterion is None or self.criterion.kind == CHERNOFF:
            return 1
        return 10

    def to_dict(self) -> dict:
        rule_spec = {"name": self.rule.name}
        for attr in ("beta", "resample_cap", "beta_tol"):
            if hasattr(self.rule, attr):
                rule_spec[attr] = getattr(self.rule, attr)
        return {
            "instance": {
                "family": self.instance.family.kind,
                "sigma": self.instance.family.sigma,
                "means": list(self.instance.means),
            },
            "rule": rule_spec,
            "criterion": None if self.criterion is None else {
                "kind": self.criterion.kind,
                "delta": self.criterion.delta,
                "threshold_variant": self.criterion.threshold_variant,
            },
            "replications": self.replications,
            "base_seed": self.base_seed,
            "n_max": self.n_max,
            "check_every": self.check_every,
            "trace_stride": self.trace_stride,
            "collect_trace": self.collect_trace,
            "record_step_time": self.record_step_time,
        }

    @classmethod
    def from_dict(cls, spec: dict) -> "ExperimentConfig":
        inst = spec["instance"]
        if inst["family"] == GAUSSIAN:
            family = RewardFamily.gaussian(inst.get("sigma", 1.0))
        else:
            family = RewardFamily.bernoulli()
        instance = BanditInstance(family, tuple(inst["means"]))
        rule_spec = dict(spec["rule"])
        rule = make_rule(rule_spec.pop("name"), **rule_spec)
        crit = spec.get("criterion")
        criterion = None if crit is None else StoppingCriterion(
            kind=crit["kind"], delta=crit["delta"],
            n_arms=instance.n_arms,
            threshold_variant=crit.get("threshold_variant", "theorem1"))
        kwargs = {key: spec[key] for key in
                  ("replications", "base_seed", "n_max", "check_every",
                   "trace_stride", "collect_trace", "record_step_time")
                  if key in spec}
        return cls(instance=instance, rule=rule, criterion=criterion, **kwargs)


@dataclass
class TracePoint:
    """Sampled convergence state: pull fractions and posterior error mass."""

    n: int
    fractions: np.ndarray
    log_one_minus_a: float    # log P[posterior argmax is not the true best]

    @property
    def one_minus_a(self) -> float:
        return math.exp(self.log_one_minus_a)


@dataclass
class RunRecord:
    """Outcome of one replication."""

    replication: int
    tau: int
    recommendation: int
    correct: bool
    censored: bool
    step_time_s: float | None = None
    final_fractions: np.ndarray | None = field(default=None, repr=False)
    trace: list | None = field(default=None, repr=False)


@dataclass
class ConvergenceDiagnostics:
    """Posterior decay slope and allocation tracking error of one trace."""

    slope: float
    tracking_error: float


@dataclass
class StepTimingResult:
    """Mean select_arm wall time and the (deterministic) decisions made."""

    mean_seconds: float
    iterations: int
    decisions: tuple


@dataclass
class ExperimentSummary:
    """Aggregate over all replications of one experiment."""

    config: ExperimentConfig
    error_rate: float
    n_replications: int
    n_censored: int
    tau_mean: float
    tau_median: float
    tau_p90: float
    mean_step_time_s: float | None
    tracking_error: float | None
    posterior_slope: float | None
    records: list = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "error_rate": self.error_rate,
            "n_replications": self.n_replications,
            "n_censored": self.n_censored,
            "tau_mean": self.tau_mean,
            "tau_median": self.tau_median,
            "tau_p90": self.tau_p90,
            "mean_step_time_s": self.mean_step_time_s,
            "tracking_error": self.tracking_error,
            "posterior_slope": self.posterior_slope,
        }


def _log_posterior_error_mass(state: PosteriorState, best_arm: int) -> float:
    """log(1 - a_{n,i*}): posterior mass on the wrong-argmax event."""
    log_a = log_optimal_action_probabilities(state)
    others = np.arange(state.n_arms) != best_arm
    return float(logsumexp(log_a[others]))


def run_trial(config: ExperimentConfig, replication: int) -> RunRecord:
    """One full replication: init, sample until stopping or the cap.

    Deterministic given (config, replication): the replication index is the
    stream id of a counter-based generator. Gaussian runs pull each arm once
    before the loop (the improper prior needs one observation per arm);
    those pulls count toward tau and the thresholds. Chernoff checks are
    skipped until every arm has been pulled, since the GLR statistic needs
    one observation per arm.
    """
    instance = config.instance
    criterion = config.criterion
    rng = RngStream(config.base_seed, replication)
    rule = config.rule.fresh()
    state = PosteriorState.for_instance(instance)
    best = instance.best_arm
    k = instance.n_arms

    if instance.family.kind == GAUSSIAN:
        for arm in range(k):
            state.record_initial(arm, sample_reward(instance, arm, rng))

    check_every = config.effective_check_every()
    needs_a = isinstance(rule, TTPS)
    bayes = criterion is not None and criterion.kind == BAYES
    trace = [] if config.collect_trace else None
    step_total = 0.0
    steps = 0
    decision = None

    while state.total_pulls < config.n_max:
        a = optimal_action_probabilities(state) if needs_a else None
        if config.record_step_time:
            t0 = time.perf_counter()
            arm, _ = rule.select_arm(state, rng, a)
            step_total += time.perf_counter() - t0
        else:
            arm, _ = rule.select_arm(state, rng, a)
        steps += 1
        state.observe(arm, sample_reward(instance, arm, rng))

        if criterion is not None and state.rounds % check_every == 0:
            if bayes:
                a_now = optimal_action_probabilities(state)
                decision = should_stop(criterion, state, a=a_now)
            elif int(state.counts.min()) >= 1:
                decision = should_stop(criterion, state, glr=glr_statistic(state))
            if decision is not None and decision.stop:
                break
        if trace is not None and state.rounds % config.trace_stride == 0:
            n = state.total_pulls
            trace.append(TracePoint(
                n=n, fractions=state.counts / n,
                log_one_minus_a=_log_posterior_error_mass(state, best)))

    stopped = decision is not None and decision.stop
    if stopped:
        tau = state.total_pulls
        recommendation = decision.recommendation
        correct = recommendation == best
    else:
        tau = config.n_max
        if bayes:
            recommendation = int(np.argmax(optimal_action_probabilities(state)))
        else:
            recommendation = int(np.argmax(state.empirical_means()))
        correct = False     # censored runs never count as correct
    return RunRecord(
        replication=replication,
        tau=tau,
        recommendation=recommendation,
        correct=bool(correct),
        censored=not stopped,
        step_time_s=(step_total / steps) if config.record_step_time and steps else None,
        final_fractions=state.counts / state.total_pulls,
        trace=trace,
    )


def _run_trial_checked(config: ExperimentConfig, replication: int) -> RunRecord:
    try:
        return run_trial(config, replication)
    except Exception as exc:          # noqa: BLE001 - annotate with the index
        raise TrialError(replication, exc) from exc


def _reference_weights(config: ExperimentConfig) -> np.ndarray | None:
    """Allocation target for the tracking-error summary, if the rule has one.

    Beta-anchored rules track the beta-optimal weights; direct tracking
    targets the globally optimal weights; round-robin has no target.
    """
    means = np.asarray(config.instance.means)
    family = config.instance.family
    rule = config.rule
    if rule.name == "uniform":
        return None
    try:
        if hasattr(rule, "beta"):
            return optimal_allocation_beta(means, family, rule.beta).weights
        return optimal_allocation(means, family).weights
    except Exception:
        return None


def run_experiment(config: ExperimentConfig,
                   workers: int | None = None) -> ExperimentSummary:
    """All replications, serial or on a process pool; same output either way.

    Worker count: the BAI_THREADS environment variable wins, then the
    ``workers`` argument, then 1. Results aggregate in replication order.
    """
    env = os.environ.get("BAI_THREADS")
    if env is not None:
        workers = int(env)
    workers = workers or 1
    reps = config.replications

    if workers <= 1 or reps == 1:
        records = [_run_trial_checked(config, r) for r in range(reps)]
    else:
        chunk = max(1, reps // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_trial_checked, [config] * reps,
                                    range(reps), chunksize=chunk))

    taus = np.array([rec.tau for rec in records], dtype=float)
    n_censored = sum(rec.censored for rec in records)
    error_rate = 1.0 - sum(rec.correct for rec in records) / reps

    times = [rec.step_time_s for rec in records if rec.step_time_s is not None]
    mean_step = float(np.mean(times)) if times else None

    tracking = None
    target = _reference_weights(config)
    if target is not None:
        errs = [float(np.max(np.abs(rec.final_fractions - target)))
                for rec in records if rec.final_fractions is not None]
        tracking = float(np.mean(errs)) if errs else None

    slope = None
    if config.collect_trace:
        slopes = []
        for rec in records:
            if rec.trace is not None and len(rec.trace) >= 10:
                slopes.append(_trace_slope(rec.trace))
        slope = float(np.mean(slopes)) if slopes else None

    return ExperimentSummary(
        config=config,
        error_rate=float(error_rate),
        n_replications=reps,
        n_censored=int(n_censored),
        tau_mean=float(taus.mean()),
        tau_median=float(np.median(taus)),
        tau_p90=float(np.percentile(taus, 90)),
        mean_step_time_s=mean_step,
        tracking_error=tracking,
        posterior_slope=slope,
        records=records,
    )


def _trace_slope(trace: list) -> float:
    """Least-squares slope of -log(1 - a) versus n over the last half."""
    tail = trace[len(trace) // 2:]
    xs = np.array([p.n for p in tail], dtype=float)
    ys = np.array([-p.log_one_minus_a for p in tail])
    xc = xs - xs.mean()
    denom = float(xc @ xc)
    if denom == 0.0:
        raise InsufficientDataError("trace spans a single sample size")
    return float(xc @ (ys - ys.mean()) / denom)


def convergence_diagnostics(trace: list, allocation) -> ConvergenceDiagnostics:
    """Posterior decay slope and final tracking error of a recorded trace.

    The slope estimates the exponential rate at which posterior mass leaves
    the wrong-argmax event (its long-run limit is the allocation's optimal
    rate); the tracking error compares final pull fractions to the target
    weights. Raises InsufficientDataError below 10 trace points.
    """
    if trace is None or len(trace) < 10:
        raise InsufficientDataError("need at least 10 trace points")
    slope = _trace_slope(trace)
    weights = np.asarray(getattr(allocation, "weights", allocation), dtype=float)
    err = float(np.max(np.abs(trace[-1].fractions - weights)))
    return ConvergenceDiagnostics(slope=slope, tracking_error=err)


def benchmark_step_time(rule: SamplingRule, state: PosteriorState,
                        iterations: int = 100, seed: int = 0) -> StepTimingResult:
    """Mean select_arm wall time on a frozen state.

    Reward sampling and posterior updates are excluded; the probability
    vector a required by TTPS is computed inside the timed region because
    that dominates its real per-step cost. Decisions are deterministic
    given the seed (timings of course are not).
    """
    if iterations < 1:
        raise ValueError("iterations must be positive")
    runner = rule.fresh()
    rng = RngStream(seed, 0)
    needs_a = isinstance(runner, TTPS)
    decisions = []
    start = time.perf_counter()
    for _ in range(iterations):
        a = optimal_action_probabilities(state) if needs_a else None
        arm, _ = runner.select_arm(state, rng, a)
        decisions.append(arm)
    elapsed = time.perf_counter() - start
    return StepTimingResult(mean_seconds=elapsed / iterations,
                            iterations=iterations,
                            decisions=tuple(decisions))


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

_CSV_COLUMNS = ("replication", "tau", "recommendation", "correct",
                "censored", "step_time_s")


def _write_sidecar(path: str, config: ExperimentConfig) -> None:
    meta = {
        "config": config.to_dict(),
        "code_version": __version__,
        "solver_tolerances": SOLVER_TOLERANCES,
    }
    with open(path + ".meta.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def export(payload, fmt: str, path: str) -> None:
    """Write experiment output plus a metadata sidecar.

    ``csv`` expects an ExperimentSummary (or a list of RunRecords plus no
    sidecar) and writes one row per replication; ``json`` expects an
    ExperimentSummary and mirrors its field names. The sidecar
    ``<path>.meta.json`` records config, base seed, solver tolerances, and
    code version, which is enough to rerun the experiment exactly.
    """
    if fmt not in ("csv", "json"):
        raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")
    summary = payload if isinstance(payload, ExperimentSummary) else None
    records = summary.records if summary is not None else payload
    try:
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        if fmt == "csv":
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(_CSV_COLUMNS)
                for rec in records:
                    writer.writerow([
                        rec.replication, rec.tau, rec.recommendation,
                        int(rec.correct), int(rec.censored),
                        "" if rec.step_time_s is None else repr(rec.step_time_s),
                    ])
        else:
            if summary is None:
                raise ValueError("json export needs an ExperimentSummary")
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                json.dump(summary.to_dict(), fh, indent=2, sort_keys=True)
                fh.write("\n")
        if summary is not None:
            _write_sidecar(path, summary.config)
    except OSError as exc:
        raise ExportError(f"could not write {path}: {exc}") from exc
