"""Sequential penalty outer loop and the fixed-penalty baseline.

The outer loop solves a sequence of penalty subproblems with geometrically
growing coefficient tau_k = tau0 * gamma^k and shrinking stationarity
targets eps_k = eps0 * eps_decay^k, warm-starting each inner run at the
previous candidate. The loop stops early only when both the gradient-norm
estimate falls below eps_k and the worst violation falls below the
feasibility tolerance; otherwise it runs max_outer iterations (the theory is
asymptotic and prescribes no stopping rule).

In practical (Adam) mode the optimizer moments are threaded from one outer
iteration into the next, so a schedule with a one-epoch inner budget is one
continuous training run whose penalty weight increases every epoch.

The fixed-penalty baseline is the degenerate single-subproblem case with the
linear penalty and constant tau = lambda; lambda = 0 gives the plain
unconstrained run.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from seqpen.inner import InnerReport, InnerSolverError, SGDConfig, sgd_run
from seqpen.penalties import PenaltySpec, multiplier_estimate, penalty_value_full
from seqpen.problems import Array, FeasibilityStats, FiniteSumProblem, as_params, feasibility_stats, full_objective

PENALTY_KINDS = ("quadratic", "linear")


class OuterAbort(RuntimeError):
    """Inner solver failure, annotated with the outer iteration and the trace so far."""

    def __init__(self, outer_index: int, partial: "OuterTrace", cause: InnerSolverError):
        super().__init__(f"inner solver aborted at outer iteration {outer_index}: {cause}")
        self.outer_index = outer_index
        self.partial = partial
        self.cause = cause


def derived_seed(base: int, index: int) -> int:
    """Stable per-iteration RNG seed derived from a base seed."""
    return int(np.random.SeedSequence([int(base), int(index)]).generate_state(1, np.uint64)[0])


@dataclass
class Schedule:
    """Outer-loop parameters plus the inner solver configuration.

    ``stepsize_fn(tau)`` and ``budget_fn(tau, eps, x)`` optionally override
    the fixed inner stepsize/budget per subproblem; they exist because the
    theoretically motivated values depend on tau-dependent constants the
    caller may know analytically or estimate.
    """

    tau0: float
    gamma: float
    max_outer: int
    inner: SGDConfig
    eps0: float = 1.0
    eps_decay: float = 0.9
    feasibility_tol: float = 1e-6
    stepsize_fn: Optional[Callable[[float], float]] = None
    budget_fn: Optional[Callable[[float, float, Array], int]] = None

    def __post_init__(self):
        if not np.isfinite(self.tau0) or self.tau0 <= 0:
            raise ValueError("tau0 must be positive")
        if not np.isfinite(self.gamma) or self.gamma <= 1.0:
            raise ValueError("gamma must exceed 1 so tau grows without bound")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if not np.isfinite(self.eps0) or self.eps0 <= 0:
            raise ValueError("eps0 must be positive")
        if not (0.0 < self.eps_decay < 1.0):
            raise ValueError("eps_decay must lie in (0, 1) so eps shrinks to 0")

    def tau_at(self, k: int) -> float:
        return self.tau0 * self.gamma**k

    def eps_at(self, k: int) -> float:
        return self.eps0 * self.eps_decay**k


@dataclass
class OuterRecord:
    """Snapshot of one outer iteration."""

    k: int
    tau: float
    eps: float
    candidate: Array
    penalty_value: float
    objective_value: float
    grad_norm: float
    feasibility: FeasibilityStats
    multiplier_max: float
    multiplier_mean: float
    iterate_count: int
    clip_activations: int


@dataclass
class OuterTrace:
    kind: str
    records: list = field(default_factory=list)
    stopped: str = "max_outer"

    def final(self) -> OuterRecord:
        if not self.records:
            raise ValueError("trace is empty")
        return self.records[-1]


def _make_record(problem, spec, k, eps, report: InnerReport) -> OuterRecord:
    x = report.candidate
    lam = multiplier_estimate(problem, spec, x)
    return OuterRecord(
        k=k,
        tau=spec.tau,
        eps=eps,
        candidate=x.copy(),
        penalty_value=penalty_value_full(problem, spec, x),
        objective_value=full_objective(problem, x),
        grad_norm=report.grad_norm_estimate,
        feasibility=feasibility_stats(problem, x),
        multiplier_max=float(lam.max()),
        multiplier_mean=float(lam.mean()),
        iterate_count=report.iterate_count,
        clip_activations=report.clip_activations,
    )


def sequential_penalty_train(
    problem: FiniteSumProblem,
    kind: str,
    schedule: Schedule,
    x0,
    epoch_hook: Optional[Callable[[Array], None]] = None,
) -> OuterTrace:
    """Run the outer loop; returns the per-iteration trace.

    Each inner run starts exactly at the previous candidate. RNG seeds for
    the inner runs are derived per iteration from the configured seed so
    epochs do not repeat the same shuffles.
    """
    if kind not in PENALTY_KINDS:
        raise ValueError(f"kind must be one of {PENALTY_KINDS}, got {kind!r}")
    x = as_params(problem, x0).copy()
    trace = OuterTrace(kind=kind)
    opt_state = None
    for k in range(schedule.max_outer):
        tau = schedule.tau_at(k)
        eps = schedule.eps_at(k)
        spec = PenaltySpec(kind, tau)
        config = replace(schedule.inner, rng_seed=derived_seed(schedule.inner.rng_seed, k))
        if schedule.stepsize_fn is not None:
            config = replace(config, stepsize=schedule.stepsize_fn(tau))
        if schedule.budget_fn is not None:
            config = replace(config, budget=int(schedule.budget_fn(tau, eps, x)))
        try:
            report = sgd_run(problem, spec, x, config, opt_state=opt_state, epoch_hook=epoch_hook)
        except InnerSolverError as err:
            raise OuterAbort(k, trace, err) from err
        x = report.candidate
        opt_state = report.opt_state
        trace.records.append(_make_record(problem, spec, k, eps, report))
        rec = trace.records[-1]
        if rec.grad_norm <= eps and rec.feasibility.max_violation <= schedule.feasibility_tol:
            trace.stopped = "tolerance"
            break
    return trace


def fixed_penalty_train(
    problem: FiniteSumProblem,
    lam: float,
    inner: SGDConfig,
    x0,
    epoch_hook: Optional[Callable[[Array], None]] = None,
) -> OuterTrace:
    """Single inner run on the objective plus lambda times the violation measure.

    Uses the linear penalty with constant tau = lambda so the baseline and
    the sequential method share the same code path and diagnostics; lambda
    may be zero (plain unconstrained training).
    """
    if not np.isfinite(lam) or lam < 0:
        raise ValueError("lambda must be finite and >= 0")
    x = as_params(problem, x0).copy()
    spec = PenaltySpec("linear", lam)
    trace = OuterTrace(kind="linear", stopped="budget")
    try:
        report = sgd_run(problem, spec, x, inner, epoch_hook=epoch_hook)
    except InnerSolverError as err:
        raise OuterAbort(0, trace, err) from err
    trace.records.append(_make_record(problem, spec, 0, float("nan"), report))
    return trace
