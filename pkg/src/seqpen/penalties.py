"""Penalty functions over finite-sum constrained problems.

Two kinds are supported. With per-sample terms f_j and constraints g_ij:

* quadratic:  p_j(x) = f_j(x) + (tau / 2) * sum_i max(0, g_ij(x))^2
* linear:     p_j(x) = f_j(x) + tau * sum_i max(0, g_ij(x))

The full penalty aggregates p_j per the problem's normalization, so it
coincides with the objective on the feasible set for any tau. The quadratic
kind is continuously differentiable; the linear kind is not, and we take the
subgradient 0 on the boundary g = 0 so feasible points stay unpenalized.

The multiplier estimate tau * max(0, g) (quadratic kind) is the penalty
method's built-in approximation of the KKT multipliers; for the linear kind
we use tau * 1{g > 0}, the weight the subgradient actually applies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from seqpen.problems import (
    Array,
    FiniteSumProblem,
    as_params,
    constraint_values,
    objective_values,
)

PENALTY_KINDS = ("quadratic", "linear")


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty kind plus coefficient tau, immutable for one subproblem.

    tau == 0 is allowed as a degenerate case (the penalty is then exactly the
    objective); it backs the unconstrained baseline. Outer-loop schedules
    require a strictly positive starting tau.
    """

    kind: str
    tau: float

    def __post_init__(self):
        if self.kind not in PENALTY_KINDS:
            raise ValueError(f"penalty kind must be one of {PENALTY_KINDS}, got {self.kind!r}")
        if not np.isfinite(self.tau) or self.tau < 0:
            raise ValueError(f"tau must be finite and >= 0, got {self.tau}")


def violation_term(spec: PenaltySpec, g_row: Array) -> float:
    """Penalty contribution of one sample's raw constraint values."""
    v = np.maximum(0.0, g_row)
    if spec.kind == "quadratic":
        return 0.5 * spec.tau * float((v * v).sum())
    return spec.tau * float(v.sum())


def constraint_weights(spec: PenaltySpec, g: Array) -> Array:
    """Weights w_ij such that the penalty gradient is grad f + sum w_ij grad g_ij."""
    g = np.asarray(g, dtype=float)
    if spec.kind == "quadratic":
        return spec.tau * np.maximum(0.0, g)
    return spec.tau * (g > 0).astype(float)


def penalty_value_sample(problem: FiniteSumProblem, spec: PenaltySpec, j: int, x) -> float:
    x = as_params(problem, x)
    f = float(problem.sample_objective(j, x))
    g = np.asarray(problem.sample_constraints(j, x), dtype=float)
    return f + violation_term(spec, g)


def penalty_value_full(problem: FiniteSumProblem, spec: PenaltySpec, x) -> float:
    """Aggregate penalty value per the problem's normalization."""
    x = as_params(problem, x)
    f = objective_values(problem, x).sum()
    g = constraint_values(problem, x)
    v = np.maximum(0.0, g)
    if spec.kind == "quadratic":
        pen = 0.5 * spec.tau * float((v * v).sum())
    else:
        pen = spec.tau * float(v.sum())
    return float(problem.agg_scale * (f + pen))


def penalty_grad_sample(problem: FiniteSumProblem, spec: PenaltySpec, j: int, x) -> Array:
    x = as_params(problem, x)
    g = np.asarray(problem.sample_constraints(j, x), dtype=float)
    grad = np.asarray(problem.sample_objective_grad(j, x), dtype=float).copy()
    w = constraint_weights(spec, g)
    active = np.flatnonzero(w)
    if active.size:
        jac = np.asarray(problem.sample_constraint_jacobian(j, x), dtype=float)
        jac = jac.reshape(problem.num_constraints, problem.dim)
        grad = grad + w[active] @ jac[active]
    return grad


def penalty_grad_batch(problem: FiniteSumProblem, spec: PenaltySpec, indices, x) -> Array:
    """Sum over the given samples of the per-sample penalty gradients.

    No normalization scaling is applied; callers own the estimator scaling.
    """
    x = as_params(problem, x)
    indices = np.asarray(indices, dtype=int)
    if problem.batch_weighted_grad is not None:
        if problem.batch_constraints is not None:
            g = np.asarray(problem.batch_constraints(indices, x), dtype=float)
            g = g.reshape(indices.size, problem.num_constraints)
        else:
            g = np.stack([np.asarray(problem.sample_constraints(j, x), dtype=float) for j in indices])
        return np.asarray(
            problem.batch_weighted_grad(indices, x, np.ones(indices.size), constraint_weights(spec, g)),
            dtype=float,
        )
    total = np.zeros(problem.dim)
    for j in indices:
        total += penalty_grad_sample(problem, spec, int(j), x)
    return total


def penalty_grad_full(problem: FiniteSumProblem, spec: PenaltySpec, x) -> Array:
    """Gradient of the aggregate penalty (exact, all samples)."""
    idx = np.arange(problem.num_samples)
    return problem.agg_scale * penalty_grad_batch(problem, spec, idx, x)


def multiplier_estimate(problem: FiniteSumProblem, spec: PenaltySpec, x) -> Array:
    """Per-(sample, constraint) multiplier estimates as an (N, m) matrix.

    Entries are nonnegative and vanish wherever the constraint is strictly
    satisfied, so complementarity holds by construction at the point where
    the estimate is taken.
    """
    g = constraint_values(problem, x)
    return constraint_weights(spec, g)
