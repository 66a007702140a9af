import numpy as np
import pytest

from seqpen import (
    PenaltySpec,
    constraint_values,
    full_objective,
    multiplier_estimate,
    penalty_grad_full,
    penalty_grad_sample,
    penalty_value_full,
    penalty_value_sample,
    violation_vector,
)
from seqpen.gradcheck import central_diff_gradient, gradient_rel_error

from conftest import make_random_problem, make_scalar_problem


@pytest.fixture
def qp1d():
    # f = x^2, g = 1 - x (the constraint x >= 1)
    return make_scalar_problem(lambda x: x * x, lambda x: 2 * x, lambda x: 1 - x, lambda x: -1.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        PenaltySpec("cubic", 1.0)
    with pytest.raises(ValueError):
        PenaltySpec("quadratic", -1.0)
    assert PenaltySpec("linear", 0.0).tau == 0.0


def test_penalty_value_sample_hand_cases(qp1d):
    x0 = np.array([0.0])
    assert penalty_value_sample(qp1d, PenaltySpec("quadratic", 2.0), 0, x0) == pytest.approx(1.0)
    assert penalty_value_sample(qp1d, PenaltySpec("linear", 2.0), 0, x0) == pytest.approx(2.0)
    feasible = np.array([2.0])
    for kind in ("quadratic", "linear"):
        assert penalty_value_sample(qp1d, PenaltySpec(kind, 2.0), 0, feasible) == pytest.approx(4.0)


def test_penalty_value_full_cases(qp1d):
    assert penalty_value_full(qp1d, PenaltySpec("quadratic", 2.0), np.array([0.0])) == pytest.approx(1.0)
    # doubling tau doubles the violation term at a fixed infeasible point
    assert penalty_value_full(qp1d, PenaltySpec("quadratic", 4.0), np.array([0.0])) == pytest.approx(2.0)
    x = np.array([3.0])
    for kind in ("quadratic", "linear"):
        assert penalty_value_full(qp1d, PenaltySpec(kind, 17.0), x) == full_objective(qp1d, x)


def test_penalty_grad_sample_hand_cases(qp1d):
    x0 = np.array([0.0])
    assert penalty_grad_sample(qp1d, PenaltySpec("quadratic", 2.0), 0, x0)[0] == pytest.approx(-2.0)
    assert penalty_grad_sample(qp1d, PenaltySpec("linear", 2.0), 0, x0)[0] == pytest.approx(-2.0)
    assert penalty_grad_sample(qp1d, PenaltySpec("quadratic", 2.0), 0, np.array([2.0]))[0] == pytest.approx(4.0)


def test_multiplier_estimate_cases(qp1d):
    spec = PenaltySpec("quadratic", 2.0)
    assert multiplier_estimate(qp1d, spec, np.array([0.0]))[0, 0] == pytest.approx(2.0)
    assert multiplier_estimate(qp1d, spec, np.array([2.0]))[0, 0] == 0.0
    # linear kind applies tau itself wherever the constraint is violated
    assert multiplier_estimate(qp1d, PenaltySpec("linear", 3.0), np.array([0.0]))[0, 0] == pytest.approx(3.0)


def test_multiplier_estimate_properties():
    prob = make_random_problem(dim=3, num_samples=5, num_constraints=2, seed=7)
    rng = np.random.default_rng(8)
    for kind in ("quadratic", "linear"):
        spec = PenaltySpec(kind, 3.5)
        for _ in range(5):
            x = rng.normal(size=3)
            lam = multiplier_estimate(prob, spec, x)
            v = violation_vector(prob, x)
            assert (lam >= 0).all()
            assert np.all(lam[v == 0] == 0.0)


def test_penalty_dominates_objective_with_equality_iff_feasible():
    prob = make_random_problem(dim=3, num_samples=4, num_constraints=2, seed=9)
    rng = np.random.default_rng(10)
    for kind in ("quadratic", "linear"):
        spec = PenaltySpec(kind, 2.5)
        for _ in range(10):
            x = rng.normal(size=3)
            p = penalty_value_full(prob, spec, x)
            f = full_objective(prob, x)
            feasible = violation_vector(prob, x).max() == 0.0
            assert p >= f - 1e-12
            if feasible:
                assert p == pytest.approx(f, abs=1e-12)
            else:
                assert p > f


def test_penalty_monotone_in_tau_at_infeasible_point():
    prob = make_random_problem(dim=3, num_samples=4, num_constraints=2, seed=11)
    rng = np.random.default_rng(12)
    taus = [0.5, 1.0, 2.0, 4.0, 8.0]
    found_infeasible = 0
    for _ in range(20):
        x = rng.normal(size=3)
        if violation_vector(prob, x).max() == 0.0:
            continue
        found_infeasible += 1
        for kind in ("quadratic", "linear"):
            vals = [penalty_value_full(prob, PenaltySpec(kind, t), x) for t in taus]
            assert all(b > a for a, b in zip(vals, vals[1:]))
    assert found_infeasible >= 5


def test_penalty_grad_matches_finite_differences():
    prob = make_random_problem(dim=4, num_samples=5, num_constraints=2, seed=13)
    rng = np.random.default_rng(14)
    spec_q = PenaltySpec("quadratic", 3.0)
    spec_l = PenaltySpec("linear", 3.0)
    checked_linear = 0
    for _ in range(10):
        x = rng.normal(size=4)
        fd = central_diff_gradient(lambda p: penalty_value_full(prob, spec_q, p), x)
        assert gradient_rel_error(penalty_grad_full(prob, spec_q, x), fd) <= 1e-5
        # the linear kind is only differentiable away from the kinks g = 0
        g = constraint_values(prob, x)
        if np.abs(g).min() > 1e-3:
            fd = central_diff_gradient(lambda p: penalty_value_full(prob, spec_l, p), x)
            assert gradient_rel_error(penalty_grad_full(prob, spec_l, x), fd) <= 1e-5
            checked_linear += 1
    assert checked_linear >= 5


def test_quadratic_gradient_continuous_across_boundary():
    prob = make_scalar_problem(lambda x: x * x, lambda x: 2 * x, lambda x: 1 - x, lambda x: -1.0)
    spec = PenaltySpec("quadratic", 2.0)
    delta = 1e-10
    inside = penalty_grad_full(prob, spec, np.array([1.0 - delta]))[0]
    outside = penalty_grad_full(prob, spec, np.array([1.0 + delta]))[0]
    assert abs(inside - outside) <= 1e-8


def test_penalty_grad_batch_consistent_with_samples():
    from seqpen.penalties import penalty_grad_batch

    prob = make_random_problem(dim=3, num_samples=6, num_constraints=2, seed=15)
    spec = PenaltySpec("quadratic", 1.5)
    x = np.random.default_rng(16).normal(size=3)
    batch = np.array([0, 2, 2, 5])
    expected = sum(penalty_grad_sample(prob, spec, int(j), x) for j in batch)
    assert np.allclose(penalty_grad_batch(prob, spec, batch, x), expected, atol=1e-12)
