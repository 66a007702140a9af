import numpy as np
import pytest

from seqpen import elicq_check, kkt_residual
from seqpen.tasks.qp import QPCertificationError, build_analytic_qp, qp_registry


def test_registry_solutions():
    reg = qp_registry()
    assert reg["x_sq_ge_1"].x_star == pytest.approx([1.0])
    assert reg["x_sq_ge_1"].lambda_star == pytest.approx([2.0])
    assert reg["sum_ge_2"].x_star == pytest.approx([1.0, 1.0])
    assert reg["sum_ge_2"].lambda_star == pytest.approx([2.0])
    assert reg["inactive_box"].x_star == pytest.approx([0.5])
    assert reg["inactive_box"].lambda_star == pytest.approx([0.0])


def test_certification_holds(qps):
    for name, qp in qps.items():
        rep = kkt_residual(qp.problem, qp.x_star, qp.lambda_star.reshape(1, -1))
        assert rep.is_eps_kkt(1e-10), name
        assert elicq_check(qp.problem, qp.x_star, act_tol=1e-8).holds, name


def test_multi_constraint_certification():
    # min ||x - (2, 2)||^2 s.t. x <= 1 componentwise: solution (1, 1), multipliers (2, 2)
    qp = build_analytic_qp(2 * np.eye(2), [-4.0, -4.0], np.eye(2), [1.0, 1.0])
    assert qp.x_star == pytest.approx([1.0, 1.0])
    assert qp.lambda_star == pytest.approx([2.0, 2.0])


def test_non_positive_definite_rejected():
    with pytest.raises(ValueError, match="positive definite"):
        build_analytic_qp([[0.0]], [1.0], [[1.0]], [1.0])


def test_infeasible_problem_rejected():
    # x <= -1 and x >= 1 cannot both hold
    with pytest.raises(QPCertificationError):
        build_analytic_qp([[2.0]], [0.0], [[1.0], [-1.0]], [-1.0, -1.0])


def test_objective_and_lipschitz():
    qp = qp_registry()["x_sq_ge_1"]
    assert qp.objective([3.0]) == pytest.approx(9.0)
    # eig_max(Q) + tau * ||a||^2 = 2 + 10
    assert qp.penalty_lipschitz(10.0) == pytest.approx(12.0)


def test_problem_batch_oracles_consistent():
    qp = qp_registry()["sum_ge_2"]
    prob = qp.problem
    x = np.array([0.3, -0.7])
    idx = np.array([0, 0, 0])
    assert np.allclose(prob.batch_constraints(idx, x), np.tile(prob.sample_constraints(0, x), (3, 1)))
    obj_w = np.array([1.0, 2.0, 0.5])
    con_w = np.array([[0.1], [0.0], [2.0]])
    expected = sum(
        w * prob.sample_objective_grad(0, x) + c[0] * prob.sample_constraint_jacobian(0, x)[0]
        for w, c in zip(obj_w, con_w)
    )
    assert np.allclose(prob.batch_weighted_grad(idx, x, obj_w, con_w), expected)
