import numpy as np
import pytest

from seqpen import FiniteSumProblem
from seqpen.tasks.data import synthetic_digits
from seqpen.tasks.encdec import build_enc_dec_task
from seqpen.tasks.qp import qp_registry


def make_scalar_problem(f, fgrad, g, ggrad, normalization="sum"):
    """One-sample, one-constraint problem over a single variable."""
    return FiniteSumProblem(
        dim=1,
        num_samples=1,
        num_constraints=1,
        sample_objective=lambda j, x: f(x[0]),
        sample_objective_grad=lambda j, x: np.array([fgrad(x[0])]),
        sample_constraints=lambda j, x: np.array([g(x[0])]),
        sample_constraint_jacobian=lambda j, x: np.array([[ggrad(x[0])]]),
        normalization=normalization,
    )


def make_random_problem(dim, num_samples, num_constraints, seed, normalization="sum"):
    """Smooth quadratic objective/constraint samples with analytic gradients."""
    rng = np.random.default_rng(seed)
    obj_h = rng.normal(size=(num_samples, dim, dim))
    obj_h = obj_h @ obj_h.transpose(0, 2, 1) / dim + 0.1 * np.eye(dim)
    obj_d = rng.normal(size=(num_samples, dim))
    con_h = rng.normal(size=(num_samples, num_constraints, dim, dim)) / dim
    con_h = con_h + con_h.transpose(0, 1, 3, 2)
    con_e = rng.normal(size=(num_samples, num_constraints, dim))
    con_s = rng.normal(size=(num_samples, num_constraints))

    def sample_objective(j, x):
        return 0.5 * float(x @ obj_h[j] @ x) + float(obj_d[j] @ x)

    def sample_objective_grad(j, x):
        return obj_h[j] @ x + obj_d[j]

    def sample_constraints(j, x):
        return 0.5 * np.einsum("i,kij,j->k", x, con_h[j], x) + con_e[j] @ x + con_s[j]

    def sample_constraint_jacobian(j, x):
        return np.einsum("kij,j->ki", con_h[j], x) + con_e[j]

    return FiniteSumProblem(
        dim=dim,
        num_samples=num_samples,
        num_constraints=num_constraints,
        sample_objective=sample_objective,
        sample_objective_grad=sample_objective_grad,
        sample_constraints=sample_constraints,
        sample_constraint_jacobian=sample_constraint_jacobian,
        normalization=normalization,
    )


@pytest.fixture(scope="session")
def qps():
    return qp_registry()


@pytest.fixture(scope="session")
def qp_x_sq(qps):
    """min x^2 s.t. x >= 1 with x* = 1, lambda* = 2."""
    return qps["x_sq_ge_1"]


@pytest.fixture(scope="session")
def tiny_digits():
    """Small synthetic split pair for fast image-task tests."""
    return synthetic_digits(96, 32, rng_seed=5)


@pytest.fixture(scope="session")
def tiny_encdec():
    """Down-scaled encoder/decoder task whose exact gradients are cheap to audit."""
    rng = np.random.default_rng(11)
    images = np.clip(rng.random((12, 36)), 0.0, 1.0)
    labels = rng.integers(0, 10, size=12)

    from seqpen.tasks.data import ImageDataset

    ds = ImageDataset(images, labels, split="train")
    return build_enc_dec_task(ds, theta=0.01, hidden_dim=14, code_dim=6, decoder_hidden_dim=10)
