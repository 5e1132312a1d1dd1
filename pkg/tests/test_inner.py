import numpy as np
import pytest

from spag import losses
from spag.bregman import Preconditioner
from spag.errors import ArgumentError
from spag.inner import (DEFAULT_TOL, InnerProblem, dane_problem, dane_step, inner_gradient,
                        solve_inner)
from spag.losses import RegularizedLoss

from conftest import random_dataset
from test_losses import central_grad, rel_err


@pytest.fixture
def logistic_precond(rng):
    return Preconditioner(RegularizedLoss("logistic", 0.01), random_dataset(rng, 80, 6), 0.05)


@pytest.fixture
def ridge_precond(rng):
    return Preconditioner(RegularizedLoss("squared", 0.01), random_dataset(rng, 80, 5, "squared"), 0.1)


def test_gradient_at_anchor_is_scaled_g(logistic_precond, rng):
    g = rng.standard_normal(6)
    v = rng.standard_normal(6)
    prob = InnerProblem(logistic_precond, g, 0.7, v, rng.standard_normal(6), beta=0.0)
    np.testing.assert_allclose(inner_gradient(prob, v), 0.7 * g, atol=1e-15)


def test_gradient_zero_when_everything_coincides(logistic_precond, rng):
    v = rng.standard_normal(6)
    prob = InnerProblem(logistic_precond, np.zeros(6), 1.0, v, v, beta=0.3)
    np.testing.assert_array_equal(inner_gradient(prob, v), 0.0)


def test_gradient_matches_finite_differences(logistic_precond, rng):
    prob = InnerProblem(logistic_precond, rng.standard_normal(6), 0.4, rng.standard_normal(6),
                        rng.standard_normal(6), beta=0.35)
    x = rng.standard_normal(6)
    assert rel_err(inner_gradient(prob, x), central_grad(prob.value, x)) <= 1e-5


def test_gradient_formula(logistic_precond, rng):
    p = logistic_precond
    g, v, y, x = rng.standard_normal((4, 6))
    prob = InnerProblem(p, g, 0.9, v, y, beta=0.25)
    expect = 0.9 * g + p.grad(x) - 0.75 * p.grad(v) - 0.25 * p.grad(y)
    np.testing.assert_allclose(inner_gradient(prob, x), expect, rtol=1e-12, atol=1e-15)


def test_solve_matches_dense_linear_solve(ridge_precond, rng):
    p = ridge_precond
    g, v, y = rng.standard_normal((3, 5))
    eta, beta = 0.8, 0.4
    prob = InnerProblem(p, g, eta, v, y, beta=beta)
    H = p.hessian(np.zeros(5))
    # grad V = H x + (grad phi(0) terms) : solve H x = -shift - grad phi(0)
    rhs = -(prob.shift + p.grad(np.zeros(5)))
    direct = np.linalg.solve(H, rhs)
    sol = solve_inner(prob, v, tol=1e-12)
    assert sol.converged and sol.grad_norm <= 1e-12
    assert np.linalg.norm(sol.x - direct) <= 1e-8


def test_zero_gradient_returns_anchor(logistic_precond, rng):
    v = rng.standard_normal(6)
    prob = InnerProblem(logistic_precond, np.zeros(6), 1.0, v, rng.standard_normal(6), beta=0.0)
    sol = solve_inner(prob, v)
    assert sol.iterations == 0
    np.testing.assert_array_equal(sol.x, v)


def test_default_tolerance():
    assert DEFAULT_TOL == 1e-9


def test_truncation_is_flagged(logistic_precond, rng):
    prob = InnerProblem(logistic_precond, rng.standard_normal(6) * 10, 1.0, np.zeros(6),
                        np.zeros(6), beta=0.0)
    sol = solve_inner(prob, np.zeros(6), tol=1e-14, max_passes=5)
    assert not sol.converged
    assert sol.passes == 5
    assert sol.grad_norm == pytest.approx(np.linalg.norm(inner_gradient(prob, sol.x)))


def test_bad_problem_parameters(logistic_precond):
    z = np.zeros(6)
    with pytest.raises(ArgumentError):
        InnerProblem(logistic_precond, z, 0.0, z, z)
    with pytest.raises(ArgumentError):
        InnerProblem(logistic_precond, z, 1.0, z, z, beta=1.5)
    with pytest.raises(ArgumentError):
        solve_inner(InnerProblem(logistic_precond, z, 1.0, z, z), z, tol=0.0)


def test_monotone_and_three_point_descent(logistic_precond, rng):
    p = logistic_precond
    for _ in range(5):
        g, v, y, start = rng.standard_normal((4, 6))
        beta = rng.uniform(0, 0.9)
        prob = InnerProblem(p, g, rng.uniform(0.1, 2), v, y, beta=beta)
        tol = 1e-9
        sol = solve_inner(prob, start, tol=tol)
        assert prob.value(sol.x) <= prob.value(start)
        # V(v+) <= V(x) - D(x, v+) up to inexactness, for any test point x
        for _ in range(10):
            x = sol.x + rng.standard_normal(6) * rng.uniform(0.01, 3)
            lhs = prob.value(sol.x) + p.divergence(x, sol.x)
            assert lhs <= prob.value(x) + 10 * tol * np.linalg.norm(x - sol.x) + 1e-13


def test_solver_deterministic(logistic_precond, rng):
    g, v, y = rng.standard_normal((3, 6))
    a = solve_inner(InnerProblem(logistic_precond, g, 1.0, v, y, beta=0.2), v)
    b = solve_inner(InnerProblem(logistic_precond, g, 1.0, v, y, beta=0.2), v)
    np.testing.assert_array_equal(a.x, b.x)
    assert a.passes == b.passes


def test_dane_step_stationary(logistic_precond, rng):
    x = rng.standard_normal(6)
    sol = dane_step(logistic_precond, x, np.zeros(6))
    np.testing.assert_array_equal(sol.x, x)


def test_dane_step_one_shot_when_phi_is_F(rng):
    ds = random_dataset(rng, 200, 10, "squared")
    loss = RegularizedLoss("squared", 1e-3)
    p = Preconditioner(loss, ds, 0.0)
    x_star = np.linalg.solve(losses.hessian_dense(loss, ds, np.zeros(10)),
                             -losses.loss_gradient(loss, ds, np.zeros(10)))
    x0 = rng.standard_normal(10) * 5
    sol = dane_step(p, x0, losses.loss_gradient(loss, ds, x0), tol=1e-12)
    assert np.linalg.norm(sol.x - x_star) <= 1e-8


def test_dane_step_matches_newton_like_formula(rng):
    full = random_dataset(rng, 300, 6, "squared")
    local = full.take(np.arange(60))
    loss = RegularizedLoss("squared", 0.05)
    mu, eta = 0.2, 0.7
    p = Preconditioner(loss, local, mu)
    x_t = rng.standard_normal(6)
    gF = losses.loss_gradient(loss, full, x_t)
    H = losses.hessian_dense(loss, local, x_t) + mu * np.eye(6)
    expect = x_t - eta * np.linalg.solve(H, gF)
    sol = dane_step(p, x_t, gF, eta=eta, tol=1e-12)
    assert np.linalg.norm(sol.x - expect) <= 1e-8


def test_dane_problem_shape(logistic_precond, rng):
    x = rng.standard_normal(6)
    prob = dane_problem(logistic_precond, x, np.ones(6), 2.0)
    assert prob.beta == 0.0 and np.array_equal(prob.v_anchor, prob.y_anchor)
