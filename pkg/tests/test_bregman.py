import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spag import losses
from spag.bregman import (Preconditioner, bregman_divergence, default_mu, phi_grad,
                          relative_constants, relative_constants_quadratic)
from spag.concentration import BoundsInput, mu_quadratic
from spag.data import make_synthetic, subsample
from spag.errors import ArgumentError
from spag.losses import RegularizedLoss

from conftest import random_dataset
from test_losses import central_grad, rel_err


def test_phi_grad_mu_zero_is_local_gradient(small_logistic, rng):
    loss = RegularizedLoss("logistic", 0.01)
    p = Preconditioner(loss, small_logistic, 0.0)
    x = rng.standard_normal(8)
    np.testing.assert_array_equal(phi_grad(p, x), losses.loss_gradient(loss, small_logistic, x))


def test_phi_without_data_is_euclidean(rng):
    p = Preconditioner(RegularizedLoss("logistic", 0.0), None, 1.0)
    x, y = rng.standard_normal((2, 5))
    np.testing.assert_array_equal(phi_grad(p, x), x)
    assert bregman_divergence(p, x, y) == pytest.approx(0.5 * np.sum((x - y) ** 2), rel=1e-14)


@pytest.mark.parametrize("kind", ["logistic", "squared"])
def test_phi_grad_finite_differences(kind, rng):
    ds = random_dataset(rng, 50, 6, kind=kind)
    p = Preconditioner(RegularizedLoss(kind, 0.02), ds, 0.3)
    x = rng.standard_normal(6)
    assert rel_err(p.grad(x), central_grad(p.value, x)) <= 1e-5


def test_divergence_zero_on_diagonal(small_logistic, rng):
    p = Preconditioner(RegularizedLoss("logistic", 0.1), small_logistic, 0.2)
    x = rng.standard_normal(8)
    assert bregman_divergence(p, x, x) == 0.0


def test_divergence_quadratic_closed_form(small_ridge, rng):
    mu = 0.4
    loss = RegularizedLoss("squared", 0.05)
    p = Preconditioner(loss, small_ridge, mu)
    H0 = losses.hessian_dense(loss, small_ridge, np.zeros(8))
    for _ in range(5):
        x, y = rng.standard_normal((2, 8))
        expect = 0.5 * (x - y) @ (H0 + mu * np.eye(8)) @ (x - y)
        assert bregman_divergence(p, x, y) == pytest.approx(expect, rel=1e-12)


def test_divergence_matches_definition(small_logistic, rng):
    p = Preconditioner(RegularizedLoss("logistic", 0.1), small_logistic, 0.2)
    for _ in range(10):
        x, y = rng.standard_normal((2, 8))
        naive = p.value(x) - p.value(y) - p.grad(y) @ (x - y)
        assert bregman_divergence(p, x, y) == pytest.approx(naive, rel=1e-9)


@pytest.mark.parametrize("kind", ["logistic", "squared"])
def test_divergence_sandwich_and_positivity(kind, rng):
    ds = random_dataset(rng, 40, 5, kind=kind)
    p = Preconditioner(RegularizedLoss(kind, 0.05), ds, 0.1)
    for _ in range(100):
        x, y = rng.standard_normal((2, 5)) * rng.uniform(0.01, 5)
        D = p.divergence(x, y)
        sq = np.dot(x - y, x - y)
        assert D > 0
        assert D >= 0.5 * p.sigma_phi * sq - 1e-10
        assert D <= 0.5 * p.L_phi * sq + 1e-10


def test_preconditioner_constants(small_logistic):
    p = Preconditioner(RegularizedLoss("logistic", 0.1), small_logistic, 0.2)
    assert p.sigma_phi == pytest.approx(0.3)
    assert p.L_phi >= p.sigma_phi
    with pytest.raises(ArgumentError):
        Preconditioner(RegularizedLoss(), small_logistic, -1.0)


def test_relative_constants_examples():
    rc = relative_constants(1.0, 0.0)
    assert (rc.L_rel, rc.sigma_rel, rc.kappa_rel) == (1.0, 1.0, 1.0)
    rc = relative_constants(1e-5, 2e-5)
    assert rc.sigma_rel == pytest.approx(0.2, rel=1e-14)
    assert rc.kappa_rel == pytest.approx(5.0, rel=1e-14)
    assert relative_constants(1.0, 1.0).kappa_rel == pytest.approx(3.0)
    with pytest.raises(ArgumentError):
        relative_constants(0.0, 1.0)


def test_relative_constants_quadratic_examples():
    assert relative_constants_quadratic(1.0, 0.0).kappa_rel == pytest.approx(3.0)
    rc = relative_constants_quadratic(1.0, 0.25)
    assert rc.sigma_rel == pytest.approx(0.5) and rc.kappa_rel == pytest.approx(4.0)
    with pytest.raises(ArgumentError):
        relative_constants_quadratic(-1.0, 0.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-8, 1e3), st.floats(0, 1e3))
def test_quadratic_kappa_identity(lam, mu):
    assert relative_constants_quadratic(lam, mu).kappa_rel == pytest.approx(3 + 4 * mu / lam, rel=1e-12)
    assert relative_constants(lam, mu).kappa_rel == pytest.approx(1 + 2 * mu / lam, rel=1e-12)


def test_default_mu():
    assert default_mu(2000) == pytest.approx(5e-5)


def test_relative_sandwich_dense_quadratic():
    # mu from the multiplicative bound certifies sigma H_phi <= H_F <= L H_phi
    ds = make_synthetic(8, 20000, "squared", 0.9, seed=1)
    lam = 1e-2
    loss = RegularizedLoss("squared", lam)
    n = 2000
    sample = ds.take(subsample(ds, n, seed=2).indices)
    mu = mu_quadratic(BoundsInput(R=1.0, n=n, d=8, delta=0.1, lam=lam)).mu
    rc = relative_constants_quadratic(lam, mu)
    H_F = losses.hessian_dense(loss, ds, np.zeros(8))
    H_phi = Preconditioner(loss, sample, mu).hessian(np.zeros(8))
    assert np.linalg.eigvalsh(H_F - rc.sigma_rel * H_phi)[0] >= -1e-10
    assert np.linalg.eigvalsh(rc.L_rel * H_phi - H_F)[0] >= -1e-10
