"""Reference function ``phi = f0 + (mu/2)||x||^2`` and its Bregman divergence.

``f0`` is the regularized loss over the server's preconditioning sample, so
``phi`` is simply the same loss evaluated with ridge weight ``lam + mu``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import losses
from .errors import ArgumentError


class Preconditioner:
    """Reference function built from a preconditioning dataset.

    Parameters
    ----------
    loss : RegularizedLoss
        Loss of the full problem; its ``lam`` is carried into ``f0``.
    data : SparseDataset or None
        Preconditioning examples. ``None`` drops ``f0`` altogether, leaving
        the Euclidean reference ``(mu/2)||x||^2``.
    mu : float
        Extra ridge weight.
    """

    def __init__(self, loss, data, mu):
        if not mu >= 0:
            raise ArgumentError(f"mu must be >= 0, got {mu}")
        if data is not None and data.n_examples == 0:
            raise ArgumentError("preconditioning dataset is empty")
        self.loss = loss
        self.data = data
        self.mu = float(mu)
        self.phi_loss = loss.with_lam(loss.lam + self.mu)

    def __repr__(self):
        n = 0 if self.data is None else self.data.n_examples
        return f"Preconditioner(kind={self.loss.kind!r}, lam={self.loss.lam}, mu={self.mu}, n={n})"

    @property
    def n(self):
        return 0 if self.data is None else self.data.n_examples

    @property
    def sigma_phi(self):
        if self.data is None:
            return self.mu
        return self.loss.lam + self.mu

    @cached_property
    def L_phi(self):
        if self.data is None:
            return self.mu
        return losses.smoothness_upper_bound(self.loss, self.data) + self.mu

    @property
    def kappa_phi(self):
        return self.L_phi / self.sigma_phi

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.data is None:
            return 0.5 * self.mu * float(np.dot(x, x))
        return losses.loss_value(self.phi_loss, self.data, x)

    def grad(self, x):
        x = np.asarray(x, dtype=np.float64)
        if self.data is None:
            return self.mu * x
        return losses.loss_gradient(self.phi_loss, self.data, x)

    def hvp(self, x, v):
        v = np.asarray(v, dtype=np.float64)
        if self.data is None:
            return self.mu * v
        return losses.hessian_vec_product(self.phi_loss, self.data, x, v)

    def hessian(self, x):
        if self.data is None:
            return self.mu * np.eye(len(x))
        return losses.hessian_dense(self.phi_loss, self.data, x)

    def divergence(self, x, y):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if self.data is None:
            delta = x - y
            return 0.5 * self.mu * float(np.dot(delta, delta))
        return losses.loss_divergence(self.phi_loss, self.data, x, y)


def phi_grad(p, x):
    return p.grad(x)


def bregman_divergence(p, x, y):
    """``phi(x) - phi(y) - grad phi(y)^T (x - y)``."""
    return p.divergence(x, y)


@dataclass(frozen=True)
class RelativeConstants:
    L_rel: float
    sigma_rel: float

    @property
    def kappa_rel(self):
        return self.L_rel / self.sigma_rel


def relative_constants(lam, mu):
    """Constants implied by ``||H_f - H_F|| <= mu``: L = 1, sigma = lam/(lam + 2 mu)."""
    if not lam > 0:
        raise ArgumentError(f"lam must be positive, got {lam}")
    if not mu >= 0:
        raise ArgumentError(f"mu must be >= 0, got {mu}")
    return RelativeConstants(L_rel=1.0, sigma_rel=lam / (lam + 2.0 * mu))


def relative_constants_quadratic(lam, mu):
    """Multiplicative sandwich for quadratic losses: L = 2, sigma = 1/(3/2 + 2 mu/lam)."""
    if not lam > 0:
        raise ArgumentError(f"lam must be positive, got {lam}")
    if not mu >= 0:
        raise ArgumentError(f"mu must be >= 0, got {mu}")
    return RelativeConstants(L_rel=2.0, sigma_rel=1.0 / (1.5 + 2.0 * mu / lam))


def default_mu(n):
    """Starting value for the mu search."""
    return 0.1 / n
