"""Regularized empirical losses of linear models.

For a dataset with rows ``a_i`` and labels ``b_i``::

    f(x) = (1/n) sum_i l_i(a_i^T x) + (lam/2) ||x||^2

with ``l_i(u) = log(1 + exp(-b_i u))`` (logistic) or ``(u - b_i)^2 / 2``
(squared). Every sum runs over examples in ascending index order, so
repeated calls are bitwise reproducible.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla
from scipy.special import expit

from .errors import ArgumentError, NumericalError

KINDS = ("logistic", "squared")


@dataclass(frozen=True)
class ScalarLossProfile:
    """Uniform bound ``B_ell`` on l'' and Lipschitz constant ``M_ell`` of l''."""

    B_ell: float
    M_ell: float


PROFILES = {
    "logistic": ScalarLossProfile(B_ell=0.25, M_ell=1.0),
    "squared": ScalarLossProfile(B_ell=1.0, M_ell=0.0),
}


@dataclass(frozen=True)
class RegularizedLoss:
    kind: str = "logistic"
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if not self.lam >= 0:
            raise ArgumentError(f"lam must be >= 0, got {self.lam}")

    @property
    def profile(self):
        return PROFILES[self.kind]

    def with_lam(self, lam):
        return RegularizedLoss(self.kind, lam)

    def check_labels(self, ds):
        if self.kind == "logistic" and not ds.is_binary():
            raise ArgumentError(
                f"logistic loss needs labels in {{-1, +1}}, got {sorted(ds.label_set())[:5]}")


def _view(ds, subset):
    if subset is not None:
        subset = np.asarray(subset)
        if subset.size == 0:
            raise ArgumentError("empty subset")
        ds = ds.take(subset)
    if ds.n_examples == 0:
        raise ArgumentError("empty subset")
    return ds


def softplus(t):
    """``log(1 + exp(t))`` without overflow."""
    return np.maximum(t, 0.0) + np.log1p(np.exp(-np.abs(t)))


def scalar_loss(kind, u, b):
    if kind == "logistic":
        return softplus(-b * u)
    return 0.5 * (u - b) ** 2


def scalar_derivative(kind, u, b):
    if kind == "logistic":
        return -b * expit(-b * u)
    return u - b


def scalar_second_derivative(loss, u):
    """l''(u); for logistic this is ``sigma(u) sigma(-u)`` whatever the label."""
    kind = loss.kind if isinstance(loss, RegularizedLoss) else loss
    u = np.asarray(u, dtype=np.float64)
    if kind == "logistic":
        # sigma(u) sigma(-u) = 1 / (4 cosh^2(u/2)); this form never exceeds 1/4
        with np.errstate(over="ignore"):
            out = 0.25 / np.cosh(0.5 * u) ** 2
    else:
        out = np.ones_like(u)
    return out if out.ndim else float(out)


def softplus_divergence(t0, h):
    """Bregman divergence of softplus between ``t0 + h`` and ``t0``.

    Equal to ``log E exp(h (X - p))`` for ``X ~ Bernoulli(p)``,
    ``p = sigmoid(t0)``. It is symmetric under ``(t0, h) -> (-t0, -h)``, so
    only ``p <= 1/2`` is evaluated; there ``log1p(p expm1(h)) - p h`` is
    accurate except for tiny ``h``, where the cumulant series takes over.
    """
    t0, h = np.broadcast_arrays(np.asarray(t0, dtype=np.float64),
                                np.asarray(h, dtype=np.float64))
    flip = t0 > 0
    t0 = np.where(flip, -t0, t0)
    h = np.where(flip, -h, h)
    p = expit(t0)
    pq = p * expit(-t0)
    closed = np.log1p(p * np.expm1(h)) - p * h
    # cumulants 2..6 of a centred Bernoulli(p)
    skew = 1.0 - 2.0 * p
    k2, k3 = pq, pq * skew
    k4 = pq * (1.0 - 6.0 * pq)
    k5 = k3 * (1.0 - 12.0 * pq)
    k6 = pq * (1.0 - 30.0 * pq + 120.0 * pq * pq)
    series = h * h * (k2 / 2 + h * (k3 / 6 + h * (k4 / 24 + h * (k5 / 120 + h * k6 / 720))))
    out = np.where(np.abs(h) < 5e-3, series, closed)
    return np.maximum(out, 0.0)


def loss_value(loss, ds, x, subset=None):
    ds = _view(ds, subset)
    x = np.asarray(x, dtype=np.float64)
    u = ds.design @ x
    data = np.sum(scalar_loss(loss.kind, u, ds.labels)) / ds.n_examples
    return float(data + 0.5 * loss.lam * np.dot(x, x))


def loss_gradient(loss, ds, x, subset=None):
    ds = _view(ds, subset)
    x = np.asarray(x, dtype=np.float64)
    u = ds.design @ x
    w = scalar_derivative(loss.kind, u, ds.labels) / ds.n_examples
    return np.asarray(ds.design.T @ w).ravel() + loss.lam * x


def hessian_vec_product(loss, ds, x, v, subset=None):
    ds = _view(ds, subset)
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    A = ds.design
    curv = scalar_second_derivative(loss, A @ x) if loss.kind == "logistic" else 1.0
    w = curv * (A @ v) / ds.n_examples
    return np.asarray(A.T @ w).ravel() + loss.lam * v


def hessian_dense(loss, ds, x, subset=None):
    """Assemble the d-by-d Hessian. Only meant for small ``d``."""
    ds = _view(ds, subset)
    A = ds.X.toarray()
    curv = scalar_second_derivative(loss, A @ np.asarray(x, dtype=np.float64)) \
        if loss.kind == "logistic" else np.ones(ds.n_examples)
    H = (A.T * curv) @ A / ds.n_examples
    H += loss.lam * np.eye(ds.n_features)
    return 0.5 * (H + H.T)


def loss_divergence(loss, ds, x, y, subset=None):
    """``f(x) - f(y) - grad f(y)^T (x - y)`` evaluated without cancellation."""
    ds = _view(ds, subset)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    delta = x - y
    A = ds.design
    du = A @ delta
    if loss.kind == "logistic":
        b = ds.labels
        terms = softplus_divergence(-b * (A @ y), -b * du)
    else:
        terms = 0.5 * du * du
    return float(np.sum(terms) / ds.n_examples + 0.5 * loss.lam * np.dot(delta, delta))


def top_eigenvalue(matvec, d, tol=1e-10, max_iter=10_000, seed=0):
    """Largest eigenvalue of a symmetric PSD operator (Lanczos, dense for small d)."""
    if d == 0:
        return 0.0
    if d <= 64:
        M = np.column_stack([matvec(e) for e in np.eye(d)])
        return float(np.linalg.eigvalsh(0.5 * (M + M.T))[-1])
    op = spla.LinearOperator((d, d), matvec=matvec, dtype=np.float64)
    v0 = np.random.default_rng(seed).standard_normal(d)
    try:
        val = spla.eigsh(op, k=1, which="LA", tol=tol, maxiter=max_iter, v0=v0,
                         return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise NumericalError(f"Lanczos did not converge: {exc}") from None
    return float(val[0])


def smoothness_upper_bound(loss, ds, subset=None, tol=1e-10, max_iter=10_000):
    """``B_ell * lambda_max(A^T A / n) + lam``, a bound on ``||hess f(x)||``."""
    ds = _view(ds, subset)
    A = ds.design
    n = ds.n_examples

    def gram(v):
        return np.asarray(A.T @ (A @ v)).ravel() / n

    top = top_eigenvalue(gram, ds.n_features, tol=tol, max_iter=max_iter)
    return loss.profile.B_ell * top + loss.lam
