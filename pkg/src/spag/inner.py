"""Server-side subproblems.

Both SPAG and DANE need minimizers of

    V(x) = eta * g^T x + (1 - beta) D(x, v) + beta D(x, y)

where ``D`` is the Bregman divergence of the reference function. Up to a
constant this is ``phi(x) + c^T x`` with
``c = eta g - (1 - beta) grad phi(v) - beta grad phi(y)``, which is what the
solver works with.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9


@dataclass
class InnerProblem:
    precond: object
    g: np.ndarray
    eta: float
    v_anchor: np.ndarray
    y_anchor: np.ndarray
    beta: float = 0.0
    # phi-gradients at the anchors, each costing one data pass
    _shift: np.ndarray = field(default=None, repr=False)
    anchor_passes: int = field(default=0, repr=False)

    def __post_init__(self):
        if not self.eta > 0:
            raise ArgumentError(f"eta must be positive, got {self.eta}")
        if not 0 <= self.beta <= 1:
            raise ArgumentError(f"beta must lie in [0, 1], got {self.beta}")
        self.g = np.asarray(self.g, dtype=np.float64)
        self.v_anchor = np.asarray(self.v_anchor, dtype=np.float64)
        self.y_anchor = np.asarray(self.y_anchor, dtype=np.float64)

    @property
    def shift(self):
        if self._shift is None:
            c = self.eta * self.g
            same = self.beta == 0 or self.beta == 1 or np.array_equal(self.v_anchor, self.y_anchor)
            if same:
                anchor = self.y_anchor if self.beta == 1 else self.v_anchor
                c = c - self.precond.grad(anchor)
                self.anchor_passes = 1
            else:
                c = c - (1 - self.beta) * self.precond.grad(self.v_anchor) \
                    - self.beta * self.precond.grad(self.y_anchor)
                self.anchor_passes = 2
            self._shift = c
        return self._shift

    def value(self, x):
        """V(x), with the divergences evaluated without cancellation."""
        x = np.asarray(x, dtype=np.float64)
        out = self.eta * float(np.dot(self.g, x))
        if self.beta < 1:
            out += (1 - self.beta) * self.precond.divergence(x, self.v_anchor)
        if self.beta > 0:
            out += self.beta * self.precond.divergence(x, self.y_anchor)
        return out


@dataclass
class InnerSolution:
    x: np.ndarray
    grad_norm: float
    passes: int
    iterations: int
    converged: bool


def dane_problem(precond, x_t, grad_F, eta):
    return InnerProblem(precond, grad_F, eta, x_t, x_t, beta=0.0)


def inner_gradient(prob, x):
    return prob.precond.grad(x) + prob.shift


def solve_inner(prob, warm_start, tol=DEFAULT_TOL, max_passes=100_000):
    """Minimize ``V`` by accelerated gradient descent from ``warm_start``.

    Uses step ``1/L_phi`` and constant momentum for modulus ``sigma_phi``,
    restarting the momentum whenever it points uphill. Stops as soon as
    ``||grad V|| <= tol``; after ``max_passes`` gradient evaluations the
    best iterate so far is returned with ``converged=False``.
    """
    if not tol > 0:
        raise ArgumentError(f"tol must be positive, got {tol}")
    p = prob.precond
    c = prob.shift
    passes = prob.anchor_passes
    L = p.L_phi
    q = np.sqrt(p.sigma_phi / L)
    momentum = (1 - q) / (1 + q)

    y = np.array(warm_start, dtype=np.float64)
    x_prev = y
    grad = p.grad(y) + c
    passes += 1
    gnorm = float(np.linalg.norm(grad))
    best, best_norm = y, gnorm
    it = 0
    while gnorm > tol:
        if passes >= max_passes:
            log.info("inner solve truncated at %d passes, ||grad V|| = %.3e", passes, best_norm)
            return InnerSolution(best, best_norm, passes, it, False)
        x = y - grad / L
        if np.dot(grad, x - x_prev) > 0:
            y = x
        else:
            y = x + momentum * (x - x_prev)
        x_prev = x
        grad = p.grad(y) + c
        passes += 1
        it += 1
        gnorm = float(np.linalg.norm(grad))
        if gnorm < best_norm:
            best, best_norm = y, gnorm
    return InnerSolution(y, gnorm, passes, it, True)


def dane_step(precond, x_t, grad_F, eta=1.0, tol=DEFAULT_TOL, warm_start=None, max_passes=100_000):
    """``argmin_x grad_F^T x + D(x, x_t) / eta``; returns the full :class:`InnerSolution`."""
    prob = dane_problem(precond, x_t, grad_F, eta)
    start = x_t if warm_start is None else warm_start
    return solve_inner(prob, start, tol=tol, max_passes=max_passes)
