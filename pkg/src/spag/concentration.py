"""Hessian concentration: closed-form bounds on mu and empirical checks.

The calculators return the extra regularization ``mu`` that makes the
subsampled Hessian ``H_f`` close enough to the full one ``H_F``, together
with the relative constants that choice of ``mu`` certifies. The empirical
side measures ``||H_f(x) - H_F(x)||`` at probe points and checks the
quadratic-case sandwich by dense eigendecomposition.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import losses
from .bregman import relative_constants, relative_constants_quadratic
from .errors import ArgumentError

DENSE_LIMIT = 200


@dataclass(frozen=True)
class BoundsInput:
    R: float = 1.0
    n: int = 1000
    N: int = None
    d: int = 10
    delta: float = 0.1
    lam: float = 1e-3
    B_ell: float = 0.25
    M_ell: float = 1.0
    D: float = 1.0
    rho: float = None
    C_subg: float = 1.0

    def __post_init__(self):
        for name in ("R", "n", "d", "B_ell", "D"):
            if not getattr(self, name) > 0:
                raise ArgumentError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("lam", "M_ell", "C_subg"):
            if not getattr(self, name) >= 0:
                raise ArgumentError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0 < self.delta < 1:
            raise ArgumentError(f"delta must lie in (0, 1), got {self.delta}")
        if self.rho is not None and not 0 < self.rho <= self.R:
            raise ArgumentError(f"rho must lie in (0, R], got {self.rho}")
        if self.N is not None and self.N < self.n:
            raise ArgumentError("N must be >= n")


@dataclass
class BoundReport:
    mu: float
    sigma_rel: float
    L_rel: float
    kappa_rel: float
    regime: str
    validity_note: str = ""

    def to_dict(self):
        return asdict(self)


def _report(mu, regime, lam, quadratic=False, note=""):
    if lam > 0:
        rc = (relative_constants_quadratic if quadratic else relative_constants)(lam, mu)
        sigma, L, kappa = rc.sigma_rel, rc.L_rel, rc.kappa_rel
    else:
        sigma, L, kappa = 0.0, (2.0 if quadratic else 1.0), math.inf
        note = (note + "; " if note else "") + "lam = 0: relative strong convexity is 0"
    return BoundReport(mu=mu, sigma_rel=sigma, L_rel=L, kappa_rel=kappa, regime=regime,
                       validity_note=note)


def mu_hoeffding(inp):
    """Additive matrix-Hoeffding bound ``(R^2 / sqrt n) sqrt(32 log(d / delta))``."""
    mu = inp.R ** 2 / math.sqrt(inp.n) * math.sqrt(32.0 * math.log(inp.d / inp.delta))
    note = "fixed-point bound; holds at a single x" if inp.d / inp.delta > 1 else ""
    return _report(mu, "hoeffding", inp.lam, note=note)


def mu_quadratic(inp):
    """Multiplicative bound for quadratic losses.

    ``mu = ((28 R^2 / (3 n)) log(2d/delta) - lam)^+ / 2`` with the
    constants ``L = 2, sigma = 1/(3/2 + 2 mu/lam)``.
    """
    threshold = 28.0 / 3.0 * math.log(2.0 * inp.d / inp.delta)
    mu = 0.5 * max(28.0 * inp.R ** 2 / (3.0 * inp.n) * math.log(2.0 * inp.d / inp.delta)
                   - inp.lam, 0.0)
    note = "" if inp.n > threshold else (
        f"n = {inp.n} <= {threshold:.4g}: sample-size condition of the bound not met")
    return _report(mu, "quadratic", inp.lam, quadratic=True, note=note)


def mu_bounded(inp):
    """Uniform bound over the ball of radius D for bounded, M-Lipschitz l''."""
    mu = (math.sqrt(4.0 * math.pi) * inp.R ** 2 / math.sqrt(inp.n)
          * (inp.B_ell * (2.0 + math.sqrt(math.log(1.0 / inp.delta) / (2.0 * math.pi)))
             + inp.R * inp.M_ell * inp.D))
    return _report(mu, "bounded", inp.lam)


def mu_subgaussian(inp):
    """Sub-Gaussian-design bound; ``C_subg`` is an unspecified absolute constant."""
    rho = inp.R if inp.rho is None else inp.rho
    if inp.M_ell == 0:
        raise ArgumentError("sub-Gaussian bound needs M_ell > 0")
    B_tilde = inp.B_ell / (inp.M_ell * inp.D)
    mu = (inp.C_subg * rho ** 2 * inp.M_ell * inp.D / math.sqrt(inp.n)
          * (inp.d + math.log(1.0 / inp.delta))
          * ((rho + B_tilde) / math.sqrt(inp.d)
             + (rho + (inp.R ** 2 * B_tilde) ** (1.0 / 3.0)) / math.sqrt(inp.n)))
    return _report(mu, "subgaussian", inp.lam,
                   note=f"constant C = {inp.C_subg} unverified")


REGIMES = {
    "hoeffding": mu_hoeffding,
    "quadratic": mu_quadratic,
    "bounded": mu_bounded,
    "subgaussian": mu_subgaussian,
}


@dataclass
class GapEstimate:
    value: float
    converged: bool
    per_probe: list


def _gap_norm(loss, full, sample, x, power_iters, tol, rng):
    d = full.n_features

    def op(v):
        # the ridge term cancels in the difference
        data_loss = loss.with_lam(0.0)
        return (losses.hessian_vec_product(data_loss, sample, x, v)
                - losses.hessian_vec_product(data_loss, full, x, v))

    v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(power_iters):
        w = op(v)
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0, True
        theta = float(np.dot(v, w))
        prev, est = est, max(est, nw)
        # Ritz residual bounds the distance from theta to the spectrum
        if abs(theta) > 0 and np.linalg.norm(w - theta * v) <= tol * abs(theta):
            return max(est, abs(theta)), True
        # +/- pairs of equal magnitude never settle theta, but ||Mv|| still does
        if est - prev <= 1e-3 * tol * est:
            return est, True
        v = w / nw
    return est, False


def empirical_hessian_gap(loss, full_ds, sample, probe_points, power_iters=300, seed=0,
                          tol=1e-4):
    """Largest ``||H_f(x) - H_F(x)||`` over the probe points.

    ``sample`` is the preconditioning dataset (or an index array into
    ``full_ds``). Each norm comes from power iteration on the difference of
    Hessian-vector products, so no d-by-d matrix is formed. The maximum
    over probes underestimates the supremum over the ball.
    """
    if power_iters < 30:
        raise ArgumentError("power_iters must be >= 30")
    probes = [np.asarray(p, dtype=np.float64) for p in probe_points]
    if not probes:
        raise ArgumentError("need at least one probe point")
    if not hasattr(sample, "n_examples"):
        sample = full_ds.take(sample)
    rng = np.random.default_rng(seed)
    per_probe, ok = [], True
    for x in probes:
        val, conv = _gap_norm(loss, full_ds, sample, x, power_iters, tol, rng)
        per_probe.append(val)
        ok = ok and conv
    return GapEstimate(max(per_probe), ok, per_probe)


def default_probes(d, D=1.0, count=20, seed=0, extra=()):
    """Origin, ``count`` uniform points in the ball of radius D, plus ``extra``."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((count, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radii = D * rng.random(count) ** (1.0 / d)
    return [np.zeros(d)] + list(g * radii[:, None]) + [np.asarray(e) for e in extra]


def sandwich_check_quadratic(loss, full_ds, sample, mu, slack=1e-10):
    """Check ``(3/2 + 2mu/lam)^-1 (H_f + mu I) <= H_F <= 2 (H_f + mu I)``.

    Both orderings are tested through the smallest eigenvalue of the
    difference matrix. Dense, so limited to ``d <= 200``.
    """
    d = full_ds.n_features
    if d > DENSE_LIMIT:
        raise ArgumentError(
            f"d = {d} too large for dense assembly; use empirical_hessian_gap instead")
    if not loss.lam > 0:
        raise ArgumentError("sandwich check needs lam > 0")
    if not hasattr(sample, "n_examples"):
        sample = full_ds.take(sample)
    x = np.zeros(d)
    H_F = losses.hessian_dense(loss, full_ds, x)
    P = losses.hessian_dense(loss, sample, x) + mu * np.eye(d)
    c = 1.0 / (1.5 + 2.0 * mu / loss.lam)
    lower = np.linalg.eigvalsh(H_F - c * P)[0]
    upper = np.linalg.eigvalsh(2.0 * P - H_F)[0]
    return bool(lower >= -slack and upper >= -slack)
