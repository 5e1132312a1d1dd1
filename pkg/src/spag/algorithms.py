"""SPAG and its baselines on top of a :class:`~spag.harness.Cluster`.

Every ``*_iterate`` function takes the current state, spends communication
rounds through ``cluster.aggregate_gradient`` and returns the next state
plus an :class:`IterationRecord`.
"""

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ArgumentError, DivergedError, InvalidConstantsError, NumericalError
from .inner import DEFAULT_TOL, InnerProblem, dane_step, solve_inner

GAIN_SLACK = 1e-12
RESCALE_AT = 2.0 ** 512


@dataclass
class ScheduleOut:
    a_next: float
    alpha: float
    beta: float
    eta: float
    A_next: float
    B_next: float


@dataclass
class SpagState:
    x: np.ndarray
    v: np.ndarray
    A: float = 0.0
    B: float = 1.0
    G_prev: float = 1.0
    iter: int = 0
    B0: float = 1.0
    gains: list = field(default_factory=list)
    # (A, B) are stored divided by 2**exp2 once they grow past RESCALE_AT
    exp2: int = 0

    @property
    def log_A(self):
        return math.log(self.A) + self.exp2 * math.log(2.0) if self.A > 0 else -math.inf

    @property
    def log_B(self):
        return math.log(self.B) + self.exp2 * math.log(2.0)


@dataclass
class PlainState:
    """State of the one-gradient-per-iteration baselines."""

    x: np.ndarray
    x_prev: np.ndarray
    iter: int = 0


@dataclass
class IterationRecord:
    iter: int
    comm_rounds: int
    gradient_evals: int
    suboptimality: float = float("nan")
    gain: float = float("nan")
    gain_trials: int = 0
    inner_passes: int = 0
    wall_ms: float = float("nan")
    x: np.ndarray = field(default=None, repr=False)
    v: np.ndarray = field(default=None, repr=False)
    A: float = float("nan")
    B: float = float("nan")
    log_A: float = float("nan")
    log_B: float = float("nan")


def _unscale(value, exp2):
    try:
        return math.ldexp(value, exp2)
    except OverflowError:
        return math.inf


def spag_schedule(A, B, L_rel, sigma_rel, G):
    """Solve ``a^2 L G = (A + a)(B + sigma a)`` for its positive root.

    alpha, beta and eta depend on (A, B) only through ``B / A``, so they
    are computed from ``s = a / A`` and stay finite however large A gets.
    When ``L G == sigma`` there is no finite root; the limit ``a -> inf``
    (alpha = beta = 1, eta = 1/sigma) is returned, which is a single
    Bregman proximal step with the exact relative step size.
    """
    LG = L_rel * G
    if not LG > 0:
        raise InvalidConstantsError(f"L_rel * G must be positive, got {LG}")
    if A < 0 or not B > 0:
        raise ArgumentError(f"need A >= 0 and B > 0, got A={A}, B={B}")
    q = LG - sigma_rel
    if q < 0:
        raise InvalidConstantsError(
            f"L_rel * G = {LG} < sigma_rel = {sigma_rel}: relative condition number below 1")
    if q == 0 or math.isinf(A):
        return ScheduleOut(math.inf, 1.0, 1.0, 1.0 / sigma_rel, math.inf, math.inf)
    if A == 0:
        a = B / q
        return ScheduleOut(a, 1.0, a * sigma_rel / (B + sigma_rel * a), a / (B + sigma_rel * a),
                           a, B + sigma_rel * a)
    if A < B * 1e-150:
        # B / A could overflow; A is tiny so the unscaled form is safe
        c = A * sigma_rel + B
        a = (c + math.sqrt(c * c + 4.0 * q * A * B)) / (2.0 * q)
        spread = B + sigma_rel * a
        return ScheduleOut(a, a / (A + a), sigma_rel * a / spread, a / spread, A + a, spread)
    r = B / A
    p = r + sigma_rel
    s = (p + math.sqrt(p * p + 4.0 * q * r)) / (2.0 * q)
    spread = r + sigma_rel * s
    return ScheduleOut(s * A, s / (1.0 + s), sigma_rel * s / spread, s / spread,
                       A * (1.0 + s), A * spread)


def spag_y(x, v, alpha, beta):
    """Extrapolation point ``((1-alpha) x + alpha (1-beta) v) / (1 - alpha beta)``."""
    if alpha == 1.0:
        return np.array(v, dtype=np.float64)
    denom = 1.0 - alpha * beta
    if not denom > 0:
        raise NumericalError(f"alpha * beta = {alpha * beta} >= 1")
    return ((1.0 - alpha) * np.asarray(x) + alpha * (1.0 - beta) * np.asarray(v)) / denom


@dataclass
class GainCheck:
    holds: bool
    lhs: float
    rhs: float


def gain_inequality_holds(precond, x_next, y, v_next, v, alpha, beta, G):
    """Triangle-scaling test ``D(x+, y) <= alpha^2 G [(1-beta) D(v+, v) + beta D(v+, y)]``."""
    lhs = precond.divergence(x_next, y)
    spread = 0.0
    if beta < 1:
        spread += (1.0 - beta) * precond.divergence(v_next, v)
    if beta > 0:
        spread += beta * precond.divergence(v_next, y)
    rhs = alpha * alpha * G * spread
    return GainCheck(lhs <= rhs + GAIN_SLACK, lhs, rhs)


def warm_start_state(x0, constants, t0=0):
    """SPAG state with (A, B) advanced as if ``t0`` iterations at G = 1 had run."""
    A, B, exp2 = 0.0, 1.0, 0
    for _ in range(t0):
        out = spag_schedule(A, B, constants.L_rel, constants.sigma_rel, 1.0)
        if math.isinf(out.A_next):
            break
        A, B = out.A_next, out.B_next
        if A > RESCALE_AT:
            A, B, exp2 = A / RESCALE_AT, B / RESCALE_AT, exp2 + 512
    x0 = np.array(x0, dtype=np.float64)
    # B_t = B_0 + sigma A_t holds exactly, with B_0 = 1
    return SpagState(x=x0, v=x0.copy(), A=A, B=B, G_prev=1.0, iter=0, B0=1.0, exp2=exp2)


def _record(cluster, state_iter, t_start, **kw):
    return IterationRecord(
        iter=state_iter,
        comm_rounds=cluster.ledger.rounds,
        gradient_evals=cluster.ledger.rounds,
        wall_ms=(time.perf_counter() - t_start) * 1e3,
        **kw)


def spag_iterate(state, cluster, constants, G_min=1.0, inner_tol=DEFAULT_TOL,
                 inner_max_passes=100_000):
    """One outer SPAG iteration including its gain search.

    The first trial gain is ``max(G_min, G_prev / 2)`` (floored at
    ``sigma_rel / L_rel`` so the schedule stays solvable); each rejected
    trial doubles it and costs one more communication round.
    """
    t_start = time.perf_counter()
    precond = cluster.precond
    L_rel, sigma_rel = constants.L_rel, constants.sigma_rel
    G = max(G_min, state.G_prev / 2.0, sigma_rel / L_rel)
    cap = 4.0 * precond.kappa_phi
    trials = 0
    passes = 0
    while True:
        if G > cap:
            raise DivergedError(f"gain search exceeded 4 * kappa_phi = {cap:.3g}")
        sched = spag_schedule(state.A, state.B, L_rel, sigma_rel, G)
        y = spag_y(state.x, state.v, sched.alpha, sched.beta)
        g = cluster.aggregate_gradient(y)
        trials += 1
        prob = InnerProblem(precond, g, sched.eta, state.v, y, beta=sched.beta)
        sol = solve_inner(prob, state.v, tol=inner_tol, max_passes=inner_max_passes)
        passes += sol.passes
        v_next = sol.x
        x_next = (1.0 - sched.alpha) * state.x + sched.alpha * v_next
        check = gain_inequality_holds(precond, x_next, y, v_next, state.v,
                                      sched.alpha, sched.beta, G)
        if check.holds:
            break
        G *= 2.0
    A_next, B_next, exp2 = sched.A_next, sched.B_next, state.exp2
    if A_next > RESCALE_AT:
        # only B/A enters the schedule, so a common power of two is harmless
        A_next, B_next, exp2 = A_next / RESCALE_AT, B_next / RESCALE_AT, exp2 + 512
    new = SpagState(x=x_next, v=v_next, A=A_next, B=B_next, G_prev=G,
                    iter=state.iter + 1, B0=state.B0, gains=state.gains + [G], exp2=exp2)
    rec = _record(cluster, new.iter, t_start, gain=G, gain_trials=trials,
                  inner_passes=passes, x=x_next, v=v_next, A=_unscale(A_next, exp2),
                  B=_unscale(B_next, exp2), log_A=new.log_A, log_B=new.log_B)
    return new, rec


def dane_iterate(state, cluster, L_rel=1.0, inner_tol=DEFAULT_TOL, inner_max_passes=100_000):
    """Bregman proximal gradient step with ``eta = 1 / L_rel``."""
    t_start = time.perf_counter()
    g = cluster.aggregate_gradient(state.x)
    sol = dane_step(cluster.precond, state.x, g, eta=1.0 / L_rel, tol=inner_tol,
                    max_passes=inner_max_passes)
    new = PlainState(x=sol.x, x_prev=state.x, iter=state.iter + 1)
    return new, _record(cluster, new.iter, t_start, inner_passes=sol.passes, x=sol.x)


def hb_dane_momentum(lam, mu):
    """Default heavy-ball weight ``(1 - (1 + 2 mu/lam)^(-1/2))^2``."""
    if not lam > 0:
        raise ArgumentError(f"lam must be positive, got {lam}")
    return (1.0 - (1.0 + 2.0 * mu / lam) ** -0.5) ** 2


def hb_dane_iterate(state, cluster, beta_hb, L_rel=1.0, inner_tol=DEFAULT_TOL,
                    inner_max_passes=100_000):
    """DANE step followed by heavy-ball extrapolation ``beta_hb (x_t - x_{t-1})``."""
    t_start = time.perf_counter()
    g = cluster.aggregate_gradient(state.x)
    sol = dane_step(cluster.precond, state.x, g, eta=1.0 / L_rel, tol=inner_tol,
                    max_passes=inner_max_passes)
    x_next = sol.x + beta_hb * (state.x - state.x_prev)
    new = PlainState(x=x_next, x_prev=state.x, iter=state.iter + 1)
    return new, _record(cluster, new.iter, t_start, inner_passes=sol.passes, x=x_next)


def agd_iterate(state, cluster, step, momentum):
    """Nesterov's method with constant momentum."""
    t_start = time.perf_counter()
    y = state.x + momentum * (state.x - state.x_prev)
    x_next = y - step * cluster.aggregate_gradient(y)
    new = PlainState(x=x_next, x_prev=state.x, iter=state.iter + 1)
    return new, _record(cluster, new.iter, t_start, x=x_next)


def pgd_iterate(state, cluster, step):
    """Plain gradient step (the proximal map is the identity for psi = 0)."""
    t_start = time.perf_counter()
    x_next = state.x - step * cluster.aggregate_gradient(state.x)
    new = PlainState(x=x_next, x_prev=state.x, iter=state.iter + 1)
    return new, _record(cluster, new.iter, t_start, x=x_next)


def agd_defaults(L_F, sigma_F):
    q = math.sqrt(sigma_F / L_F)
    return 1.0 / L_F, (1.0 - q) / (1.0 + q)


def theoretical_rate_certificate(sigma_rel, L_rel, gains):
    """Lower bound on ``A_t`` from the accepted gains.

    Returns ``(A_lower, pi_plus, pi_minus)`` with
    ``gamma = 1 / (2 sqrt(kappa_rel G))`` and
    ``A_lower = (pi_plus - pi_minus)^2 / (4 sigma_rel)``.
    """
    kappa = L_rel / sigma_rel
    pi_plus = pi_minus = 1.0
    for G in gains:
        if not G > 0:
            raise ArgumentError(f"gains must be positive, got {G}")
        gamma = 1.0 / (2.0 * math.sqrt(kappa * G))
        pi_plus *= 1.0 + gamma
        pi_minus *= 1.0 - gamma
    return (pi_plus - pi_minus) ** 2 / (4.0 * sigma_rel), pi_plus, pi_minus


def harmonic_gain(gains):
    """``G~`` such that ``G~^(-1/2)`` is the mean of ``G^(-1/2)``."""
    if not gains:
        return float("nan")
    mean = sum(g ** -0.5 for g in gains) / len(gains)
    return mean ** -2


def gain_upper_bound(precond, d_t, M):
    """Gain that provably satisfies the triangle-scaling test when phi'' is M-Lipschitz."""
    if d_t < 0 or M < 0:
        raise ArgumentError("d_t and M must be non-negative")
    return min(precond.kappa_phi, 1.0 + (M / precond.sigma_phi) * d_t)


def hessian_lipschitz_bound(precond):
    """``M_ell * R^3`` with ``R`` the largest preconditioning row norm."""
    if precond.data is None:
        return 0.0
    R = float(np.max(precond.data.row_norms, initial=0.0))
    return precond.loss.profile.M_ell * R ** 3


def gain_distance(x_next, v_next, v, y):
    return (np.linalg.norm(v_next - v) + np.linalg.norm(v_next - y)
            + np.linalg.norm(x_next - y))


@dataclass
class AlgorithmConfig:
    """Knobs for :func:`~spag.harness.run_experiment`.

    ``None`` entries are filled from the cluster: relative constants from
    ``relative_constants(lam, mu)``, AGD/PGD steps from the smoothness
    estimate of ``F``, HB-DANE momentum from :func:`hb_dane_momentum`.
    """

    name: str = "spag"
    L_rel: float = None
    sigma_rel: float = None
    G_min: float = 1.0
    t0: int = 50
    inner_tol: float = DEFAULT_TOL
    inner_max_passes: int = 100_000
    agd_step: float = None
    agd_momentum: float = None
    hb_beta: float = None
    pgd_step: float = None

    NAMES = ("spag", "dane", "hb-dane", "agd", "pgd")

    def __post_init__(self):
        if self.name not in self.NAMES:
            raise ArgumentError(f"unknown algorithm {self.name!r}; expected one of {self.NAMES}")
        if self.G_min < 0:
            raise ArgumentError("G_min must be >= 0")
        if self.t0 < 0:
            raise ArgumentError("t0 must be >= 0")
        if not self.inner_tol > 0:
            raise ArgumentError("inner_tol must be positive")

    def resolved(self, cluster):
        from .bregman import relative_constants

        cfg = replace(self)
        lam = cluster.loss.lam
        if cfg.L_rel is None or cfg.sigma_rel is None:
            rc = relative_constants(lam, cluster.precond.mu)
            cfg.L_rel = rc.L_rel if cfg.L_rel is None else cfg.L_rel
            cfg.sigma_rel = rc.sigma_rel if cfg.sigma_rel is None else cfg.sigma_rel
        if cfg.name in ("agd", "pgd"):
            L_F = cluster.smoothness
            step, mom = agd_defaults(L_F, lam)
            if cfg.agd_step is None:
                cfg.agd_step = step
            if cfg.agd_momentum is None:
                cfg.agd_momentum = mom
            if cfg.pgd_step is None:
                cfg.pgd_step = 1.0 / L_F
        if cfg.name == "hb-dane" and cfg.hb_beta is None:
            cfg.hb_beta = hb_dane_momentum(lam, cluster.precond.mu)
        return cfg
