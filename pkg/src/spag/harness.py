"""Simulated server/worker protocol with communication accounting.

Each round the server broadcasts ``x`` (d scalars to each of m workers) and
every worker returns its local gradient (d scalars each). Workers live in
process; the point of the simulation is the round count, not transport.
"""

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from . import algorithms as alg
from . import losses
from .bregman import Preconditioner
from .data import partition, subsample
from .errors import ArgumentError, DivergedError, NumericalError

log = logging.getLogger(__name__)

CSV_COLUMNS = ("iter", "comm_rounds", "gradient_evals", "suboptimality", "gain",
               "gain_trials", "inner_passes", "wall_ms")
DIVERGENCE_FACTOR = 1e6


@dataclass
class CommLedger:
    rounds: int = 0
    scalars: int = 0


class Worker:
    """Holds one shard and answers gradient requests."""

    def __init__(self, loss, shard):
        self.loss = loss
        self.shard = shard

    @property
    def size(self):
        return self.shard.n_examples

    def handle(self, x):
        return losses.loss_gradient(self.loss, self.shard, x)


class Cluster:
    """Dataset split over ``m`` workers plus the server's reference function."""

    def __init__(self, dataset, loss, shards, precond):
        loss.check_labels(dataset)
        self.dataset = dataset
        self.loss = loss
        self.shards = shards
        self.precond = precond
        self.workers = [Worker(loss, dataset.take(idx)) for idx in shards.shards]
        self.ledger = CommLedger()

    @classmethod
    def build(cls, dataset, loss, m=1, n=None, mu=None, seed=0, precond_seed=None):
        """Shard ``dataset`` and draw an ``n``-example preconditioning sample.

        ``n=None`` uses the whole dataset; ``mu=None`` uses ``0.1 / n``.
        """
        N = dataset.n_examples
        n = N if n is None else n
        shards = partition(dataset, m, seed=seed)
        psample = subsample(dataset, n, seed=seed + 1 if precond_seed is None else precond_seed)
        mu = 0.1 / n if mu is None else mu
        precond = Preconditioner(loss, dataset.take(psample.indices), mu)
        out = cls(dataset, loss, shards, precond)
        out.precond_sample = psample
        return out

    def with_mu(self, mu):
        """Same shards and sample, different ``mu``, fresh ledger."""
        out = Cluster.__new__(Cluster)
        out.dataset, out.loss, out.shards = self.dataset, self.loss, self.shards
        out.workers = self.workers
        out.precond = Preconditioner(self.loss, self.precond.data, mu)
        out.ledger = CommLedger()
        out.__dict__.update({k: v for k, v in self.__dict__.items()
                             if k in ("precond_sample", "smoothness")})
        return out

    @property
    def m(self):
        return len(self.workers)

    @property
    def d(self):
        return self.dataset.n_features

    def reset_ledger(self):
        self.ledger = CommLedger()

    def aggregate_gradient(self, x):
        """One communication round: size-weighted average of worker gradients."""
        x = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise NumericalError("non-finite point broadcast to workers")
        N = self.dataset.n_examples
        total = None
        for w in self.workers:
            part = (w.size / N) * w.handle(x)
            total = part if total is None else total + part
        self.ledger.rounds += 1
        self.ledger.scalars += 2 * self.m * self.d
        return total

    # measurement helpers: no communication is charged for these
    def objective(self, x):
        return losses.loss_value(self.loss, self.dataset, x)

    def full_gradient(self, x):
        return losses.loss_gradient(self.loss, self.dataset, x)

    def objective_gap(self, x, ref):
        """``Phi(x) - Phi(x*)`` as ``D_Phi(x, x*) + grad Phi(x*)^T (x - x*)``."""
        x = np.asarray(x, dtype=np.float64)
        return (losses.loss_divergence(self.loss, self.dataset, x, ref.x_star)
                + float(np.dot(ref.grad_star, x - ref.x_star)))

    @cached_property
    def smoothness(self):
        return losses.smoothness_upper_bound(self.loss, self.dataset)


@dataclass
class ReferenceSolution:
    x_star: np.ndarray
    phi_star: float
    grad_norm: float
    grad_star: np.ndarray = field(repr=False)
    method: str = "newton"


def newton_minimize(loss, ds, x0, tol, max_iter=200):
    """Damped Newton with exact line search fallback to Armijo backtracking.

    Solves the Newton system densely for ``d <= 500`` and with CG otherwise.
    Returns ``(x, grad_norm)``; raises NumericalError if ``tol`` is not met.
    """
    x = np.array(x0, dtype=np.float64)
    d = x.size
    g = losses.loss_gradient(loss, ds, x)
    gnorm = float(np.linalg.norm(g))
    best = (x, gnorm)
    stall = 0
    for _ in range(max_iter):
        if gnorm <= tol:
            return x, gnorm
        if d <= 500:
            H = losses.hessian_dense(loss, ds, x)
            step = -scipy.linalg.solve(H, g, assume_a="pos")
        else:
            op = spla.LinearOperator(
                (d, d), matvec=lambda v: losses.hessian_vec_product(loss, ds, x, v),
                dtype=np.float64)
            step, _ = spla.cg(op, -g, rtol=min(0.1, math.sqrt(gnorm)) * 1e-3, atol=0.0,
                              maxiter=10 * d)
        slope = float(np.dot(g, step))
        t = 1.0
        # Phi(x + t s) - Phi(x) = D(x + t s, x) + t g^T s, free of cancellation
        while True:
            change = losses.loss_divergence(loss, ds, x + t * step, x) + t * slope
            if change <= 1e-4 * t * slope or t < 1e-10:
                break
            t *= 0.5
        x_new = x + t * step
        g_new = losses.loss_gradient(loss, ds, x_new)
        n_new = float(np.linalg.norm(g_new))
        if n_new >= best[1]:
            stall += 1
            if stall >= 5:
                break
        else:
            stall = 0
            best = (x_new, n_new)
        x, g, gnorm = x_new, g_new, n_new
    x, gnorm = best
    if gnorm <= tol:
        return x, gnorm
    raise NumericalError(f"Newton solve stopped at ||grad|| = {gnorm:.3e} > tol = {tol:.1e}")


def reference_solution(cluster, tol=1e-12, x0=None):
    """High-accuracy minimizer of the full objective.

    Solved by damped Newton over the whole dataset, independently of the
    methods being benchmarked, and started from the preconditioner's local
    minimizer unless ``x0`` is given.
    """
    if not cluster.loss.lam > 0:
        raise ArgumentError("reference solution needs lam > 0")
    if x0 is None:
        x0 = local_init(cluster)
    x, gnorm = newton_minimize(cluster.loss, cluster.dataset, x0, tol)
    grad = cluster.full_gradient(x)
    return ReferenceSolution(x_star=x, phi_star=cluster.objective(x), grad_norm=gnorm,
                             grad_star=grad)


def local_init(cluster, tol=1e-9):
    """Minimizer of the server's local loss ``f0`` (ridge included, mu excluded)."""
    p = cluster.precond
    d = cluster.d
    if p.data is None:
        return np.zeros(d)
    x, _ = newton_minimize(cluster.loss, p.data, np.zeros(d), tol)
    return x


def _initial_state(config, x0):
    x0 = np.array(x0, dtype=np.float64)
    if config.name == "spag":
        return alg.warm_start_state(x0, config, t0=config.t0)
    return alg.PlainState(x=x0, x_prev=x0.copy())


def _step(config, state, cluster):
    name = config.name
    if name == "spag":
        return alg.spag_iterate(state, cluster, config, G_min=config.G_min,
                                inner_tol=config.inner_tol,
                                inner_max_passes=config.inner_max_passes)
    if name == "dane":
        return alg.dane_iterate(state, cluster, L_rel=config.L_rel, inner_tol=config.inner_tol,
                                inner_max_passes=config.inner_max_passes)
    if name == "hb-dane":
        return alg.hb_dane_iterate(state, cluster, config.hb_beta, L_rel=config.L_rel,
                                   inner_tol=config.inner_tol,
                                   inner_max_passes=config.inner_max_passes)
    if name == "agd":
        return alg.agd_iterate(state, cluster, config.agd_step, config.agd_momentum)
    return alg.pgd_iterate(state, cluster, config.pgd_step)


def run_experiment(cluster, config, max_iters=100, target_subopt=None, reference=None,
                   x0=None, keep_iterates=False):
    """Run one method and return its per-iteration records.

    Record 0 describes the starting point. With a ``reference`` the
    suboptimality is filled in as the run goes, ``target_subopt`` can stop
    it early, and a blow-up past ``1e6`` times the initial gap raises
    :class:`DivergedError` carrying the partial records.
    """
    if max_iters < 0:
        raise ArgumentError("max_iters must be >= 0")
    if target_subopt is not None and reference is None:
        raise ArgumentError("target_subopt needs a reference solution")
    config = config.resolved(cluster)
    cluster.reset_ledger()
    if x0 is None:
        x0 = local_init(cluster)
    state = _initial_state(config, x0)
    records = [alg.IterationRecord(iter=0, comm_rounds=0, gradient_evals=0, wall_ms=0.0,
                                   x=state.x.copy(),
                                   v=getattr(state, "v", None),
                                   A=getattr(state, "A", float("nan")),
                                   B=getattr(state, "B", float("nan")),
                                   log_A=getattr(state, "log_A", float("nan")),
                                   log_B=getattr(state, "log_B", float("nan")))]
    if reference is not None:
        records[0].suboptimality = cluster.objective_gap(state.x, reference)
    initial_gap = records[0].suboptimality
    t_start = time.perf_counter()
    for _ in range(max_iters):
        if target_subopt is not None and records[-1].suboptimality <= target_subopt:
            break
        try:
            state, rec = _step(config, state, cluster)
        except DivergedError as exc:
            raise DivergedError(str(exc), records) from exc
        rec.wall_ms = (time.perf_counter() - t_start) * 1e3
        if not np.all(np.isfinite(rec.x)):
            raise DivergedError("iterate became non-finite", records)
        if reference is not None:
            rec.suboptimality = cluster.objective_gap(rec.x, reference)
            if initial_gap > 0 and rec.suboptimality > DIVERGENCE_FACTOR * initial_gap:
                records.append(rec)
                raise DivergedError(
                    f"suboptimality {rec.suboptimality:.3e} exceeds 1e6 x initial", records)
        if not keep_iterates and len(records) > 1:
            records[-1].x = records[-1].v = None
        records.append(rec)
    if not keep_iterates:
        for r in records[:-1]:
            r.x = r.v = None
    return records


def fill_suboptimality(cluster, records, reference):
    """Post-hoc suboptimality for runs made without a reference."""
    for r in records:
        if r.x is None:
            raise ArgumentError("records were collected without iterates")
        r.suboptimality = cluster.objective_gap(r.x, reference)
    return records


def rounds_to_target(records, target):
    for r in records:
        if r.suboptimality <= target:
            return r.comm_rounds
    return math.inf


def _fmt(value):
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


def records_to_csv(records, wall_clock=False):
    """CSV text with the fixed column set.

    ``wall_ms`` is left empty unless ``wall_clock`` is set, so that
    reruns of the same configuration produce identical bytes.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow([
            r.iter, r.comm_rounds, r.gradient_evals, _fmt(float(r.suboptimality)),
            _fmt(float(r.gain)), r.gain_trials, r.inner_passes,
            _fmt(float(r.wall_ms)) if wall_clock else "",
        ])
    return buf.getvalue()
