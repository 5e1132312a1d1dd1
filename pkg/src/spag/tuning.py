"""Parameter searches: the multiplicative mu sweep and the AGD grid."""

import logging
import math
from dataclasses import dataclass, field, replace

from .algorithms import AlgorithmConfig
from .errors import NumericalError, SpagError
from .harness import rounds_to_target, run_experiment

log = logging.getLogger(__name__)

# "unstable": some suboptimality grows by more than this factor in one iteration
INSTABILITY_RATIO = 1.05


@dataclass
class MuTrial:
    mu: float
    stable: bool
    final_suboptimality: float


@dataclass
class MuTuning:
    mu: float
    trace: list = field(default_factory=list)
    rule: str = f"unstable if any suboptimality rises by more than {INSTABILITY_RATIO - 1:.0%} between consecutive probe iterations"


def is_stable(subopts, floor=0.0):
    """No step increases the gap by more than 5% (gaps below ``floor`` are noise)."""
    for prev, cur in zip(subopts, subopts[1:]):
        if not math.isfinite(cur):
            return False
        if cur > floor and cur > INSTABILITY_RATIO * max(prev, floor):
            return False
    return True


def probe_mu(cluster, mu, config, reference, x0, probe_iters=20, floor=0.0):
    trial = cluster.with_mu(mu)
    # once the gap is under the noise floor no later step can count as unstable
    target = floor if floor > 0 else None
    try:
        recs = run_experiment(trial, config, max_iters=probe_iters, target_subopt=target,
                              reference=reference, x0=x0)
    except SpagError as exc:
        log.info("mu=%.4g failed: %s", mu, exc)
        recs = getattr(exc, "records", [])
        return MuTrial(mu, False, recs[-1].suboptimality if recs else math.inf)
    subs = [r.suboptimality for r in recs]
    return MuTrial(mu, is_stable(subs, floor), subs[-1])


def tune_mu(cluster, config=None, reference=None, x0=None, start=None, factor=1.2,
            probe_iters=20, max_trials=60, floor=None):
    """Geometric search for the smallest stable mu.

    Starts at ``0.1 / n``. While the probe run is stable mu is divided by
    ``factor``; while unstable it is multiplied. The last stable value is
    returned along with every trial.
    """
    if config is None:
        config = AlgorithmConfig("spag")
    if reference is None:
        from .harness import reference_solution
        reference = reference_solution(cluster)
    if x0 is None:
        from .harness import local_init
        x0 = local_init(cluster)
    if floor is None:
        floor = 1e-13 * max(1.0, abs(reference.phi_star))
    mu = 0.1 / cluster.precond.n if start is None else start
    trace = []
    first = probe_mu(cluster, mu, config, reference, x0, probe_iters, floor)
    trace.append(first)
    direction = 1.0 / factor if first.stable else factor
    while len(trace) < max_trials:
        mu = mu * direction
        t = probe_mu(cluster, mu, config, reference, x0, probe_iters, floor)
        trace.append(t)
        if first.stable and not t.stable:
            return MuTuning(trace[-2].mu, trace)
        if not first.stable and t.stable:
            return MuTuning(t.mu, trace)
    if first.stable:
        return MuTuning(trace[-1].mu, trace)
    err = NumericalError(f"no stable mu found in {max_trials} trials")
    err.trace = trace
    raise err


DEFAULT_STEP_SCALES = (1, 2, 4, 8, 16, 32)
DEFAULT_MOMENTA = (None, 0.9, 0.95, 0.98, 0.99, 0.995, 0.999)


@dataclass
class AgdTuning:
    rounds: float
    step: float
    momentum: float
    grid: list = field(default_factory=list)


def tune_agd(cluster, reference, x0, target, max_rounds, step_scales=DEFAULT_STEP_SCALES,
             momenta=DEFAULT_MOMENTA):
    """Grid search over AGD (step, momentum) for fewest rounds to ``target``.

    Each candidate runs for at most ``max_rounds`` iterations; candidates
    that miss the target within the budget score ``inf``.
    """
    base = AlgorithmConfig("agd").resolved(cluster)
    best = AgdTuning(math.inf, base.agd_step, base.agd_momentum)
    for scale in step_scales:
        for mom in momenta:
            cfg = replace(base, agd_step=base.agd_step * scale,
                          agd_momentum=base.agd_momentum if mom is None else mom)
            try:
                recs = run_experiment(cluster, cfg, max_iters=max_rounds, target_subopt=target,
                                      reference=reference, x0=x0)
                rounds = rounds_to_target(recs, target)
            except SpagError:
                rounds = math.inf
            best.grid.append((cfg.agd_step, cfg.agd_momentum, rounds))
            if rounds < best.rounds:
                best.rounds, best.step, best.momentum = rounds, cfg.agd_step, cfg.agd_momentum
    return best
