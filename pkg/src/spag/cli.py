"""Command-line driver.

    spag run --dataset synthetic:d=50,N=20000 --n 2000 --lam 1e-5 --output run.csv
    spag bounds --regime hoeffding --R 1 --n 1000 --d 10 --delta 0.1
    spag verify-concentration --draws 100
    spag tune-mu --config run.cfg
    spag make-synthetic --d 20 --N 1000 --output toy.libsvm

Config files are either JSON objects or flat ``key = value`` lines
(``#`` starts a comment). Command-line flags override file values.
Exit codes: 0 success, 2 usage or I/O error, 3 numerical failure.
"""

import argparse
import dataclasses
import json
import logging
import math
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import concentration as conc
from .algorithms import AlgorithmConfig
from .data import load_libsvm, make_synthetic, normalize_rows, write_libsvm
from .errors import ArgumentError, NumericalError, ParseError, SpagError
from .harness import (Cluster, local_init, records_to_csv, reference_solution,
                      rounds_to_target, run_experiment)
from .losses import PROFILES, RegularizedLoss
from .tuning import tune_mu

log = logging.getLogger("spag")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    dataset: str = "synthetic:d=50,N=20000,kind=logistic,decay=0.9"
    loss: str = None
    m: int = 4
    n: int = None
    lam: float = 1e-5
    mu: str = "auto"
    algorithm: str = "spag"
    G_min: float = 1.0
    t0: int = 50
    inner_tol: float = 1e-9
    max_iters: int = 100
    target_subopt: float = None
    seed: int = 0
    output: str = None
    summary: str = None
    wall_clock: bool = False
    # tune-mu only
    probe_iters: int = 20
    max_trials: int = 60

    def validate(self):
        def bad(name, msg):
            raise UsageError(f"{name}: {msg}")

        if self.loss is not None and self.loss not in PROFILES:
            bad("loss", f"expected one of {sorted(PROFILES)}, got {self.loss!r}")
        if not self.m >= 1:
            bad("m", "must be >= 1")
        if self.n is not None and not self.n >= 1:
            bad("n", "must be >= 1")
        if not self.lam > 0:
            bad("lam", "must be positive")
        if self.mu != "auto":
            try:
                mu = float(self.mu)
            except ValueError:
                bad("mu", f"expected a number or 'auto', got {self.mu!r}")
            if not mu >= 0 or not math.isfinite(mu):
                bad("mu", "must be finite and >= 0")
        if self.algorithm not in AlgorithmConfig.NAMES:
            bad("algorithm", f"expected one of {AlgorithmConfig.NAMES}, got {self.algorithm!r}")
        if not self.G_min >= 0:
            bad("G_min", "must be >= 0")
        if not self.t0 >= 0:
            bad("t0", "must be >= 0")
        if not self.inner_tol > 0:
            bad("inner_tol", "must be positive")
        if not self.max_iters >= 0:
            bad("max_iters", "must be >= 0")
        if self.target_subopt is not None and not self.target_subopt > 0:
            bad("target_subopt", "must be positive")
        if not self.probe_iters >= 1:
            bad("probe_iters", "must be >= 1")
        if not self.max_trials >= 1:
            bad("max_trials", "must be >= 1")
        return self


RUN_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name, raw, kind):
    if raw is None or (isinstance(raw, str) and raw.lower() in ("none", "")):
        return None
    try:
        if kind is bool:
            if isinstance(raw, bool):
                return raw
            return {"true": True, "1": True, "yes": True,
                    "false": False, "0": False, "no": False}[str(raw).lower()]
        if kind is int:
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        if kind is float:
            return float(raw)
    except (ValueError, KeyError):
        raise UsageError(f"{name}: cannot parse {raw!r} as {kind.__name__}") from None
    return str(raw)


_KINDS = {"m": int, "n": int, "lam": float, "G_min": float, "t0": int, "inner_tol": float,
          "max_iters": int, "target_subopt": float, "seed": int, "wall_clock": bool,
          "probe_iters": int, "max_trials": int}


def read_config_file(path):
    """Parse a JSON object or flat ``key = value`` file into a dict of strings/values."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"config file {path}: {exc.strerror}") from None
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise UsageError(f"config file {path}: expected a JSON object")
        return data
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"config file {path}, line {lineno}: expected key = value")
        out[key.strip()] = value.strip()
    return out


def build_run_config(file_values, overrides):
    merged = dict(file_values)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    unknown = sorted(set(merged) - set(RUN_FIELDS))
    if unknown:
        raise UsageError(f"{unknown[0]}: unknown config key")
    kwargs = {}
    for key, raw in merged.items():
        kind = _KINDS.get(key, str)
        kwargs[key] = _coerce(key, raw, kind)
    if "mu" in kwargs and kwargs["mu"] is None:
        kwargs["mu"] = "auto"
    return RunConfig(**kwargs).validate()


def parse_synthetic_spec(spec, seed):
    """``synthetic:d=50,N=1000,kind=logistic,decay=0.9,seed=3`` -> make_synthetic kwargs."""
    body = spec.split(":", 1)[1] if ":" in spec else ""
    opts = {"d": 50, "N": 20000, "kind": "logistic", "decay": 0.9, "seed": seed}
    casts = {"d": int, "N": int, "kind": str, "decay": float, "seed": int}
    for item in filter(None, (p.strip() for p in body.split(","))):
        key, sep, value = item.partition("=")
        if not sep or key not in casts:
            raise UsageError(f"dataset: bad synthetic option {item!r}")
        opts[key] = _coerce(f"dataset.{key}", value, casts[key])
    return opts


def load_dataset(cfg):
    if cfg.dataset.startswith("synthetic"):
        opts = parse_synthetic_spec(cfg.dataset, cfg.seed)
        ds = make_synthetic(**opts)
        return ds, cfg.loss or opts["kind"]
    try:
        ds = load_libsvm(cfg.dataset)
    except OSError as exc:
        raise UsageError(f"dataset {cfg.dataset}: {exc.strerror or exc}") from None
    except ParseError as exc:
        raise UsageError(f"dataset {cfg.dataset}: {exc}") from None
    return normalize_rows(ds, 1.0), cfg.loss or "logistic"


def _setup(cfg, mu=None):
    ds, kind = load_dataset(cfg)
    loss = RegularizedLoss(kind, cfg.lam)
    n = cfg.n if cfg.n is not None else ds.n_examples // cfg.m
    if mu is None:
        mu = 0.1 / n if cfg.mu == "auto" else float(cfg.mu)
    cluster = Cluster.build(ds, loss, m=cfg.m, n=n, mu=mu, seed=cfg.seed)
    return cluster


def _algorithm_config(cfg):
    return AlgorithmConfig(cfg.algorithm, G_min=cfg.G_min, t0=cfg.t0, inner_tol=cfg.inner_tol)


def _write(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise UsageError(f"output {path}: {exc.strerror}") from None


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _finite_or_none(x):
    return x if x is not None and math.isfinite(x) else None


def _tune(cluster, cfg, reference, x0):
    return tune_mu(cluster, _algorithm_config(cfg), reference, x0,
                   probe_iters=cfg.probe_iters, max_trials=cfg.max_trials)


def _trace_json(trace):
    return [{"mu": t.mu, "stable": t.stable,
             "final_suboptimality": _finite_or_none(t.final_suboptimality)} for t in trace]


def cmd_run(cfg):
    cluster = _setup(cfg)
    reference = reference_solution(cluster)
    x0 = local_init(cluster)
    tuning = None
    if cfg.mu == "auto" and cfg.algorithm in ("spag", "dane", "hb-dane"):
        tuning = _tune(cluster, cfg, reference, x0)
        cluster = cluster.with_mu(tuning.mu)
    records = run_experiment(cluster, _algorithm_config(cfg), max_iters=cfg.max_iters,
                             target_subopt=cfg.target_subopt, reference=reference, x0=x0)
    _write(cfg.output, records_to_csv(records, wall_clock=cfg.wall_clock))
    summary = {
        "final_suboptimality": records[-1].suboptimality,
        "total_rounds": cluster.ledger.rounds,
        "iterations": records[-1].iter,
        "reference_grad_norm": reference.grad_norm,
        "mu": cluster.precond.mu,
        "config": dataclasses.asdict(cfg),
    }
    if cfg.target_subopt is not None:
        summary["rounds_to_target"] = _finite_or_none(
            float(rounds_to_target(records, cfg.target_subopt)))
    if tuning is not None:
        summary["mu_trials"] = len(tuning.trace)
    if cfg.summary:
        _write(cfg.summary, _dump(summary))
    elif cfg.output not in (None, "-"):
        _write(cfg.output + ".json", _dump(summary))
    return EXIT_OK


def cmd_tune_mu(cfg):
    cluster = _setup(cfg)
    reference = reference_solution(cluster)
    x0 = local_init(cluster)
    try:
        tuning = _tune(cluster, cfg, reference, x0)
    except NumericalError as exc:
        report = {"error": str(exc), "trace": _trace_json(getattr(exc, "trace", []))}
        _write(cfg.output, _dump(report))
        raise
    _write(cfg.output, _dump({"mu": tuning.mu, "rule": tuning.rule,
                              "trace": _trace_json(tuning.trace),
                              "config": dataclasses.asdict(cfg)}))
    return EXIT_OK


def cmd_bounds(args):
    inp = conc.BoundsInput(R=args.R, n=args.n, N=args.N, d=args.d, delta=args.delta,
                           lam=args.lam, B_ell=args.B_ell, M_ell=args.M_ell, D=args.D,
                           rho=args.rho, C_subg=args.C_subg)
    regimes = list(conc.REGIMES) if args.regime == "all" else [args.regime]
    out = {}
    for name in regimes:
        calc = conc.REGIMES[name]
        report = calc(inp).to_dict()
        report["sweep"] = [{"n": k, "mu": calc(dataclasses.replace(inp, n=k, N=None)).mu}
                           for k in (inp.n, 2 * inp.n, 4 * inp.n)]
        out[name] = report
    _write(args.output, _dump(out[regimes[0]] if len(regimes) == 1 else out))
    return EXIT_OK


def cmd_verify_concentration(args):
    if args.d > conc.DENSE_LIMIT:
        raise UsageError(f"d: sandwich mode needs d <= {conc.DENSE_LIMIT}, got {args.d}")
    ds = make_synthetic(args.d, args.N, "squared", args.decay, seed=args.seed)
    loss = RegularizedLoss("squared", args.lam)
    R = float(ds.row_norms.max())
    rng = np.random.default_rng(args.seed + 1)
    n = ds.n_examples if args.full else args.n
    mu = conc.mu_quadratic(conc.BoundsInput(R=R, n=n, N=ds.n_examples, d=args.d,
                                            delta=args.delta, lam=args.lam)).mu
    passes = 0
    for _ in range(args.draws):
        idx = np.sort(rng.choice(ds.n_examples, size=n, replace=False))
        passes += conc.sandwich_check_quadratic(loss, ds, idx, mu)
    gaps = {}
    sizes = (n,) if args.full else (args.n, 4 * args.n)
    x = np.zeros(args.d)
    for k in sizes:
        if k > ds.n_examples:
            raise UsageError(f"n: 4n = {k} exceeds N = {ds.n_examples}")
        vals = [conc.empirical_hessian_gap(
                    loss, ds, np.sort(rng.choice(ds.n_examples, size=k, replace=False)),
                    [x], seed=int(rng.integers(2**31))).value
                for _ in range(args.gap_draws)]
        gaps[k] = float(np.median(vals))
    report = {
        "d": args.d, "N": ds.n_examples, "n": n, "lam": args.lam, "delta": args.delta,
        "mu_quadratic": mu, "draws": args.draws, "sandwich_pass_rate": passes / args.draws,
        "median_gap": {str(k): v for k, v in gaps.items()},
    }
    if not args.full:
        report["median_gap_ratio_4n_over_n"] = (gaps[4 * args.n] / gaps[args.n]
                                                if gaps[args.n] > 0 else None)
    _write(args.output, _dump(report))
    return EXIT_OK


def cmd_make_synthetic(args):
    ds = make_synthetic(args.d, args.N, args.kind, args.decay, seed=args.seed)
    if args.output in (None, "-"):
        write_libsvm(ds, sys.stdout)
    else:
        try:
            with open(args.output, "w", encoding="utf-8") as fh:
                write_libsvm(ds, fh)
        except OSError as exc:
            raise UsageError(f"output {args.output}: {exc.strerror}") from None
    return EXIT_OK


def _add_run_options(p):
    p.add_argument("--config", help="JSON or key=value config file")
    p.add_argument("--dataset", help="LibSVM path or synthetic:d=..,N=..,kind=..,decay=..")
    p.add_argument("--loss", choices=sorted(PROFILES))
    p.add_argument("--m", type=int, help="number of workers")
    p.add_argument("--n", type=int, help="preconditioning sample size")
    p.add_argument("--lam", type=float)
    p.add_argument("--mu", help="number or 'auto'")
    p.add_argument("--algorithm", choices=AlgorithmConfig.NAMES)
    p.add_argument("--G-min", dest="G_min", type=float)
    p.add_argument("--t0", type=int)
    p.add_argument("--inner-tol", dest="inner_tol", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--target-subopt", dest="target_subopt", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--output", "-o")
    p.add_argument("--summary", help="JSON summary path (default: <output>.json)")
    p.add_argument("--wall-clock", dest="wall_clock", action="store_const", const=True,
                   help="fill the wall_ms column (makes output non-reproducible)")
    p.add_argument("--probe-iters", dest="probe_iters", type=int)
    p.add_argument("--max-trials", dest="max_trials", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="spag", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_options(sub.add_parser("run", help="run one method and write CSV + JSON"))
    _add_run_options(sub.add_parser("tune-mu", help="geometric search for mu"))

    b = sub.add_parser("bounds", help="concentration bounds on mu")
    b.add_argument("--regime", default="hoeffding", choices=list(conc.REGIMES) + ["all"])
    b.add_argument("--R", type=float, default=1.0)
    b.add_argument("--n", type=int, default=1000)
    b.add_argument("--N", type=int)
    b.add_argument("--d", type=int, default=10)
    b.add_argument("--delta", type=float, default=0.1)
    b.add_argument("--lam", type=float, default=1e-3)
    b.add_argument("--B-ell", dest="B_ell", type=float, default=0.25)
    b.add_argument("--M-ell", dest="M_ell", type=float, default=1.0)
    b.add_argument("--D", type=float, default=1.0)
    b.add_argument("--rho", type=float)
    b.add_argument("--C-subg", dest="C_subg", type=float, default=1.0)
    b.add_argument("--output", "-o")

    v = sub.add_parser("verify-concentration", help="Monte Carlo sandwich and gap scaling")
    v.add_argument("--d", type=int, default=10)
    v.add_argument("--n", type=int, default=500)
    v.add_argument("--N", type=int, default=100_000)
    v.add_argument("--lam", type=float, default=1e-3)
    v.add_argument("--delta", type=float, default=0.1)
    v.add_argument("--decay", type=float, default=0.9)
    v.add_argument("--draws", type=int, default=100)
    v.add_argument("--gap-draws", dest="gap_draws", type=int, default=50)
    v.add_argument("--full", action="store_true", help="use the whole dataset as the sample")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--output", "-o")

    s = sub.add_parser("make-synthetic", help="write a synthetic LibSVM file")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--N", type=int, required=True)
    s.add_argument("--kind", choices=sorted(PROFILES), default="logistic")
    s.add_argument("--decay", type=float, default=0.9)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output", "-o")
    return parser


def _run_config_from(args):
    file_values = read_config_file(args.config) if args.config else {}
    overrides = {k: getattr(args, k) for k in RUN_FIELDS if hasattr(args, k)}
    return build_run_config(file_values, overrides)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return cmd_run(_run_config_from(args))
        if args.command == "tune-mu":
            return cmd_tune_mu(_run_config_from(args))
        if args.command == "bounds":
            return cmd_bounds(args)
        if args.command == "verify-concentration":
            return cmd_verify_concentration(args)
        return cmd_make_synthetic(args)
    except (UsageError, ArgumentError, ParseError) as exc:
        print(f"spag {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"spag {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SpagError as exc:
        print(f"spag {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
