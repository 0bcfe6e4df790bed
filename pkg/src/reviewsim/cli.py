"""Command-line entry point: ``reviewsim <command> [flags]``.

Exit codes: 0 success, 1 configuration or model error, 2 numerical divergence.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analytics, presets
from .abm import SimConfig, simulate, simulated_sweep, write_run_csv
from .config import ConfigError, ExperimentConfig, dump_yaml, load_config
from .learning import cross_validate, ingest_reviews, learned_model_dict, quality_values
from .memory import FAMILIES, default_grid, policy_search_memory
from .model import AuthorModel, BinaryReviews, DivergenceError, GaussianNoiseReviews, ModelError, Threshold
from .signals import check_blackwell, check_mlr, mix_with_uniform


@contextlib.contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        p = Path(path)
        if not p.parent.exists():
            raise ConfigError("--out", f"directory {p.parent} does not exist")
        with open(p, "w", newline="") as fh:
            yield fh


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="YAML model/run config")
    src.add_argument("--preset", help="bundled parameter set, e.g. ICLR2020-L4")
    p.add_argument("--m", type=int, help="reviews per round")
    p.add_argument("--lambda-r", type=float, dest="lambda_r", help="weight on learned reviewer matrix (rest uniform)")
    p.add_argument("--lambda-a", type=float, dest="lambda_a", help="weight on learned author matrix (rest uniform)")
    p.add_argument("--V", type=float, help="conference value")
    p.add_argument("--eta", type=float, help="per-round discount")
    p.add_argument("--rho", type=float, help="attractiveness (V-eta)/(1-eta); sets V from eta")
    p.add_argument("--beta", type=float, help="binary review accuracy (binary configs only)")
    p.add_argument("--sigma", type=float, help="review noise sd (gaussian-review configs only)")
    p.add_argument("--noiseless", action="store_true", help="authors know their quality")
    p.add_argument("--tie-break", choices=analytics.TIE_BREAKS, dest="tie_break")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int)
    p.add_argument("--T", type=int, help="rounds before the sure bet")
    p.add_argument("--n", type=int, help="papers simulated")
    p.add_argument("--strategy", choices=("myopic", "dp"))


def _add_grid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid", type=int, help="number of tau grid points")
    p.add_argument("--tau-min", type=float, dest="tau_min")
    p.add_argument("--tau-max", type=float, dest="tau_max")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="reviewsim", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="noiseless-author QB sweep over thresholds (CSV)")
    _add_model_flags(p)
    _add_grid_flags(p)
    p.add_argument("--T", type=int, help="limit papers to T rounds (time-limited fixed threshold)")
    p.add_argument("--strict", action="store_true", help="exit 2 instead of reporting NaN quality for mean-less priors")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("pareto", help="keep the Pareto rows of a sweep CSV")
    p.add_argument("input", help="CSV from sweep (or - for stdin)")
    p.add_argument("--all", action="store_true", help="emit every row with recomputed flags")
    p.add_argument("--out")

    p = sub.add_parser("simulate", help="agent-based run (per-round CSV), or a simulated sweep with --grid")
    _add_model_flags(p)
    _add_run_flags(p)
    _add_grid_flags(p)
    p.add_argument("--tau", type=float, help="threshold for a memoryless policy (overrides config policy)")
    p.add_argument("--summary", help="path for the JSON summary record (default: stderr)")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("memory-search", help="search T-round threshold vectors (binary model)")
    _add_model_flags(p)
    _add_run_flags(p)
    p.add_argument("--family", choices=FAMILIES + ("all",), default="all")
    p.add_argument("--grid", type=int, default=40, help="thresholds per round on [-1, 1)")
    p.add_argument("--tail-rule", choices=("per_round", "cumulative"), default="per_round", dest="tail_rule")
    p.add_argument("--pareto-only", action="store_true", dest="pareto_only")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("learn", help="fit (p, beta, q) from NDJSON review records")
    p.add_argument("input", help="NDJSON file of {paper_id, rating} (or - for stdin)")
    p.add_argument("--L-min", type=int, default=2, dest="L_min")
    p.add_argument("--L-max", type=int, default=10, dest="L_max")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("preset", help="print a bundled parameter set")
    p.add_argument("name", nargs="?", help="preset name (omit to list)")

    p = sub.add_parser("check", help="MLR and Blackwell checks for a config")
    _add_model_flags(p)
    p.add_argument("--out")
    return ap


def load_model(args) -> ExperimentConfig:
    if getattr(args, "preset", None):
        cfg = presets.preset(args.preset)
    elif getattr(args, "config", None):
        cfg = load_config(args.config)
    else:
        raise ConfigError("--config", "either --config or --preset is required")
    changes = {}
    for k in ("lambda_r", "lambda_a", "tie_break", "seed", "n", "strategy"):
        v = getattr(args, k, None)
        if v is not None:
            changes[k] = v
    if getattr(args, "T", None) is not None:
        changes["T"] = args.T
    if getattr(args, "noiseless", False):
        changes["author_kind"] = "noiseless"
    s = cfg.setting
    V, eta = s.author.V, s.author.eta
    if args.eta is not None:
        eta = args.eta
    if args.rho is not None:
        V = args.rho * (1 - eta) + eta
    elif args.V is not None:
        V = args.V
    try:
        author = AuthorModel(V, eta, None)
        s = s.with_(author=author, m=args.m if args.m is not None else s.m)
    except ModelError as e:
        raise ConfigError("author", str(e)) from None
    if getattr(args, "beta", None) is not None:
        if not isinstance(s.review, BinaryReviews):
            raise ConfigError("--beta", "only applies to binary review models")
        s = s.with_(review=_flag_guard("--beta", BinaryReviews, args.beta))
    if getattr(args, "sigma", None) is not None:
        if not isinstance(s.review, GaussianNoiseReviews):
            raise ConfigError("--sigma", "only applies to gaussian review models")
        s = s.with_(review=_flag_guard("--sigma", GaussianNoiseReviews, args.sigma))
    return cfg.rebuild(setting=s, **changes)


def _flag_guard(flag, fn, *a):
    try:
        return fn(*a)
    except ModelError as e:
        raise ConfigError(flag, str(e)) from None


def _tau_grid(args, setting):
    n = args.grid or 400
    return analytics.default_tau_grid(setting, n, args.tau_min, args.tau_max)


def cmd_sweep(args) -> int:
    cfg = load_model(args).rebuild(author_kind="noiseless")
    s = cfg.setting
    if args.strict and s.continuous and not s.prior.has_mean:
        raise DivergenceError(f"conference quality is undefined for a {s.prior.family} prior")
    taus = _tau_grid(args, s)
    if args.T is not None:
        points = analytics.qb_sweep_time_limited(s, args.T, taus, cfg.tie_break)
    else:
        points = analytics.qb_sweep(s, taus, cfg.tie_break, jobs=args.jobs)
    with _open_out(args.out) as fh:
        analytics.write_points_csv(points, fh)
    return 0


def cmd_pareto(args) -> int:
    try:
        src = sys.stdin if args.input == "-" else open(args.input, newline="")
    except OSError as e:
        raise ConfigError("input", f"cannot read {args.input} ({e.strerror})") from None
    with src:
        points = analytics.read_points_csv(src)
    points = analytics.pareto_filter(points)
    if not args.all:
        points = [p for p in points if p.pareto]
    with _open_out(args.out) as fh:
        analytics.write_points_csv(points, fh)
    return 0


def cmd_simulate(args) -> int:
    cfg = load_model(args)
    s = cfg.setting
    if args.grid:
        taus = _tau_grid(args, s)
        pts = simulated_sweep(s, taus, cfg.n, cfg.T, cfg.seed, cfg.strategy, cfg.tie_break, jobs=args.jobs)
        with _open_out(args.out) as fh:
            analytics.write_points_csv(pts, fh)
        return 0
    policy = Threshold(args.tau) if args.tau is not None else cfg.policy
    if policy is None:
        raise ConfigError("policy", "no policy in config; pass --tau")
    sc = SimConfig(s, policy, n=cfg.n, T=cfg.T, seed=cfg.seed, strategy=cfg.strategy, tie_break=cfg.tie_break)
    res = simulate(sc, jobs=args.jobs)
    with _open_out(args.out) as fh:
        write_run_csv(res, fh)
    summary = json.dumps({k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in res.summary().items()}, sort_keys=True)
    if args.summary:
        Path(args.summary).write_text(summary + "\n")
    else:
        print(summary, file=sys.stderr)
    return 0


def cmd_memory_search(args) -> int:
    cfg = load_model(args)
    grid = default_grid(2 / args.grid)
    fams = FAMILIES if args.family == "all" else (args.family,)
    strategy = args.strategy or "dp"
    rows = []
    for fam in fams:
        res = policy_search_memory(
            cfg.setting, fam, grid, T=args.T or 5, n=args.n or cfg.n, seed=cfg.seed, strategy=strategy, tail_rule=args.tail_rule, jobs=args.jobs
        )
        for p in res.points:
            if args.pareto_only and not p.pareto:
                continue
            taus = list(p.taus) + [math.nan] * (3 - len(p.taus))
            rows.append([fam, *taus, p.quality, p.burden, p.quality_se, p.burden_se, p.pareto, len(p.members)])
    with _open_out(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["family", "tau1", "tau2", "tau3", "quality", "burden", "quality_se", "burden_se", "pareto", "n_equivalent"])
        for r in rows:
            w.writerow([r[0]] + [analytics._fmt(x) for x in r[1:9]] + [r[9]])
    return 0


def cmd_learn(args) -> int:
    try:
        src = sys.stdin if args.input == "-" else open(args.input)
    except OSError as e:
        raise ConfigError("input", f"cannot read {args.input} ({e.strerror})") from None
    with src:
        data = ingest_reviews(src, source=args.input)
    if data.dropped:
        print(f"dropped {data.dropped} papers without reviews", file=sys.stderr)
    cv = cross_validate(data, range(args.L_min, args.L_max + 1), args.folds, args.seed, args.iters, jobs=args.jobs)
    q = quality_values(data, cv.p, cv.beta)
    doc = learned_model_dict(cv.p, cv.beta, q, name=f"learned-L{cv.best_L}")
    doc["cv_mean_loglik"] = {int(k): float(v) for k, v in cv.mean_loglik.items()}
    with _open_out(args.out) as fh:
        dump_yaml(doc, fh)
    return 0


def cmd_preset(args) -> int:
    if not args.name:
        print("\n".join(presets.available()))
        return 0
    dump_yaml(presets.preset_dict(args.name), sys.stdout)
    return 0


def cmd_check(args) -> int:
    cfg = load_model(args)
    s = cfg.setting
    lines = []
    from .model import as_categorical, is_continuous

    if is_continuous(s.review):
        lines.append("review: continuous additive noise (MLR holds for Gaussian noise)")
    else:
        beta = as_categorical(s.review).confusion
        r = check_mlr(beta)
        lines.append(f"review MLR: {'ok' if r.ok else 'violated'}; full support: {r.full_support}")
        if r.violation:
            (i, j), (a, b) = r.violation
            lines.append(f"  first violation: qualities ({i}, {j}) signals ({a}, {b}) ratios {r.ratios[0]:.6g} vs {r.ratios[1]:.6g}")
        if cfg.base_confusion is not None:
            g = check_blackwell(cfg.base_confusion, beta)
            lines.append(f"learned matrix garbles into review matrix: {'yes' if g is not None else 'no'}")
        half = mix_with_uniform(beta, 0.5)
        lines.append(f"review matrix dominates its 50% uniform mix: {'yes' if check_blackwell(beta, half) is not None else 'no'}")
    if s.author.signal is not None:
        r = check_mlr(s.author.signal)
        lines.append(f"author signal MLR: {'ok' if r.ok else 'violated'}; full support: {r.full_support}")
        if not is_continuous(s.review):
            g = check_blackwell(as_categorical(s.review).confusion, s.author.signal)
            lines.append(f"review matrix garbles into author signal: {'yes' if g is not None else 'no'}")
    with _open_out(args.out) as fh:
        fh.write("\n".join(lines) + "\n")
    return 0


COMMANDS = {
    "sweep": cmd_sweep,
    "pareto": cmd_pareto,
    "simulate": cmd_simulate,
    "memory-search": cmd_memory_search,
    "learn": cmd_learn,
    "preset": cmd_preset,
    "check": cmd_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (DivergenceError, ArithmeticError) as e:
        print(f"error: numerical divergence: {e}", file=sys.stderr)
        return 2
    except (ModelError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
