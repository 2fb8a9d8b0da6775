"""Command-line entry point: ``gerrysim {generate,test,power,metrics,validate}``.

Every command writes a ``<prefix>.manifest.json`` next to its outputs with
the resolved configuration, master seed and input digests.  Option values
come from flags, then from ``--config`` (a JSON object keyed by option
destination names), then from built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .biasing import BiasRunConfig, run_biased
from .chains import ChainConfig, EnsembleLog, InfeasiblePlanError, run_neutral_chain, seed_plan
from .dualgraph import (GraphFormatError, Partition, VoteModel, load_dual_graph, make_grid_graph,
                        save_dual_graph, validate_partition)
from .metrics import PARTIES, MetricKind, label
from .outlier import OutlierTestConfig, outlier_test, rejection_threshold
from .power import (PowerExperiment, fit_power_curve, sweep, write_fit_json, write_sweep_csv)

log = logging.getLogger("gerrysim")

REFERENCE_K_GRID = [200_000 - 10_000 * i for i in range(20)] + [1000]
REFERENCE_EPSILON_GRID = [0.001, 0.003, 0.005, 0.0005, 0.0001, 0.00005, 0.000009]
THREADS_ENV = "GERRYSIM_THREADS"


class UsageError(Exception):
    pass


def _digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _jsonable(obj):
    return getattr(obj, "value", str(obj))


def _write_manifest(prefix, command, config, seed, inputs, started, steps=None):
    manifest = {
        "command": command,
        "config": config,
        "master_seed": seed,
        "inputs": {str(p): _digest(p) for p in inputs},
        "version": __version__,
        "wall_clock_seconds": round(time.time() - started, 3),
        "steps": steps,
    }
    Path(f"{prefix}.manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable))


def _parse_grid(spec):
    try:
        rows, cols = (int(x) for x in spec.lower().split("x"))
    except ValueError:
        raise UsageError(f"--grid expects RxC, got {spec!r}") from None
    return rows, cols


def _parse_vote_model(args):
    kind, *vals = args.vote_model.split(":")
    vals = [float(v) for v in vals]
    extra = dict(noise=args.vote_noise, turnout=args.turnout, turnout_noise=args.turnout_noise)
    if kind == "uniform" and len(vals) == 1:
        return VoteModel.uniform(vals[0], **extra)
    if kind == "gradient" and len(vals) == 2:
        return VoteModel.gradient(vals[0], vals[1], **extra)
    raise UsageError("--vote-model expects uniform:Q or gradient:LO:HI")


def _load_graph(args):
    if getattr(args, "graph", None):
        return load_dual_graph(args.graph)
    if getattr(args, "grid", None):
        rows, cols = _parse_grid(args.grid)
        return make_grid_graph(rows, cols, args.pop_per_node, _parse_vote_model(args), args.graph_seed)
    raise UsageError("one of --graph or --grid is required")


def _threads(args):
    if args.threads:
        return args.threads
    return int(os.environ.get(THREADS_ENV, os.cpu_count() or 1))


def _resolved(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args):
    started = time.time()
    g = _load_graph(args)
    rng = np.random.default_rng(args.seed)
    if g.assignment is not None and not args.auto_seed:
        start = Partition(g, g.assignment, args.districts, args.pop_tolerance)
        bad = validate_partition(g, start)
        if bad:
            raise UsageError(f"seed plan is invalid: {bad}")
    else:
        if not args.districts:
            raise UsageError("--districts is required without a seed plan")
        start = seed_plan(g, args.districts, args.pop_tolerance, rng)
    observers = [(k, p) for k in MetricKind for p in PARTIES] if args.observe_all else []
    if args.method == "neutral":
        cfg = ChainConfig(args.kernel, args.pop_tolerance, args.seed, args.tree_retries,
                          args.steps, args.stride)
        ens = run_neutral_chain(g, start, cfg, observers, args.threshold)
        steps = args.steps
    else:
        method = "hill_climb" if args.method == "hill" else "short_burst"
        if not args.metric:
            raise UsageError("--metric is required for biased methods")
        total = args.steps if method == "hill_climb" else args.runs
        cfg = BiasRunConfig(method, args.metric, args.party, args.beta, args.burst, total,
                            args.restart, args.seed, args.pop_tolerance, args.threshold,
                            args.tree_retries, args.stride, observers)
        ens = run_biased(g, start, cfg)
        steps = len(ens)
    prefix = args.out
    ens.header["seed_plan"] = start.assignment.tolist()
    ens.write_jsonl(f"{prefix}.jsonl")
    ens.write_csv(f"{prefix}.csv")
    save_dual_graph(g, f"{prefix}.graph.json", start.assignment)
    inputs = [args.graph] if args.graph else []
    _write_manifest(prefix, "generate", _resolved(args), args.seed, inputs, started, steps)
    print(f"wrote {len(ens)} maps to {prefix}.jsonl")
    return 0


def _test_config(args):
    try:
        return OutlierTestConfig(args.metric, args.party, args.alpha, args.epsilon, args.m, args.k,
                                 args.threshold, args.tail)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_test(args):
    started = time.time()
    cfg = _test_config(args)
    g = load_dual_graph(args.graph)
    if args.log:
        ens = EnsembleLog.read_jsonl(args.log)
        snaps = dict(ens.snapshots())
        step = args.step if args.step is not None else max(snaps)
        if step not in snaps:
            raise UsageError(f"step {step} has no snapshot in {args.log}")
        x = ens.partition(g, snaps[step])
    else:
        if g.assignment is None:
            raise UsageError("the graph file carries no assignment; pass --log")
        x = Partition(g, g.assignment, args.districts, args.pop_tolerance)
    print(f"epsilon={cfg.epsilon} alpha={cfg.alpha} m={cfg.m} k={cfg.k} metric={cfg.metric.value} "
          f"party={cfg.party}", flush=True)
    if rejection_threshold(cfg.m, cfg.epsilon, cfg.alpha) is None:
        log.warning("no count of flagged trajectories can reject at m=%d, epsilon=%g, alpha=%g",
                    cfg.m, cfg.epsilon, cfg.alpha)
    res = outlier_test(g, x, cfg, np.random.default_rng(args.seed), threads=_threads(args))
    print(f"rho={res.rho} r={res.r:.6g} p={res.p_value:.6g} decision="
          f"{'reject' if res.rejected else 'retain'}")
    if args.out:
        Path(f"{args.out}.json").write_text(res.to_json(indent=2))
        inputs = [args.graph] + ([args.log] if args.log else [])
        _write_manifest(args.out, "test", _resolved(args), args.seed, inputs, started)
    return 0


def _parse_ensembles(items):
    out = {}
    for item in items or []:
        tag, _, path = item.partition("=")
        parts = tag.split(":")
        if not path or len(parts) != 3:
            raise UsageError(f"--ensemble expects METRIC:PARTY:YEAR=PATH, got {item!r}")
        metric, party, year = parts
        out[(MetricKind.parse(metric).value, party, year)] = path
    return out


def cmd_power(args):
    started = time.time()
    g = load_dual_graph(args.graph)
    paths = _parse_ensembles(args.ensemble)
    if args.log:
        paths.setdefault(("", "", ""), args.log)
    if not paths:
        raise UsageError("pass --log or at least one --ensemble")
    for p in paths.values():
        if not Path(p).exists():
            raise UsageError(f"missing ensemble log {p}")
    logs = {key: EnsembleLog.read_jsonl(p) for key, p in paths.items()}
    base_log = logs.get(("", "", "")) or next(iter(logs.values()))
    metrics = args.metrics or sorted({k[0] for k in logs if k[0]}) or ["efficiency_gap"]
    parties = args.parties or sorted({k[1] for k in logs if k[1]}) or ["D"]
    years = args.year_tags or sorted({k[2] for k in logs if k[2]}) or [""]
    ks = REFERENCE_K_GRID if args.k_grid == "reference" else (args.ks or [args.k])
    epsilons = REFERENCE_EPSILON_GRID if args.epsilon_grid == "reference" else (args.epsilons or [args.epsilon])
    grid = {"metric": metrics, "party": parties, "year_tag": years, "epsilon": epsilons,
            "k": ks, "m": args.ms or [args.m], "alpha": [args.alpha]}
    # base config only needs to be valid; grid points are validated individually
    base_test = OutlierTestConfig(metrics[0], parties[0], 0.05, 0.001, 1, 10_000)
    base = PowerExperiment(g, base_log, base_test, args.n, {"year_tag": years[0]}, _threads(args))
    result = sweep(grid, base, logs, args.seed)
    if not result.rows:
        raise UsageError("every grid point was skipped: " + "; ".join(s["reason"] for s in result.skipped))
    prefix = args.out
    write_sweep_csv(result.rows, f"{prefix}.csv")
    if result.skipped:
        Path(f"{prefix}.skipped.json").write_text(json.dumps(result.skipped, indent=2))
    with open(f"{prefix}.per_map.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "party", "year_tag", "epsilon", "k", "m", "map_step", "p_value", "rejected"])
        for rep in result.reports:
            t = rep.test
            for step, p in zip(rep.sample_steps, rep.p_values):
                w.writerow([t.metric.value, t.party, rep.tags.get("year_tag", ""), t.epsilon, t.k, t.m,
                            step, repr(float(p)), int(p <= t.alpha)])
    fits = {}
    if args.fit:
        groups = {}
        for row in result.rows:
            key = (row["metric"], row["party"], row["year_tag"], row["epsilon"], row["m"])
            groups.setdefault(key, []).append((row["k"], row["rate"]))
        for key, pts in groups.items():
            if len({k for k, _ in pts}) >= 3:
                fit = fit_power_curve(pts)
                fits[":".join(map(str, key))] = fit.to_dict()
        if len(fits) == 1:
            write_fit_json(fit, f"{prefix}.fit.json")
        else:
            Path(f"{prefix}.fit.json").write_text(json.dumps(fits, indent=2))
    inputs = [args.graph] + list(paths.values())
    _write_manifest(prefix, "power", _resolved(args), args.seed, inputs, started)
    print(f"wrote {len(result.rows)} rows to {prefix}.csv ({len(result.skipped)} skipped)")
    for key, fit in fits.items():
        print(f"fit {key}: a={fit['a']:.4g} k_near_max={fit['k_near_max']:.6g}")
    return 0


METRIC_COLUMNS = [k.value for k in MetricKind]


def cmd_metrics(args):
    started = time.time()
    g = load_dual_graph(args.graph)
    items = []
    for item in args.log:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = Path(item).stem, item
        if not Path(path).exists():
            raise UsageError(f"missing ensemble log {path}")
        items.append((name, path))
    rows = 0
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ensemble", "step", "party"] + METRIC_COLUMNS)
        for name, path in items:
            ens = EnsembleLog.read_jsonl(path)
            for i, (step, assignment) in enumerate(ens.snapshots()):
                if i % args.every:
                    continue
                x = ens.partition(g, assignment)
                for party in PARTIES:
                    vals = [label(g, x, k, party, args.threshold) for k in MetricKind]
                    w.writerow([name, step, party] + [repr(v) for v in vals])
                    rows += 1
    prefix = str(Path(args.out).with_suffix(""))
    _write_manifest(prefix, "metrics", _resolved(args), None, [args.graph] + [p for _, p in items], started)
    print(f"wrote {rows} rows to {args.out}")
    return 0


def cmd_validate(args):
    g = load_dual_graph(args.graph)
    print(repr(g))
    plans = []
    if g.assignment is not None:
        plans.append(("seed plan", Partition(g, g.assignment, args.districts, args.pop_tolerance)))
    if args.log:
        ens = EnsembleLog.read_jsonl(args.log)
        plans += [(f"step {s}", ens.partition(g, a)) for s, a in ens.snapshots()]
    bad = 0
    for name, p in plans:
        for v in validate_partition(g, p):
            bad += 1
            print(f"{name}: {v.constraint} (district {v.district}): {v.detail}")
    print(f"checked {len(plans)} plans, {bad} violations")
    return 1 if bad else 0


# ---------------------------------------------------------------------------
# parser


def _add_graph_opts(p, grid=True):
    p.add_argument("--graph", help="dual-graph JSON file")
    if grid:
        p.add_argument("--grid", help="synthetic RxC grid instead of --graph")
        p.add_argument("--pop-per-node", type=int, default=100)
        p.add_argument("--vote-model", default="gradient:0.2:0.8", help="uniform:Q or gradient:LO:HI")
        p.add_argument("--vote-noise", type=float, default=0.0)
        p.add_argument("--turnout", type=float, default=1.0)
        p.add_argument("--turnout-noise", type=float, default=0.0)
        p.add_argument("--graph-seed", type=int, default=0)
    p.add_argument("--districts", type=int)
    p.add_argument("--pop-tolerance", type=float, default=0.02)


def _add_test_opts(p, sweep_mode=False):
    if not sweep_mode:
        p.add_argument("--metric", type=MetricKind.parse, default=MetricKind.EFFICIENCY_GAP)
        p.add_argument("--party", choices=PARTIES, default="D")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--epsilon", type=float, default=0.001)
    p.add_argument("--m", type=int, default=32)
    p.add_argument("--k", type=int, default=200_000)
    p.add_argument("--threshold", type=float, default=0.55, help="safe-seat threshold")
    p.add_argument("--tail", choices=["upper", "lower"], default="upper")


def build_parser():
    parser = argparse.ArgumentParser(prog="gerrysim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with option defaults")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=0, help=f"worker cap (default ${THREADS_ENV} or all cores)")

    g = sub.add_parser("generate", help="neutral or biased ensembles")
    common(g)
    _add_graph_opts(g)
    g.add_argument("--method", choices=["neutral", "hill", "short-burst"], default="neutral")
    g.add_argument("--kernel", choices=["recom", "flip"], default="recom")
    g.add_argument("--metric", type=MetricKind.parse)
    g.add_argument("--party", choices=PARTIES, default="D")
    g.add_argument("--steps", type=int, default=50_000)
    g.add_argument("--runs", type=int, default=10_000)
    g.add_argument("--burst", type=int, default=5)
    g.add_argument("--beta", type=float, default=50.0)
    g.add_argument("--restart", choices=["best", "burst"], default="best")
    g.add_argument("--threshold", type=float, default=0.55)
    g.add_argument("--tree-retries", type=int, default=100)
    g.add_argument("--stride", type=int, default=1)
    g.add_argument("--auto-seed", action="store_true", help="ignore the file's seed plan")
    g.add_argument("--observe-all", action="store_true", help="log all metrics for both parties")
    g.add_argument("--out", required=True, help="output prefix")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("test", help="outlier test on one plan")
    common(t)
    _add_graph_opts(t, grid=False)
    _add_test_opts(t)
    t.add_argument("--log", help="ensemble log to take the plan from")
    t.add_argument("--step", type=int, help="step of the plan in --log (default: last)")
    t.add_argument("--out", help="output prefix for the JSON report")
    t.set_defaults(func=cmd_test)

    pw = sub.add_parser("power", help="power / Type I sweeps")
    common(pw)
    pw.add_argument("--graph", required=True)
    _add_test_opts(pw, sweep_mode=True)
    pw.add_argument("--log", help="default ensemble log")
    pw.add_argument("--ensemble", action="append", help="METRIC:PARTY:YEAR=PATH")
    pw.add_argument("--metrics", nargs="+")
    pw.add_argument("--parties", nargs="+", choices=PARTIES)
    pw.add_argument("--year-tags", nargs="+")
    pw.add_argument("--epsilons", nargs="+", type=float)
    pw.add_argument("--ks", nargs="+", type=int)
    pw.add_argument("--ms", nargs="+", type=int)
    pw.add_argument("--k-grid", choices=["reference"])
    pw.add_argument("--epsilon-grid", choices=["reference"])
    pw.add_argument("--n", type=int, default=100)
    pw.add_argument("--fit", action="store_true", help="fit the asymptotic power curve over k")
    pw.add_argument("--out", required=True, help="output prefix")
    pw.set_defaults(func=cmd_power)

    me = sub.add_parser("metrics", help="per-map metric table for plotting")
    me.add_argument("--config")
    me.add_argument("--graph", required=True)
    me.add_argument("--log", nargs="+", required=True, help="[NAME=]PATH")
    me.add_argument("--every", type=int, default=1, help="keep every N-th map")
    me.add_argument("--threshold", type=float, default=0.55)
    me.add_argument("--out", required=True)
    me.set_defaults(func=cmd_metrics)

    v = sub.add_parser("validate", help="check a graph and its plans")
    v.add_argument("--config")
    v.add_argument("--graph", required=True)
    v.add_argument("--log")
    v.add_argument("--districts", type=int)
    v.add_argument("--pop-tolerance", type=float, default=0.02)
    v.set_defaults(func=cmd_validate)
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        cfg = json.loads(Path(args.config).read_text())
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
        args = parser.parse_args(argv)
    return parser, args


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser, args = parse_args(sys.argv[1:] if argv is None else argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (GraphFormatError, InfeasiblePlanError, FileNotFoundError) as exc:
        print(f"gerrysim: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
