"""Command-line front end: ``rigsim sample|explore|campaign|limits``.

Exit codes: 0 success, 1 internal error, 2 usage or plan error, 3 a
campaign target failed its statistical check.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np

from .campaigns import DEFAULT_TOLERANCES, ExperimentPlan, Target, run_campaign
from .continuum import (
    LimitParams,
    coarsen,
    excursions,
    ghp_upper_bound,
    kappa_scaling_check,
    metric_spec,
    sample_poisson_surplus,
    shortcuts_from_atoms,
    simulate_limit_path,
    write_excursion_csv,
)
from .exploration import RootRule, audit_trace, component_sizes, explore
from .regimes import Regime, build_config, scaling_set
from .sampler import BipartiteGraph, sample_bipartite

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_FAILED = 0, 1, 2, 3

PLAN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["regime", "n", "replicates", "seed", "targets"],
    "properties": {
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "regime": {"enum": [r.value for r in Regime]},
        "lambda": {"type": "number"},
        "theta": {"type": "number", "exclusiveMinimum": 0},
        "n": {"type": "integer", "minimum": 2},
        "m_or_aspect": {
            "oneOf": [
                {"type": "integer", "minimum": 1},
                {"type": "object", "additionalProperties": False, "required": ["m"],
                 "properties": {"m": {"type": "integer", "minimum": 1}}},
                {"type": "object", "additionalProperties": False, "required": ["aspect"],
                 "properties": {"aspect": {"type": "number", "exclusiveMinimum": 0}}},
            ]
        },
        "replicates": {"type": "integer", "minimum": 1},
        "horizon_t": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "targets": {"type": "array", "items": {"enum": [t.value for t in Target]}, "uniqueItems": True},
        "output_dir": {"type": "string"},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "number", "minimum": 0} for k in DEFAULT_TOLERANCES},
        },
        "figures": {"type": "boolean"},
        "continuum_replicates": {"type": "integer", "minimum": 1},
        "continuum_T": {"type": "number", "exclusiveMinimum": 0},
        "second_n": {"type": "integer", "minimum": 2},
        "trend_groups": {"type": "integer", "minimum": 1},
        "trend_horizon_t": {"type": "number", "exclusiveMinimum": 0},
    },
}


class PlanError(ValueError):
    pass


def load_plan(path: str | Path, threads: int | None = None, output_dir: str | None = None) -> ExperimentPlan:
    """Read and validate a JSON plan file; every problem becomes a :class:`PlanError`."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise PlanError(f"cannot read plan: {exc}") from None
    except json.JSONDecodeError as exc:
        raise PlanError(f"plan is not valid JSON: {exc}") from None
    try:
        jsonschema.validate(doc, PLAN_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise PlanError(f"plan schema error: {exc.message}") from None
    size = doc.get("m_or_aspect")
    m = aspect = None
    if isinstance(size, int):
        m = size
    elif isinstance(size, dict):
        m, aspect = size.get("m"), size.get("aspect")
    try:
        cfg = build_config(doc["regime"], doc.get("lambda", 0.0), doc["n"], theta=doc.get("theta"),
                           m=m, aspect=aspect)
        return ExperimentPlan(
            config=cfg,
            replicates=doc["replicates"],
            horizon_t=doc.get("horizon_t", 1.0),
            seed=doc["seed"],
            targets=tuple(doc["targets"]),
            output_dir=Path(output_dir or doc.get("output_dir", "results")),
            dt=doc.get("dt", 1e-3),
            tolerances=doc.get("tolerances", {}),
            name=doc.get("name", Path(path).stem),
            figures=doc.get("figures", True),
            continuum_replicates=doc.get("continuum_replicates"),
            continuum_T=doc.get("continuum_T", 15.0),
            second_n=doc.get("second_n"),
            trend_groups=doc.get("trend_groups", 3),
            trend_horizon_t=doc.get("trend_horizon_t", 3.0),
            threads=threads,
        )
    except ValueError as exc:
        raise PlanError(str(exc)) from None


def _config_from_args(args):
    return build_config(args.regime, args.lam, args.n, theta=args.theta, m=args.m, aspect=args.aspect)


def _add_graph_flags(p: argparse.ArgumentParser, n_required: bool = True) -> None:
    p.add_argument("--regime", choices=[r.value for r in Regime], default="moderate")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    size = p.add_mutually_exclusive_group()
    size.add_argument("--theta", type=float, help="m = round(theta * n) (moderate)")
    size.add_argument("--aspect", type=float, help="m = round(n ** aspect) (light / heavy)")
    size.add_argument("--m", type=int, help="explicit number of communities (light / heavy)")
    p.add_argument("--n", type=int, required=n_required)
    p.add_argument("--seed", type=int, default=0)


def cmd_sample(args) -> int:
    cfg = _config_from_args(args)
    B = sample_bipartite(cfg, args.seed)
    trace = explore(B)
    sizes = component_sizes(trace)
    largest = int(sizes[0]) if sizes.size else 0
    sc = scaling_set(cfg)
    print(f"regime={cfg.regime.value} n={cfg.n} m={cfg.m} p={cfg.p:.6g} seed={args.seed} "
          f"edges={B.num_edges} expected_edges={cfg.n * cfg.m * cfg.p:.6g} "
          f"components={sizes.size} largest={largest} largest_rescaled={largest * sc.mass_scale:.6g}")
    if args.dump_graph:
        B.dump(args.dump_graph)
    return EXIT_OK


def cmd_explore(args) -> int:
    if args.graph:
        B = BipartiteGraph.load(args.graph)
        swapped = False
    else:
        if args.n is None:
            raise ValueError("give --n (with regime flags) or --graph")
        cfg = _config_from_args(args)
        B = sample_bipartite(cfg, args.seed)
        swapped = cfg.swapped
        if swapped:
            B = B.transpose()
    rule = RootRule.smallest() if args.root_rule == "smallest" else RootRule.uniform(args.seed)
    trace = explore(B, rule, args.max_steps)
    if args.trace_csv:
        trace.write_csv(args.trace_csv)
    audit = audit_trace(trace)
    total = sum(audit.values())
    side = "community" if swapped else "individual"
    print(f"explored {trace.steps} steps from the {side} side, {len(trace.comp_ranges[0])} complete components")
    print(f"audit: {total} violations " + " ".join(f"{k}={v}" for k, v in audit.items()))
    return EXIT_OK if total == 0 else EXIT_ERROR


def cmd_campaign(args) -> int:
    plan = load_plan(args.plan, threads=args.threads, output_dir=args.output_dir)
    result = run_campaign(plan)
    width = max([len(t) for t in result.reports] + [6])
    print(f"{'target':<{width}}  result  seconds")
    for target, reports in result.reports.items():
        tag = "PASS" if result.target_passed(target) else "FAIL"
        print(f"{target:<{width}}  {tag:<6}  {result.wall_clock[target]:.1f}")
        for r in reports:
            print(f"    {r.line()}")
    for target, tb in result.errors.items():
        print(f"error in {target}:\n{tb}", file=sys.stderr)
    if plan.output_dir is not None:
        print(f"results in {Path(plan.output_dir) / plan.name}")
    return EXIT_OK if result.passed else EXIT_FAILED


def cmd_limits(args) -> int:
    params = LimitParams(args.lam, None if args.inf else args.theta)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = simulate_limit_path(params, args.dt, args.T, args.seed)
    path.write_csv(out / "path.csv")
    exc = excursions(path, "drop")
    top = min(args.top, len(exc))
    counts, specs = [], []
    with open(out / "shortcuts.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "s", "t"])
        for k in range(1, top + 1):
            atoms = sample_poisson_surplus(path, exc, k, args.seed)
            sc = shortcuts_from_atoms(path, exc, k, atoms)
            counts.append(len(sc))
            specs.append(metric_spec(path, exc, k, sc))
            for s, t in sc.pairs.tolist():
                w.writerow([k, f"{s:.10g}", f"{t:.10g}"])
    write_excursion_csv(exc, counts, out / "excursions.csv")
    print(f"path: {path.S.size} grid points, dt={args.dt}, T={args.T}; excursions: {len(exc)}")
    for k in range(top):
        print(f"  excursion {k + 1}: zeta={exc.lengths[k]:.6g} shortcuts={counts[k]}")
    if args.ghp and specs:
        rows = []
        for factor in (16, 8, 4, 2):
            fine = coarsen(specs[0], factor // 2) if factor > 2 else specs[0]
            bound = ghp_upper_bound(fine, coarsen(specs[0], factor), factor * args.dt)
            rows.append({"coarse_resolution": factor * args.dt, "fine_resolution": factor * args.dt / 2,
                         "bound": bound})
            print(f"  ghp bound, excursion 1 at resolution {factor * args.dt:.3g} vs half of it: {bound:.6g}")
        (out / "ghp.json").write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    if not args.inf:
        rep = kappa_scaling_check(args.theta, args.dt, min(args.T, 1.0), args.kappa_replicates, args.seed,
                                  lam=args.lam)
        doc = {"theta": rep.theta, "kappa": rep.kappa, "drift_gap": rep.drift_gap,
               "variance_gap": rep.variance_gap, "mean_gap": rep.mean_gap, "var_gap": rep.var_gap,
               "ks": rep.ks.tolist(), "replicates": rep.replicates}
        (out / "kappa.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        print(f"  kappa={rep.kappa:.6g} drift_gap={rep.drift_gap:.3g} variance_gap={rep.variance_gap:.3g} "
              f"max_ks={float(np.max(rep.ks)) if rep.ks.size else math.nan:.3g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rigsim", description="Critical random intersection graph simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample one graph and print a summary")
    _add_graph_flags(p)
    p.add_argument("--dump-graph", metavar="PATH")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("explore", help="run the exploration and audit its identities")
    _add_graph_flags(p, n_required=False)
    p.add_argument("--graph", metavar="PATH", help="explore a dumped graph instead of sampling")
    p.add_argument("--trace-csv", metavar="PATH")
    p.add_argument("--root-rule", choices=["uniform", "smallest"], default="uniform")
    p.add_argument("--max-steps", type=int)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("campaign", help="run an experiment plan")
    p.add_argument("plan")
    p.add_argument("--threads", type=int, help="worker threads (default: all cores; RIG_THREADS overrides)")
    p.add_argument("--output-dir", help="override the plan's output_dir")
    p.set_defaults(func=cmd_campaign)

    p = sub.add_parser("limits", help="simulate the continuum limit objects")
    kind = p.add_mutually_exclusive_group(required=True)
    kind.add_argument("--theta", type=float)
    kind.add_argument("--inf", action="store_true", help="theta = infinity")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--T", type=float, default=15.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--top", type=int, default=3, help="excursions that get shortcut sets")
    p.add_argument("--ghp", action="store_true", help="report GHP bounds against coarser grids")
    p.add_argument("--kappa-replicates", type=int, default=200)
    p.set_defaults(func=cmd_limits)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except (PlanError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
