"""Command-line entry point.

Subcommands:

    analyze    transient metrics over a TTL grid -> CSV
    sweep      one analyze series per value of a swept parameter -> CSV
    optimize   grid TTL optimization, optionally load-constrained -> CSV
    simulate   Monte Carlo run -> CSV report + key=value summary on stdout
    validate   analytic vs Monte Carlo z-scores; nonzero exit on failure
    placement  fluid placement marking (and optional simulated occupancy)

All CSV output is plain text with a header row and stable formatting, so
reruns with identical flags and seed are byte-identical. ``--out`` paths
that are relative resolve against $TIERWALK_OUT_DIR when set.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import replace

import numpy as np

from .optimizer import constrained_ttl, find_optimal_ttl
from .scenario import Scenario, ScenarioError, fluid_node_labels, load_scenario, to_fluid_tree
from .fluid import mark_placement
from .simulator import estimate_reliability, run_placement_convergence, simulate
from .transient import PublisherModel, UnstablePublisherError, transient_series

__all__ = ["main"]


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return "nan"
        return format(float(value), ".12g")
    return str(value)


def _resolve_out(path: str | None):
    if path is None:
        return None
    if not os.path.isabs(path):
        base = os.environ.get("TIERWALK_OUT_DIR")
        if base:
            return os.path.join(base, path)
    return path


def _write_csv(path: str | None, header: list[str], rows):
    """Write rows to path, or stdout when no path is given."""

    def emit(handle):
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])

    if path is None:
        emit(sys.stdout)
    else:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            emit(handle)


def _grid_from_args(args, scenario: Scenario) -> list[float]:
    ttl = scenario.ttl
    t_min = ttl.t_min if args.t_min is None else args.t_min
    t_max = ttl.t_max if args.t_max is None else args.t_max
    t_step = ttl.t_step if args.t_step is None else args.t_step
    if t_step <= 0:
        raise ValueError("--t-step must be positive")
    if t_max < t_min:
        raise ValueError("--t-max must be at least --t-min")
    values = []
    t = t_min
    while t <= t_max + 1e-9:
        values.append(round(t, 12))
        t += t_step
    return values


def _load(args) -> Scenario:
    scenario = load_scenario(args.scenario)
    if getattr(args, "mode", None):
        scenario = scenario.with_mode(args.mode)
    return scenario


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise ValueError(f"could not parse --values list {text!r}") from None


def _apply_param(scenario: Scenario, name: str, value: float) -> Scenario:
    if name == "p":
        tiers = tuple(replace(t, availability=value) for t in scenario.hierarchy.tiers)
        return replace(scenario, hierarchy=replace(scenario.hierarchy, tiers=tiers))
    if name == "t0":
        return replace(scenario, publisher=PublisherModel.fixed(value))
    if name == "lambda":
        return replace(scenario, demand=value)
    if name == "mu":
        if scenario.publisher.kind != "mm1":
            raise ValueError("sweeping mu requires an mm1 publisher in the scenario")
        return replace(scenario, publisher=PublisherModel.mm1(value, scenario.publisher.scale))
    raise ValueError(f"unknown sweep parameter {name!r} (choose p, t0, lambda, mu)")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_analyze(args) -> int:
    scenario = _load(args)
    grid = _grid_from_args(args, scenario)
    series = transient_series(
        scenario.hierarchy, scenario.publisher, scenario.demand, grid, scenario.mode,
        unstable="nan",
    )
    rows = zip(series.t_grid, series.reliability, series.mean_lifetime,
               series.mean_hit, series.publisher_load)
    _write_csv(_resolve_out(args.out), ["T", "R", "E_L", "E_H", "lambda_pub"], rows)
    return 0


def cmd_sweep(args) -> int:
    scenario = _load(args)
    grid = _grid_from_args(args, scenario)
    values = _parse_values(args.values)
    if not values:
        raise ValueError("--values produced an empty list")
    rows = []
    for value in values:
        variant = _apply_param(scenario, args.param, value)
        series = transient_series(
            variant.hierarchy, variant.publisher, variant.demand, grid, variant.mode,
            unstable="nan",
        )
        for idx in range(series.t_grid.size):
            rows.append([args.param, value, series.t_grid[idx], series.reliability[idx],
                         series.mean_lifetime[idx], series.mean_hit[idx],
                         series.publisher_load[idx]])
    _write_csv(_resolve_out(args.out),
               ["param", "value", "T", "R", "E_L", "E_H", "lambda_pub"], rows)
    return 0


def cmd_optimize(args) -> int:
    scenario = _load(args)
    grid = _grid_from_args(args, scenario)
    if args.budget is not None:
        result = constrained_ttl(scenario, grid, args.budget, refine=args.refine)
    else:
        result = find_optimal_ttl(scenario, grid, refine=args.refine)
    rows = zip(result.t_grid, result.reliability, result.mean_lifetime,
               result.objective, result.publisher_load, result.feasible)
    _write_csv(_resolve_out(args.out),
               ["T", "R", "E_L", "E_H", "lambda_pub", "feasible"], rows)
    print(f"optimal_ttl={_fmt(result.optimal_ttl)}")
    print(f"optimal_objective={_fmt(result.optimal_objective)}")
    if args.budget is not None:
        print(f"load_budget={_fmt(result.load_budget)}")
        if result.constrained_ttl is None:
            print("constrained_ttl=infeasible")
        else:
            print(f"constrained_ttl={_fmt(result.constrained_ttl)}")
            print(f"constrained_objective={_fmt(result.constrained_objective)}")
    return 0


def _report_pairs(report) -> list[tuple[str, object]]:
    pairs = [
        ("seed", report.seed),
        ("ttl", report.ttl),
        ("engine", report.engine),
        ("created", report.created),
        ("samples", report.samples),
        ("in_flight", report.in_flight),
        ("hits_in_tier", report.hits_in_tier),
        ("publisher_services", report.publisher_services),
        ("hit_time_mean", report.hit_time_mean),
        ("hit_time_var", report.hit_time_var),
        ("bottom_in_domain", report.bottom_in_domain),
        ("bottom_in_domain_misses", report.bottom_in_domain_misses),
        ("empirical_reliability", report.empirical_reliability),
        ("publisher_rate", report.publisher_rate),
        ("publisher_cost_mean", report.publisher_cost_mean),
        ("publisher_cost_se", report.publisher_cost_se),
        ("walk_steps", report.walk_steps),
        ("escalations", report.escalations),
        ("cache_stores", report.cache_stores),
        ("evictions", report.evictions),
    ]
    for level, per_tier in enumerate(report.occupancy):
        for node, value in enumerate(per_tier):
            pairs.append((f"occupancy_tier{level + 1}_node{node}", value))
    return pairs


def cmd_simulate(args) -> int:
    scenario = _load(args)
    if args.horizon is not None:
        report = simulate(scenario, args.seed, horizon=args.horizon, ttl=args.t)
    else:
        report = simulate(scenario, args.seed, samples=args.samples, ttl=args.t)
    pairs = _report_pairs(report)
    for key, value in pairs:
        print(f"{key}={_fmt(value)}")
    if args.out is not None:
        _write_csv(_resolve_out(args.out), ["metric", "value"], pairs)
    return 0


def cmd_validate(args) -> int:
    scenario = _load(args)
    t_values = _parse_values(args.t_values) if args.t_values else [scenario.ttl.t]
    series = transient_series(
        scenario.hierarchy, scenario.publisher, scenario.demand, t_values, scenario.mode
    )
    rows = []
    max_z = 0.0
    for idx, t in enumerate(t_values):
        report = simulate(scenario, args.seed, samples=args.samples, ttl=t, stream=idx)
        emp_r, _ = estimate_reliability(report)
        ana_r = float(series.reliability[idx])
        se_r = math.sqrt(max(ana_r * (1.0 - ana_r), 0.0) / report.bottom_in_domain)
        z_r = 0.0 if emp_r == ana_r else (math.inf if se_r == 0 else (emp_r - ana_r) / se_r)
        ana_h = float(series.mean_hit[idx])
        se_h = report.hit_time_se()
        diff_h = report.hit_time_mean - ana_h
        z_h = 0.0 if diff_h == 0 else (math.inf if se_h == 0 else diff_h / se_h)
        max_z = max(max_z, abs(z_r), abs(z_h))
        rows.append([t, ana_r, emp_r, z_r, ana_h, report.hit_time_mean, z_h, report.samples])
        print(f"T={_fmt(t)} z_R={_fmt(z_r)} z_EH={_fmt(z_h)}")
    if args.out is not None:
        _write_csv(
            _resolve_out(args.out),
            ["T", "analytic_R", "empirical_R", "z_R", "analytic_EH", "empirical_EH",
             "z_EH", "samples"],
            rows,
        )
    print(f"max_z={_fmt(max_z)}")
    print(f"seed={args.seed}")
    if max_z >= args.z_threshold:
        print(
            f"validation failed: max |z| {_fmt(max_z)} exceeds {_fmt(args.z_threshold)}",
            file=sys.stderr,
        )
        return 1
    return 0


def cmd_placement(args) -> int:
    scenario = _load(args)
    tree = to_fluid_tree(scenario)
    marking = mark_placement(tree)
    labels = fluid_node_labels(scenario)
    occupancy = None
    if args.occupancy:
        table = run_placement_convergence(scenario, args.seed, args.horizon)
        occupancy = dict(zip(table.labels, table.occupancy))
    header = ["tier", "node", "demand", "offered_load", "stores_copy"]
    if occupancy is not None:
        header.append("occupancy")
    rows = []
    for idx, (tier_no, node) in enumerate(labels):
        row = [tier_no, node, tree.demands[idx], marking.offered[idx],
               marking.stores_copy[idx]]
        if occupancy is not None:
            row.append(occupancy[(tier_no, node)])
        rows.append(row)
    _write_csv(_resolve_out(args.out), header, rows)
    print(f"publisher_load={_fmt(marking.publisher_load)}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------


def _add_common(parser, grid: bool = False):
    parser.add_argument("--scenario", required=True, help="scenario file path")
    parser.add_argument("--mode", choices=["continuous", "discrete"],
                        help="override the scenario's walk mode")
    parser.add_argument("--out", help="output CSV path (default: stdout)")
    if grid:
        parser.add_argument("--t-min", type=float, default=None)
        parser.add_argument("--t-max", type=float, default=None)
        parser.add_argument("--t-step", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tierwalk",
        description="Random-walk content search analysis for tiered cache networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="transient metrics over a TTL grid")
    _add_common(p, grid=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="analyze once per value of a swept parameter")
    _add_common(p, grid=True)
    p.add_argument("--param", required=True, choices=["p", "t0", "lambda", "mu"])
    p.add_argument("--values", required=True, help="comma-separated list")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize", help="find the TTL minimizing E[H(T)]")
    _add_common(p, grid=True)
    p.add_argument("--budget", type=float, default=None,
                   help="publisher load budget for the constrained variant")
    p.add_argument("--refine", action="store_true",
                   help="re-grid once at 10x density around the incumbent")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("simulate", help="seeded Monte Carlo run")
    _add_common(p)
    p.add_argument("--t", type=float, default=None, help="TTL (default from scenario)")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--horizon", type=float, default=None,
                   help="simulate a time horizon instead of a sample count")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="analytic vs Monte Carlo cross-check")
    _add_common(p)
    p.add_argument("--t-values", default=None, help="comma-separated TTLs")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--z-threshold", type=float, default=3.0)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("placement", help="fluid placement marking")
    _add_common(p)
    p.add_argument("--occupancy", action="store_true",
                   help="also simulate long-run cache occupancy")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--horizon", type=float, default=10000.0)
    p.set_defaults(func=cmd_placement)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 1
    except UnstablePublisherError as exc:
        print(f"publisher error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
