"""Batch command-line front-end.

Subcommands simulate paths, run the filter, solve the control problem,
estimate utilities, and run the structural comparisons, writing
deterministic CSV/JSON artifacts. Exit codes: 0 success, 1 validation
failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import artifacts
from .config import ScenarioConfig, load_scenario
from .errors import ConfigError, ReinsureError
from .evaluation import (
    compare_information,
    mc_expected_utility,
    theta_sweep,
    worker_count,
)
from .filtering import run_filter
from .model import check_admissibility
from .premiums import StandardPremiums, validate_premium_contract
from .simulate import simulate_claims, simulate_chain, wealth_path
from .solver import full_info_policy, solve_backward
from .strategies import ConstantStrategy, FeedbackStrategy, FullInfoStrategy


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reinsure",
        description="Hidden-environment insurance risk simulation and optimal reinsurance control",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in [
        ("validate", "check admissibility and premium-contract axioms"),
        ("simulate", "simulate claim paths and controlled wealth"),
        ("filter", "run the claim filter and export its trajectory"),
        ("solve", "solve the value/policy tables"),
        ("evaluate", "Monte-Carlo expected utility of the configured strategy"),
        ("compare", "partial- vs full-information comparison"),
        ("sweep", "optimal retention across reinsurance loadings"),
    ]:
        p = sub.add_parser(name, help=desc)
        p.add_argument("--config", required=True, help="scenario JSON path")
        p.add_argument("--seed", type=int, default=None, help="override evaluation seed")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--paths", type=int, default=None, help="override path count")
        p.add_argument("--dt", type=int, default=None, help="override solver time steps")
        p.add_argument("--resolution", type=int, default=None, help="override simplex resolution")
        if name == "filter":
            p.add_argument("--events", default=None, help="CSV of events to filter instead of simulating")
            p.add_argument("--path-id", type=int, default=0, help="path id to select from the events CSV")
    return parser


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    solver = cfg.solver
    if args.dt is not None:
        solver = dataclasses.replace(solver, n_time_steps=args.dt)
    if args.resolution is not None:
        solver = dataclasses.replace(solver, simplex_resolution=args.resolution)
    evaluation = cfg.evaluation
    if args.seed is not None:
        evaluation = dataclasses.replace(evaluation, seed=args.seed)
    if args.paths is not None:
        evaluation = dataclasses.replace(evaluation, n_paths=args.paths)
    out = cfg.output_dir if args.out is None else args.out
    return dataclasses.replace(cfg, solver=solver, evaluation=evaluation, output_dir=out)


def _strategy_for(cfg: ScenarioConfig):
    if cfg.strategy.kind == "constant":
        return ConstantStrategy(cfg.strategy.retention)
    if cfg.strategy.kind == "full_info":
        return FullInfoStrategy(full_info_policy(cfg.model, cfg.contract, cfg.principle, cfg.market))
    _value, policy = solve_backward(cfg.model, cfg.contract, cfg.principle, cfg.market, cfg.solver)
    return FeedbackStrategy(policy)


def _cmd_validate(cfg: ScenarioConfig) -> int:
    adm = check_admissibility(cfg.model, cfg.market)
    prem_report = validate_premium_contract(cfg.model, cfg.principle, cfg.contract, cfg.market)
    payload = {
        "admissibility": {
            "threshold": adm.threshold,
            "per_state": [
                {"state": i, "ok": ok, "mgf_abscissa": bound} for i, ok, bound in adm.per_state
            ],
            "passed": adm.passed,
        },
        "premium_contract": prem_report.as_dict(),
    }
    artifacts.write_json(os.path.join(cfg.output_dir, "validate.json"), payload)
    print(adm)
    print(f"premium contract checks: {'pass' if prem_report.passed else 'FAIL'}")
    return 0 if adm.passed and prem_report.passed else 1


def _cmd_simulate(cfg: ScenarioConfig) -> int:
    strategy = _strategy_for(cfg)
    premiums = StandardPremiums(cfg.model, cfg.principle, cfg.contract, cfg.market)
    horizon = cfg.market.horizon_t
    grid = np.linspace(0.0, horizon, cfg.evaluation.n_intervals + 1)
    paths, samples = [], []
    for k in range(cfg.evaluation.n_paths):
        chain = simulate_chain(cfg.model, horizon, cfg.evaluation.seed, k)
        cp = simulate_claims(cfg.model, chain, cfg.evaluation.seed, k)
        traj = run_filter(cp.events, cfg.model, horizon=horizon)
        samples.append(wealth_path(cp, strategy, premiums, cfg.market, grid, filter_traj=traj))
        paths.append(cp)
    artifacts.write_events_csv(os.path.join(cfg.output_dir, "events.csv"), paths)
    artifacts.write_wealth_csv(os.path.join(cfg.output_dir, "wealth.csv"), samples)
    print(f"wrote {len(paths)} paths to {cfg.output_dir}/events.csv and wealth.csv")
    return 0


def _read_events(path: str, path_id: int):
    import csv

    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{path}: no event rows")
    cols = rows[0].keys()
    if "time" not in cols or "claim_size" not in cols:
        raise ConfigError(f"{path}: expected 'time' and 'claim_size' columns")
    events = []
    for row in rows:
        if "path_id" in cols and int(row["path_id"]) != path_id:
            continue
        events.append((float(row["time"]), float(row["claim_size"])))
    return events


def _cmd_filter(cfg: ScenarioConfig, events_file, path_id: int) -> int:
    horizon = cfg.market.horizon_t
    if events_file is None:
        cp = simulate_claims(
            cfg.model, simulate_chain(cfg.model, horizon, cfg.evaluation.seed, 0), cfg.evaluation.seed, 0
        )
        events = cp.events
    else:
        events = _read_events(events_file, path_id)
    grid = np.linspace(0.0, horizon, max(cfg.evaluation.n_intervals, 1) * 10 + 1)
    traj = run_filter(events, cfg.model, sample_grid=grid, horizon=horizon)
    artifacts.write_filter_csv(os.path.join(cfg.output_dir, "filter.csv"), traj)
    print(f"wrote filter trajectory ({len(events)} events) to {cfg.output_dir}/filter.csv")
    return 0


def _cmd_solve(cfg: ScenarioConfig) -> int:
    value, policy = solve_backward(cfg.model, cfg.contract, cfg.principle, cfg.market, cfg.solver)
    artifacts.write_tables_csv(os.path.join(cfg.output_dir, "tables.csv"), value, policy)
    print(
        f"solved {len(value.times)} x {value.grid.size} grid; "
        f"v(0) in [{value.values[0].min():.6g}, {value.values[0].max():.6g}]; "
        f"wrote {cfg.output_dir}/tables.csv"
    )
    return 0


def _cmd_evaluate(cfg: ScenarioConfig) -> int:
    strategy = _strategy_for(cfg)
    premiums = StandardPremiums(cfg.model, cfg.principle, cfg.contract, cfg.market)
    est = mc_expected_utility(
        cfg.model, strategy, premiums, cfg.market,
        cfg.evaluation.n_paths, cfg.evaluation.seed, workers=worker_count(),
    )
    artifacts.write_json(os.path.join(cfg.output_dir, "utility.json"), est.as_dict())
    print(f"utility {est.mean:.6f} +/- {est.std_error:.6f} ({est.n_paths} paths, {est.strategy})")
    return 0


def _cmd_compare(cfg: ScenarioConfig) -> int:
    report = compare_information(cfg.model, cfg.contract, cfg.principle, cfg.market, cfg.solver)
    artifacts.write_json(os.path.join(cfg.output_dir, "comparison.json"), report.as_dict())
    if not report.precondition_ok:
        print(f"comparison preconditions violated: {report.precondition_note}")
        return 1
    artifacts.write_comparison_csv(os.path.join(cfg.output_dir, "comparison.csv"), report)
    print(
        f"max retention violation {report.max_retention_violation:.3g}; "
        f"min jump margin {report.min_jump_margin:.3g}"
    )
    return 0


def _cmd_sweep(cfg: ScenarioConfig) -> int:
    sweep = theta_sweep(
        cfg.model, cfg.contract, cfg.principle, cfg.market, cfg.sweep_thetas, cfg.solver
    )
    artifacts.write_sweep_csv(os.path.join(cfg.output_dir, "sweep.csv"), sweep)
    artifacts.write_json(os.path.join(cfg.output_dir, "sweep.json"), sweep.as_dict())
    status = "monotone" if sweep.monotone_ok() else "NOT monotone"
    print(f"retention across thetas {list(sweep.thetas)}: {status}; wrote {cfg.output_dir}/sweep.csv")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_scenario(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "validate":
            return _cmd_validate(cfg)
        if args.command == "simulate":
            return _cmd_simulate(cfg)
        if args.command == "filter":
            return _cmd_filter(cfg, args.events, args.path_id)
        if args.command == "solve":
            return _cmd_solve(cfg)
        if args.command == "evaluate":
            return _cmd_evaluate(cfg)
        if args.command == "compare":
            return _cmd_compare(cfg)
        if args.command == "sweep":
            return _cmd_sweep(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ReinsureError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
