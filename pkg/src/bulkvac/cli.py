"""Command-line interface: solve, simulate, compare and sweep workflows.

Exit codes: 0 success, 2 configuration/parse error, 3 unstable model,
4 solver failure, 5 comparison failure.  BULKVAC_LOG sets log verbosity.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import load_config, load_sweep_config, sweep_case_model
from .errors import ConfigError, SimulationError, SolverError, StabilityError
from .report import (
    render_sweep_figure,
    write_simulate_bundle,
    write_solve_bundle,
    write_sweep_csv,
)
from .simulate import simulate
from .solver import SolverOptions, solve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3
EXIT_SOLVER = 4
EXIT_COMPARE = 5

log = logging.getLogger("bulkvac.cli")


def _solver_options(overrides: dict, trunc: int | None) -> SolverOptions:
    opts = SolverOptions()
    known = {f for f in vars(opts)}
    for key, val in overrides.items():
        if key not in known:
            raise ConfigError(f"solver.{key}: unknown option")
        setattr(opts, key, val)
    if trunc is not None:
        opts.truncation = trunc
    return opts


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    model = cfg.model
    if args.policy:
        model = model.with_policy(args.policy)
    opts = _solver_options(cfg.solver, args.trunc)
    result = solve(model, opts)
    summary = write_solve_bundle(args.out, result, cfg.raw)
    print(f"solved: L_q={summary['measures']['L_q']:.3f} "
          f"P_busy={summary['measures']['P_busy']:.4f} "
          f"(tables in {args.out})")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    model = cfg.model
    if args.policy:
        model = model.with_policy(args.policy)
    sim_cfg = dict(cfg.simulation)
    seed = args.seed if args.seed is not None else int(sim_cfg.get("seed", 12345))
    events = args.events if args.events is not None else int(sim_cfg.get("events", 10 ** 6))
    warmup = float(sim_cfg.get("warmup", 0.2))
    batches = int(sim_cfg.get("batches", 32))
    guard = int(sim_cfg.get("queue_guard", 10 ** 6))
    est = simulate(model, seed, events, warmup, batches, guard)
    summary = write_simulate_bundle(args.out, model, est, cfg.raw)
    meas = summary["measures"]
    print(f"simulated {events} events (seed {seed}): "
          f"L_q={meas['L_q']['estimate']:.3f}+-{meas['L_q']['stderr']:.3f} "
          f"(tables in {args.out})")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = load_config(args.config)
    model = cfg.model
    if args.policy:
        model = model.with_policy(args.policy)
    opts = _solver_options(cfg.solver, None)
    result = solve(model, opts)
    sim_cfg = dict(cfg.simulation)
    seed = args.seed if args.seed is not None else int(sim_cfg.get("seed", 12345))
    events = args.events if args.events is not None else int(sim_cfg.get("events", 10 ** 7))
    est = simulate(model, seed, events,
                   float(sim_cfg.get("warmup", 0.2)), int(sim_cfg.get("batches", 32)),
                   int(sim_cfg.get("queue_guard", 10 ** 6)))
    analytic = result.report.as_dict()
    analytic["lambda"] = model.arrivals.rate
    for r, v in result.report.server_content.items():
        analytic[f"P_ser[{r}]"] = v
    for k, v in result.report.vacation_type.items():
        analytic[f"P_vac[{k}]"] = v
    rows = []
    for name, (est_val, se) in est.measures.items():
        ref = analytic.get(name)
        if ref is None or not isinstance(ref, float):
            continue
        if se > 0:
            z = (est_val - ref) / se
        else:
            z = 0.0 if est_val == ref else float("inf")
        rows.append((name, ref, est_val, se, z))
    worst = 0.0
    print(f"{'quantity':>10} {'solver':>12} {'simulated':>12} {'stderr':>10} {'z':>8}")
    for name, ref, est_val, se, z in rows:
        worst = max(worst, abs(z))
        print(f"{name:>10} {ref:>12.5f} {est_val:>12.5f} {se:>10.5f} {z:>8.2f}")
    print(f"worst |z| = {worst:.2f} over {len(rows)} quantities "
          f"({events} events, seed {seed})")
    if worst > args.z_limit:
        print(f"FAIL: |z| exceeds {args.z_limit}", file=sys.stderr)
        return EXIT_COMPARE
    return EXIT_OK


def _sweep_point(payload):
    """One (scale, case) solve; module-level so process pools can pickle it."""
    model, scale, case, rate, phases, solver_overrides = payload
    from .config import sweep_case_model as build
    from .solver import SolverOptions as SO, solve as run

    point = build(model, scale, case, rate, phases)
    row = {"l": scale, "case": case, "lambda": point.arrivals.rate,
           "rho": point.traffic_intensity, "L_q": None, "flagged": False}
    try:
        opts = SO()
        for k, v in solver_overrides.items():
            setattr(opts, k, v)
        res = run(point, opts)
        row["L_q"] = res.report.L_q
    except (StabilityError, SolverError) as exc:
        row["flagged"] = True
        row["reason"] = str(exc)
    return row


def cmd_sweep(args) -> int:
    spec = load_sweep_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [
        (spec["model"], scale, case, spec["vacation_rate"], spec["vacation_phases"],
         spec["solver"])
        for scale in spec["scales"]
        for case in ("qsdv", "qsiv")
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    write_sweep_csv(out / "sweep.csv", rows)
    render_sweep_figure(out / "sweep_lq.png", rows)
    flagged = sum(r["flagged"] for r in rows)
    print(f"sweep: {len(rows)} points ({flagged} flagged) written to {out / 'sweep.csv'}")
    for r in rows:
        if r["flagged"]:
            log.warning("flagged point l=%.3f case=%s: %s", r["l"], r["case"],
                        r.get("reason", ""))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bulkvac",
                                 description="Batch-service vacation queue solver and simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="solve a model and write distribution tables")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--policy", choices=("sv", "mv"))
    sp.add_argument("--trunc", type=int)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("simulate", help="simulate a model and write empirical tables")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--policy", choices=("sv", "mv"))
    sp.add_argument("--seed", type=int)
    sp.add_argument("--events", type=int)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("compare", help="solve and simulate, report z-scores")
    sp.add_argument("--config", required=True)
    sp.add_argument("--policy", choices=("sv", "mv"))
    sp.add_argument("--seed", type=int)
    sp.add_argument("--events", type=int)
    sp.add_argument("--z-limit", type=float, default=4.0)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("sweep", help="arrival-rate sweep over both vacation schedules")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("BULKVAC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StabilityError as exc:
        print(f"unstable model: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except (SolverError, SimulationError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
