"""Command-line entry point.

Subcommands: ``solve`` (catalog problem), ``scenario`` (closed-loop run),
``compare`` (several solvers on one scenario), ``sweep`` (utility landscape)
and ``oracle`` (grid ground truth). Every subcommand writes its files under
an output directory and reports failures with a distinct exit status.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from .catalog import get_problem
from .config import ConfigError, config_from_dict, config_to_dict, parse_config, resolve_output_dir, serialize_config
from .core import RulebookError, rank
from .outputs import (
    sweep_filename,
    trace_metadata,
    write_comparison_csv,
    write_metadata,
    write_simlog,
    write_sweep_csv,
    write_trace_csv,
)
from .scalarization import dws_objective
from .scenarios import SOLVERS, ScenarioAborted, build_scenario, compare_solvers, receding_horizon_run
from .solvers import (
    DivergenceError,
    central_path_solve,
    grid_oracle,
    preemptive_solve,
    random_start,
    solve_inner,
    timescale_solve,
)
from .sweep import dominance_margin, equal_value_pair, landscape_scenario, landscape_sweep, value_overlap

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4

log = logging.getLogger("lexrank")


def _parse_set(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = yaml.safe_load(value)
    return out


def _run_config(args, target_key: str, target):
    """Config file (if any) overlaid with the command-line flags, then validated."""
    raw = config_to_dict(parse_config(args.config)) if args.config else {}
    if target is not None:
        raw.pop("scenario", None)
        raw.pop("problem", None)
        raw[target_key] = target
        if target_key == "problem":
            raw.pop("scenario_settings", None)
    if getattr(args, "solver", None):
        raw["solver"] = args.solver
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out:
        raw["output_dir"] = args.out
    extra = _parse_set(getattr(args, "set", None))
    if extra:
        raw["scenario_settings"] = {**raw.get("scenario_settings", {}), **extra}
    if "scenario" not in raw and "problem" not in raw:
        raise ConfigError(f"no {target_key} given; pass --{'name' if target_key == 'scenario' else 'problem'} or --config")
    return config_from_dict(raw)


def _out_dir(path) -> Path:
    out = resolve_output_dir(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario_from(cfg):
    return build_scenario(cfg.scenario, cfg.overrides, cfg.vehicle)


# -- subcommands -------------------------------------------------------------


def cmd_solve(args) -> int:
    cfg = _run_config(args, "problem", args.problem)
    if cfg.problem is None:
        raise ConfigError("solve needs a catalog problem, not a scenario")
    out = _out_dir(cfg.output_dir)
    rb = get_problem(cfg.problem).rulebook()
    x0 = random_start(rb, cfg.seed)
    t0 = time.perf_counter()
    meta = {"problem": cfg.problem, "solver": cfg.solver, "seed": cfg.seed}
    if cfg.solver in ("central_path", "timescale"):
        fn = central_path_solve if cfg.solver == "central_path" else timescale_solve
        trace = fn(rb, x0, cfg.schedule, cfg.solver_config)
        write_trace_csv(out / "trace.csv", trace)
        meta.update(trace_metadata(trace))
    else:
        if cfg.solver == "preemptive":
            res = preemptive_solve(rb, x0, cfg.solver_config)
            x, steps, converged = res.x, res.total_inner_steps, res.converged
            meta["stage_levels"] = res.stage_levels
        else:
            res = solve_inner(dws_objective(rb, dataclasses.replace(cfg.dws, N=rb.N)), x0, cfg.solver_config, rb.bounds)
            x, steps, converged = res.x, res.steps, res.converged
        meta.update(final_decision=x, final_rank=rank(rb, x), total_inner_steps=steps, converged=converged)
    meta["wall_time_s"] = time.perf_counter() - t0
    meta["config"] = config_to_dict(cfg)
    write_metadata(out / "metadata.json", meta)
    log.info("%s on %s: final rank %s, %s inner steps -> %s", cfg.solver, cfg.problem, meta["final_rank"], meta["total_inner_steps"], out)
    return EXIT_OK


def cmd_scenario(args) -> int:
    cfg = _run_config(args, "scenario", args.name)
    if cfg.scenario is None:
        raise ConfigError("scenario needs a scenario name, not a catalog problem")
    out = _out_dir(cfg.output_dir)
    (out / "config.yaml").write_text(serialize_config(cfg), encoding="utf-8")
    sc = _scenario_from(cfg)
    try:
        lg = receding_horizon_run(sc, cfg.solver, cfg.solver_config, cfg.schedule, cfg.dws)
    except ScenarioAborted as err:
        write_simlog(out, err.log, {"seed": cfg.seed})
        raise
    write_simlog(out, lg, {"seed": cfg.seed})
    log.info(
        "%s / %s: %d steps, final rank %d, goal reached: %s -> %s",
        cfg.scenario, cfg.solver, lg.steps, lg.final_rank, lg.reached_goal, out,
    )
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _run_config(args, "scenario", args.name)
    if cfg.scenario is None:
        raise ConfigError("compare needs a scenario name, not a catalog problem")
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    unknown = [s for s in solvers if s not in SOLVERS]
    if unknown:
        raise ConfigError(f"--solvers: unknown name(s) {unknown}; valid options are {list(SOLVERS)}")
    out = _out_dir(cfg.output_dir)
    sc = _scenario_from(cfg)
    report = compare_solvers(sc, solvers, cfg.solver_config, cfg.schedule, cfg.dws)
    write_comparison_csv(out / "comparison.csv", report)
    for key, lg in report.logs.items():
        write_simlog(out / key.replace("#", "_"), lg, {"seed": cfg.seed})
    write_metadata(
        out / "comparison.json",
        {
            "scenario": cfg.scenario,
            "solvers": solvers,
            "rank_disagreement": report.rank_disagreement,
            "wall_time_s": {r.solver: r.wall_time for r in report.rows},
            "config": config_to_dict(cfg),
        },
    )
    for row in report.table():
        log.info("%s", row)
    return EXIT_OK


def _lambdas(text: str) -> list:
    try:
        lams = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"--lambda expects comma-separated numbers, got {text!r}") from None
    if not lams or any(not lam > 0 for lam in lams):
        raise ConfigError("--lambda values must be positive")
    return lams


def cmd_sweep(args) -> int:
    lams = _lambdas(args.lambdas)
    out = _out_dir(args.out or "lexrank_out")
    sc = landscape_scenario(_parse_set(args.set))
    sw = landscape_sweep(sc, lams, args.accel_points, args.steer_points)
    meta = {"lambdas": lams, "accel_points": args.accel_points, "steer_points": args.steer_points, "files": []}
    for lam in lams:
        path = write_sweep_csv(out / sweep_filename(lam), sw, lam)
        meta["files"].append(path.name)
        if sw.r0_cells.any() and not sw.r0_cells.all():
            meta[f"lambda_{lam:g}"] = {
                "dominance_margin": dominance_margin(sw, lam),
                "value_overlap_r0_r3": value_overlap(sw, lam),
                "closest_r0_r3_gap": equal_value_pair(sw, lam)[0],
            }
    write_metadata(out / "sweep.json", meta)
    log.info("wrote %s", ", ".join(meta["files"]))
    return EXIT_OK


def cmd_oracle(args) -> int:
    problem = get_problem(args.problem)
    out = _out_dir(args.out or "lexrank_out")
    points = args.points or problem.points_per_dim
    res = grid_oracle(problem.rulebook(), points_per_dim=points)
    write_metadata(
        out / "oracle.json",
        {
            "problem": problem.name,
            "min_rank": res.min_rank,
            "lex_argmin": res.lex_argmin,
            "argmin_violations": res.argmin_violations,
            "grid_size": res.grid_size,
            "points_per_dim": points,
        },
    )
    log.info("%s: min rank %d at %s", problem.name, res.min_rank, np.array2string(res.lex_argmin, precision=4))
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lexrank", description="Lexicographic rulebook optimization toolkit.")
    p.add_argument("-q", "--quiet", action="store_true", help="only report errors")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, solver=True):
        sp.add_argument("--config", help="YAML run config; flags override its values")
        if solver:
            sp.add_argument("--solver", help="central_path, timescale, preemptive or dws_ascent")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory (relative paths go under $LEXRANK_OUTPUT_DIR if set)")

    sp = sub.add_parser("solve", help="solve a catalog problem")
    sp.add_argument("--problem", help="catalog problem id, e.g. line_1d or gen_03")
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("scenario", help="closed-loop receding-horizon run")
    sp.add_argument("--name", help="jaywalker_infeasible, jaywalker_feasible or post_overtake")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a scenario setting")
    common(sp)
    sp.set_defaults(func=cmd_scenario)

    sp = sub.add_parser("compare", help="run several solvers on one scenario")
    sp.add_argument("--name")
    sp.add_argument("--solvers", default="central_path,timescale,dws_ascent")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE")
    common(sp, solver=False)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("sweep", help="utility landscape over single-step controls")
    sp.add_argument("--lambda", dest="lambdas", default="0.5,34", help="comma-separated multipliers")
    sp.add_argument("--accel-points", type=int, default=200)
    sp.add_argument("--steer-points", type=int, default=200)
    sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a landscape scenario setting")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("oracle", help="grid ground truth for a catalog problem")
    sp.add_argument("--problem", required=True)
    sp.add_argument("--points", type=int, help="grid points per dimension")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ScenarioAborted, DivergenceError) as err:
        log.error("diverged: %s", err)
        return EXIT_DIVERGENCE
    except RulebookError as err:  # includes ConfigError
        log.error("invalid input: %s", err)
        return EXIT_VALIDATION
    except OSError as err:
        log.error("I/O error: %s", err)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
