"""CSV and JSON writers with fixed, versioned layouts.

Numeric cells use Python's shortest round-trip float repr, so identical runs
produce byte-identical CSV files. Wall-clock times only ever go to the JSON
metadata documents.

Column sets
-----------
trace        iter, lambda, objective, grad_norm, rank, inner_steps, x_0 .. x_{d-1}
trajectory   t, x, y, psi, v, a, delta      (controls empty on the final state)
steps        step, t, rank, clearance_m, inner_steps, then one column per AV rule
sweep        lambda, accel_mps2, steer_rad, value, then one column per AV rule
representability   lambda, f_x, f_y, agrees
comparison   solver, final_rank, steps, inner_steps, min_clearance_m,
             rank_disagreement, then integral_<rule> per AV rule
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .rules_av import RULE_IDS

SCHEMA_VERSION = 1

TRACE_COLUMNS = ("iter", "lambda", "objective", "grad_norm", "rank", "inner_steps")
TRAJECTORY_COLUMNS = ("t", "x", "y", "psi", "v", "a", "delta")
STEP_COLUMNS = ("step", "t", "rank", "clearance_m", "inner_steps") + RULE_IDS
SWEEP_COLUMNS = ("lambda", "accel_mps2", "steer_rad", "value") + RULE_IDS
REPRESENTABILITY_COLUMNS = ("lambda", "f_x", "f_y", "agrees")
COMPARISON_COLUMNS = ("solver", "final_rank", "steps", "inner_steps", "min_clearance_m", "rank_disagreement") + tuple(
    f"integral_{r}" for r in RULE_IDS
)


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row has {len(row)} cells, header has {len(header)}")
            w.writerow([_cell(v) for v in row])
    return path


def read_csv_header(path) -> list:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return next(csv.reader(fh))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)  # JSON has no inf/nan
    return obj


def write_metadata(path, meta: dict) -> Path:
    """JSON document with a ``schema_version`` field prepended."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"schema_version": SCHEMA_VERSION, **_jsonable(meta)}
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n", encoding="utf-8")
    return path


def trace_rows(trace) -> list:
    return [
        (r.iter, r.lam, r.objective, r.grad_norm, r.rank, r.inner_steps, *map(float, np.ravel(r.x)))
        for r in trace.iterations
    ]


def write_trace_csv(path, trace) -> Path:
    dim = int(np.size(trace.final_decision))
    header = TRACE_COLUMNS + tuple(f"x_{i}" for i in range(dim))
    return write_csv(path, header, trace_rows(trace))


def trace_metadata(trace) -> dict:
    return {
        "solver": trace.solver,
        "final_rank": trace.final_rank,
        "final_decision": trace.final_decision,
        "total_inner_steps": trace.total_inner_steps,
        "outer_iterations": len(trace.iterations),
        "converged": trace.converged,
        "iteration_limited": trace.iteration_limited,
        "lambda_at_last_rank_change": trace.lambda_at_last_rank_change,
    }


def write_trajectory_csv(path, log) -> Path:
    """Executed closed-loop trajectory of a :class:`SimLog`."""
    rows = []
    for k, z in enumerate(log.states):
        if k < log.steps:
            a, d = log.controls[k]
        else:
            a = d = None
        rows.append((k * log.dt, *map(float, z), a if a is None else float(a), d if d is None else float(d)))
    return write_csv(path, TRAJECTORY_COLUMNS, rows)


def write_steps_csv(path, log) -> Path:
    rows = [
        (k, k * log.dt, int(log.ranks[k]), float(log.clearances[k]), int(log.inner_steps[k]), *map(float, log.step_violations[k]))
        for k in range(log.steps)
    ]
    return write_csv(path, STEP_COLUMNS, rows)


def simlog_metadata(log) -> dict:
    return {
        "scenario": log.scenario,
        "solver": log.solver,
        "dt_s": log.dt,
        "steps": log.steps,
        "final_rank": log.final_rank,
        "reached_goal": log.reached_goal,
        "aborted": log.aborted,
        "error": log.error,
        "total_inner_steps": log.total_inner_steps,
        "min_clearance_m": log.min_clearance,
        "violation_integrals": dict(zip(RULE_IDS, map(float, log.violation_integrals()))),
        "wall_time_s": log.wall_time,
    }


def write_simlog(out_dir, log, meta: dict | None = None) -> dict:
    """Trajectory, per-step scores, per-replan traces and a summary document.

    Replans solved by a continuation method get one trace CSV each under
    ``traces/``. Returns the written paths by role.
    """
    out_dir = Path(out_dir)
    paths = {
        "trajectory": write_trajectory_csv(out_dir / "trajectory.csv", log),
        "steps": write_steps_csv(out_dir / "steps.csv", log),
    }
    for k, tr in enumerate(log.traces):
        if hasattr(tr, "iterations"):
            write_trace_csv(out_dir / "traces" / f"replan_{k:03d}.csv", tr)
    summary = simlog_metadata(log)
    summary.update(meta or {})
    paths["summary"] = write_metadata(out_dir / "summary.json", summary)
    return paths


def write_sweep_csv(path, sweep, lam: float) -> Path:
    return write_csv(path, SWEEP_COLUMNS, sweep.rows(lam))


def sweep_filename(lam: float) -> str:
    return f"sweep_lambda_{lam:g}.csv"


def write_representability_csv(path, result) -> Path:
    rows = [tuple(r[c] for c in REPRESENTABILITY_COLUMNS) for r in result.rows()]
    return write_csv(path, REPRESENTABILITY_COLUMNS, rows)


def write_comparison_csv(path, report) -> Path:
    rows = []
    for r in report.rows:
        rows.append(
            (
                r.solver,
                r.final_rank,
                r.steps,
                r.inner_steps,
                r.min_clearance,
                report.rank_disagreement,
                *map(float, r.violation_integrals),
            )
        )
    return write_csv(path, COMPARISON_COLUMNS, rows)
