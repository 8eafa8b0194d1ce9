import json
from pathlib import Path

import numpy as np
import pytest

from lexrank.catalog import get_problem
from lexrank.outputs import (
    read_csv_header,
    sweep_filename,
    write_comparison_csv,
    write_csv,
    write_metadata,
    write_representability_csv,
    write_simlog,
    write_sweep_csv,
    write_trace_csv,
)
from lexrank.scalarization import LambdaSchedule, representability_check_violations
from lexrank.scenarios import build_scenario, compare_solvers, receding_horizon_run
from lexrank.solvers import SolverConfig, central_path_solve, random_start
from lexrank.sweep import landscape_scenario, landscape_sweep

GOLDEN = Path(__file__).parent / "golden"


def golden(name):
    return (GOLDEN / f"{name}.header").read_text().strip().split(",")


def line_trace(seed=0):
    rb = get_problem("line_1d").rulebook()
    return central_path_solve(rb, random_start(rb, seed), LambdaSchedule(), SolverConfig(seed=seed))


def test_trace_header_and_bytes(tmp_path):
    a = write_trace_csv(tmp_path / "a.csv", line_trace())
    b = write_trace_csv(tmp_path / "b.csv", line_trace())
    assert read_csv_header(a) == golden("trace_1d")
    assert a.read_bytes() == b.read_bytes()


def test_simlog_files(tmp_path):
    sc = build_scenario("jaywalker_feasible", {"max_steps": 3})
    paths = write_simlog(tmp_path / "run", receding_horizon_run(sc, "central_path"), {"seed": 0})
    assert read_csv_header(paths["trajectory"]) == golden("trajectory")
    assert read_csv_header(paths["steps"]) == golden("steps")
    lines = paths["trajectory"].read_text().splitlines()
    assert len(lines) == 5 and lines[-1].endswith(",,")
    assert len(list((tmp_path / "run" / "traces").glob("replan_*.csv"))) == 3
    meta = json.loads(paths["summary"].read_text())
    assert meta["schema_version"] == 1 and meta["min_clearance_m"] in ("inf", meta["min_clearance_m"])
    # a second identical run gives identical CSVs
    again = write_simlog(tmp_path / "run2", receding_horizon_run(sc, "central_path"))
    assert again["trajectory"].read_bytes() == paths["trajectory"].read_bytes()
    assert again["steps"].read_bytes() == paths["steps"].read_bytes()


def test_sweep_and_representability(tmp_path):
    sw = landscape_sweep(landscape_scenario(), [0.5], 4, 5)
    p = write_sweep_csv(tmp_path / sweep_filename(0.5), sw, 0.5)
    assert p.name == "sweep_lambda_0.5.csv"
    assert read_csv_header(p) == golden("sweep")
    assert len(p.read_text().splitlines()) == 21
    res = representability_check_violations([0.0, 1.0], [1.0, 0.0], [0.5, 1.0, 2.0])
    q = write_representability_csv(tmp_path / "rep.csv", res)
    assert read_csv_header(q) == golden("representability")
    assert q.read_text().splitlines()[1].endswith((",1", ",0"))


def test_comparison_header(tmp_path):
    rep = compare_solvers(build_scenario("post_overtake", {"max_steps": 2}), ["timescale", "dws_ascent"])
    p = write_comparison_csv(tmp_path / "c.csv", rep)
    assert read_csv_header(p) == golden("comparison")
    assert len(p.read_text().splitlines()) == 3


def test_writer_rejects_ragged_rows(tmp_path):
    with pytest.raises(ValueError):
        write_csv(tmp_path / "x.csv", ("a", "b"), [(1,)])


def test_metadata_is_strict_json(tmp_path):
    p = write_metadata(tmp_path / "m.json", {"x": np.inf, "v": np.arange(2), "ok": np.bool_(True)})
    doc = json.loads(p.read_text())
    assert doc == {"schema_version": 1, "x": "inf", "v": [0, 1], "ok": True}
