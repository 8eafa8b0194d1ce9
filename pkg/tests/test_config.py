import dataclasses

import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from lexrank.config import (
    OUTPUT_ROOT_ENV,
    ConfigError,
    config_from_dict,
    config_to_dict,
    parse_config,
    parse_config_text,
    resolve_output_dir,
    serialize_config,
)
from lexrank.scenarios import SCENARIO_SOLVER_CONFIG, SCENARIOS, SOLVERS

DOC = """
schema_version: 1
scenario: jaywalker_feasible
solver: timescale
seed: 7
scenario_settings:
  initial_speed_kmh: 20
vehicle:
  steer_max_rad: 0.6
solver_config:
  inner_tol: 1e-7
schedule:
  growth: 3
"""


def test_full_document():
    cfg = parse_config_text(DOC)
    assert cfg.solver == "timescale" and cfg.seed == 7
    assert cfg.overrides == {"initial_speed_kmh": 20.0}
    assert cfg.vehicle.steer_max == 0.6
    assert cfg.solver_config.inner_tol == 1e-7
    assert cfg.solver_config.max_step == SCENARIO_SOLVER_CONFIG.max_step
    assert cfg.schedule.growth == 3.0


def test_defaults():
    cfg = config_from_dict({"problem": "line_1d"})
    assert cfg.solver == "central_path" and cfg.output_dir == "lexrank_out"
    assert cfg.solver_config.max_step != SCENARIO_SOLVER_CONFIG.max_step or cfg.solver_config.inner_tol != SCENARIO_SOLVER_CONFIG.inner_tol


@pytest.mark.parametrize(
    "raw, needle",
    [
        ({}, "exactly one"),
        ({"problem": "line_1d", "scenario": "post_overtake"}, "exactly one"),
        ({"problem": "line_1d", "solver": "simplex"}, "valid options"),
        ({"problem": "line_1d", "colour": 1}, "unknown key"),
        ({"problem": "line_1d", "schedule": {"growth": 1.0}}, "schedule"),
        ({"problem": "line_1d", "schedule": {"growth": "fast"}}, "schedule.growth"),
        ({"problem": "line_1d", "seed": 1.5}, "seed"),
        ({"problem": "line_1d", "schema_version": 2}, "schema_version"),
        ({"problem": "line_1d", "scenario_settings": {"dt_s": 1.0}}, "scenario_settings"),
        ({"scenario": "post_overtake", "scenario_settings": {"dt_s": -1.0}}, "dt_s"),
        ({"scenario": "nowhere"}, "scenario"),
        ({"problem": "no_such_problem"}, "problem"),
        ({"problem": "line_1d", "vehicle": {"width": 2.0}}, "vehicle"),
    ],
)
def test_validation_messages(raw, needle):
    with pytest.raises(ConfigError, match=needle):
        config_from_dict(raw)


def test_yaml_error_has_location(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("problem: line_1d\nsolver: [central_path\n")
    with pytest.raises(ConfigError, match=r"bad\.yaml:\d+:\d+"):
        parse_config(p)
    with pytest.raises(OSError):
        parse_config(tmp_path / "missing.yaml")


def test_output_root_env(tmp_path):
    assert resolve_output_dir("run", {OUTPUT_ROOT_ENV: str(tmp_path)}) == tmp_path / "run"
    assert resolve_output_dir(str(tmp_path / "abs"), {OUTPUT_ROOT_ENV: "/elsewhere"}) == tmp_path / "abs"
    assert str(resolve_output_dir("run", {})) == "run"


@given(
    target=st.one_of(st.sampled_from(SCENARIOS).map(lambda s: ("scenario", s)), st.sampled_from(["line_1d", "gen_03"]).map(lambda p: ("problem", p))),
    solver=st.sampled_from(SOLVERS),
    seed=st.integers(0, 2**31),
    growth=st.floats(1.1, 10.0),
    tol=st.floats(1e-10, 1e-3),
    speed=st.floats(0.0, 60.0),
)
def test_round_trip(target, solver, seed, growth, tol, speed):
    raw = {target[0]: target[1], "solver": solver, "seed": seed, "schedule": {"growth": growth}, "solver_config": {"inner_tol": tol}}
    if target[0] == "scenario" and target[1] != "post_overtake":
        raw["scenario_settings"] = {"initial_speed_kmh": speed}
    cfg = config_from_dict(raw)
    assert parse_config_text(serialize_config(cfg)) == cfg
    assert config_from_dict(yaml.safe_load(serialize_config(cfg))) == cfg
    assert config_to_dict(dataclasses.replace(cfg)) == config_to_dict(cfg)
