"""Run configuration files.

A run config is a YAML document. Every section is optional and missing keys
take their defaults; unknown keys anywhere are rejected. Physical quantities
carry their unit in the key name. Example::

    schema_version: 1
    scenario: jaywalker_feasible      # or ``problem: gen_03``
    solver: central_path
    seed: 0
    output_dir: runs/feasible
    scenario_settings:
      initial_speed_kmh: 18.0
    vehicle:
      steer_max_rad: 0.6
    solver_config:
      inner_tol: 1.0e-6
    schedule:
      lambda0: 0.5
      growth: 2.0
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .catalog import get_problem
from .core import RulebookError
from .scalarization import DwsParams, LambdaSchedule
from .scenarios import SCENARIO_SOLVER_CONFIG, SCENARIOS, SOLVERS, ScenarioSettings, scenario_settings
from .solvers import SolverConfig
from .vehicle import VehicleParams

SCHEMA_VERSION = 1
OUTPUT_ROOT_ENV = "LEXRANK_OUTPUT_DIR"

# config key -> VehicleParams field
VEHICLE_KEYS = {
    "l_f_m": "l_f",
    "l_r_m": "l_r",
    "width_m": "width",
    "length_m": "length",
    "a_min_mps2": "a_min",
    "a_max_mps2": "a_max",
    "steer_max_rad": "steer_max",
}
_SOLVER_KEYS = {f.name: f.name for f in dataclasses.fields(SolverConfig) if f.name != "seed"}
_SCHEDULE_KEYS = {f.name: f.name for f in dataclasses.fields(LambdaSchedule)}
_DWS_KEYS = {"a": "a", "c": "c"}
_TOP_KEYS = (
    "schema_version",
    "scenario",
    "problem",
    "solver",
    "seed",
    "output_dir",
    "scenario_settings",
    "vehicle",
    "solver_config",
    "schedule",
    "dws",
)


class ConfigError(RulebookError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class RunConfig:
    """A fully validated run description.

    Exactly one of ``scenario`` and ``problem`` is set. ``scenario_settings``
    holds only the overrides given in the file, as sorted ``(key, value)``
    pairs so the config stays hashable.
    """

    solver: str
    scenario: Optional[str] = None
    problem: Optional[str] = None
    scenario_settings: tuple = ()
    vehicle: VehicleParams = VehicleParams()
    solver_config: SolverConfig = field(default_factory=SolverConfig)
    schedule: LambdaSchedule = LambdaSchedule()
    dws: DwsParams = DwsParams()
    output_dir: str = "lexrank_out"
    schema_version: int = SCHEMA_VERSION

    @property
    def seed(self) -> int:
        return self.solver_config.seed

    @property
    def overrides(self) -> dict:
        return dict(self.scenario_settings)

    @property
    def target(self) -> str:
        return self.scenario if self.scenario is not None else self.problem


def resolve_output_dir(path, env=None) -> Path:
    """Relative output paths are placed under ``$LEXRANK_OUTPUT_DIR`` when it is set."""
    env = os.environ if env is None else env
    p = Path(path)
    root = env.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


# -- value checking ----------------------------------------------------------


def _typed(value, default, where):
    """Coerce ``value`` to the type of ``default`` or raise a ConfigError."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, str):
            try:
                value = float(value)  # YAML reads "1e-6" (no dot) as a string
            except ValueError:
                raise ConfigError(f"{where}: expected a number, got {value!r}") from None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        value = float(value)
        if math.isnan(value):
            raise ConfigError(f"{where}: NaN is not allowed")
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported value {value!r}")


def _section(raw, name, keys: dict, base):
    """Build a dataclass from ``base`` with the section's keys applied."""
    if raw is None:
        return base
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected a mapping")
    unknown = sorted(set(raw) - set(keys))
    if unknown:
        raise ConfigError(f"{name}: unknown key(s) {unknown}; valid keys are {sorted(keys)}")
    changes = {}
    for key, val in raw.items():
        attr = keys[key]
        changes[attr] = _typed(val, getattr(base, attr), f"{name}.{key}")
    try:
        return dataclasses.replace(base, **changes)
    except RulebookError as err:
        raise ConfigError(f"{name}: {err}") from None


def _scenario_overrides(raw, scenario) -> tuple:
    if raw is None:
        return ()
    if not isinstance(raw, dict):
        raise ConfigError("scenario_settings: expected a mapping")
    if scenario is None:
        raise ConfigError("scenario_settings: only valid together with 'scenario'")
    defaults = ScenarioSettings()
    known = {f.name for f in dataclasses.fields(ScenarioSettings)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"scenario_settings: unknown key(s) {unknown}; valid keys are {sorted(known)}")
    out = {k: _typed(v, getattr(defaults, k), f"scenario_settings.{k}") for k, v in raw.items()}
    try:
        scenario_settings(scenario, out)
    except RulebookError as err:
        raise ConfigError(f"scenario_settings: {err}") from None
    return tuple(sorted(out.items()))


def config_from_dict(raw) -> RunConfig:
    """Validate a parsed document and fill in defaults."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a mapping")
    unknown = sorted(set(raw) - set(_TOP_KEYS))
    if unknown:
        raise ConfigError(f"config: unknown key(s) {unknown}; valid keys are {sorted(_TOP_KEYS)}")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: unsupported version {version!r}; this build reads {SCHEMA_VERSION}")

    scenario, problem = raw.get("scenario"), raw.get("problem")
    if (scenario is None) == (problem is None):
        raise ConfigError("config: set exactly one of 'scenario' and 'problem'")
    if scenario is not None and scenario not in SCENARIOS:
        raise ConfigError(f"scenario: unknown name {scenario!r}; valid options are {list(SCENARIOS)}")
    if problem is not None:
        if not isinstance(problem, str):
            raise ConfigError(f"problem: expected a string, got {problem!r}")
        try:
            get_problem(problem)
        except RulebookError as err:
            raise ConfigError(f"problem: {err}") from None

    solver = raw.get("solver", "central_path")
    if solver not in SOLVERS:
        raise ConfigError(f"solver: unknown name {solver!r}; valid options are {list(SOLVERS)}")

    base_cfg = SCENARIO_SOLVER_CONFIG if scenario is not None else SolverConfig()
    cfg = _section(raw.get("solver_config"), "solver_config", _SOLVER_KEYS, base_cfg)
    seed = _typed(raw.get("seed", cfg.seed), 0, "seed")
    cfg = dataclasses.replace(cfg, seed=seed)

    output_dir = _typed(raw.get("output_dir", "lexrank_out"), "", "output_dir")
    if not output_dir:
        raise ConfigError("output_dir: must not be empty")

    return RunConfig(
        solver=solver,
        scenario=scenario,
        problem=problem,
        scenario_settings=_scenario_overrides(raw.get("scenario_settings"), scenario),
        vehicle=_section(raw.get("vehicle"), "vehicle", VEHICLE_KEYS, VehicleParams()),
        solver_config=cfg,
        schedule=_section(raw.get("schedule"), "schedule", _SCHEDULE_KEYS, LambdaSchedule()),
        dws=_section(raw.get("dws"), "dws", _DWS_KEYS, DwsParams()),
        output_dir=output_dir,
    )


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark is not None else source
        problem = getattr(err, "problem", None) or str(err)
        raise ConfigError(f"{where}: YAML parse error: {problem}") from None
    return config_from_dict(raw)


def parse_config(path) -> RunConfig:
    """Read and validate a config file.

    Raises
    ------
    OSError
        The file cannot be read.
    ConfigError
        Malformed YAML (with line and column) or an invalid field.
    """
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"), str(path))


def config_to_dict(cfg: RunConfig) -> dict:
    """Plain-data form of ``cfg`` with every field explicit."""
    out = {"schema_version": cfg.schema_version}
    if cfg.scenario is not None:
        out["scenario"] = cfg.scenario
    else:
        out["problem"] = cfg.problem
    out["solver"] = cfg.solver
    out["seed"] = cfg.seed
    out["output_dir"] = cfg.output_dir
    if cfg.scenario_settings:
        out["scenario_settings"] = dict(cfg.scenario_settings)
    out["vehicle"] = {key: float(getattr(cfg.vehicle, attr)) for key, attr in VEHICLE_KEYS.items()}
    out["solver_config"] = {key: getattr(cfg.solver_config, attr) for key, attr in _SOLVER_KEYS.items()}
    out["schedule"] = {key: float(getattr(cfg.schedule, attr)) for key, attr in _SCHEDULE_KEYS.items()}
    out["dws"] = {key: float(getattr(cfg.dws, attr)) for key, attr in _DWS_KEYS.items()}
    return out


def serialize_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
