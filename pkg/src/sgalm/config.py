"""Flat ``key = value`` run files.

Scenario keys are the :class:`~sgalm.model.ScenarioConfig` field names;
power-valued keys may instead carry a ``_dbm`` suffix. Solver keys are the
:class:`~sgalm.optimizer.SolverOptions` field names. Lists are comma
separated and a single value is broadcast over users or targets. ``#``
starts a comment.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ConfigError, ScenarioConfig, dbm_to_watts, watts_to_dbm
from .optimizer import SolverOptions

REQUIRED = (
    "carrier_frequency",
    "num_antennas",
    "num_users",
    "num_targets",
    "noise_power",
    "max_power",
    "beampattern_thresholds",
    "rate_thresholds",
    "target_angles",
)
DBM_KEYS = ("noise_power", "max_power", "beampattern_thresholds")
SWEEP_PARAMETERS = {
    "M": "num_antennas",
    "num_antennas": "num_antennas",
    "omega": "beampattern_thresholds_dbm",
    "beampattern_thresholds_dbm": "beampattern_thresholds_dbm",
    "method": "method",
}

_SCENARIO_FIELDS = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
_SOLVER_FIELDS = {f.name: f for f in dataclasses.fields(SolverOptions)}
_EXPERIMENT_KEYS = ("sweep_parameter", "sweep_values", "trials", "workers")


@dataclass
class RunConfig:
    scenario: ScenarioConfig
    solver: SolverOptions
    sweep_parameter: str | None = None
    sweep_values: list = field(default_factory=list)
    trials: int = 50
    workers: int = 1


def parse_text(text: str) -> dict[str, str]:
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = value
    return entries


def _floats(key, value):
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected numbers, got {value!r}") from None


def _scalar(key, value, kind):
    try:
        if kind is bool:
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if kind is int:
            f = float(value)
            if not f.is_integer():
                raise ValueError
            return int(f)
        if kind is float:
            return float(value)
        return value
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}") from None


def _broadcast(key, values, n):
    if len(values) == 1 and n != 1:
        return values * n
    return values


def build_run_config(entries: dict[str, str]) -> RunConfig:
    entries = dict(entries)
    scen = {}
    for base in DBM_KEYS:
        dkey = base + "_dbm"
        if dkey in entries:
            if base in entries:
                raise ConfigError(f"both {base!r} and {dkey!r} given")
            vals = dbm_to_watts(_floats(dkey, entries.pop(dkey))).tolist()
            entries[base] = ",".join(repr(v) for v in vals)
    for key in REQUIRED:
        if key not in entries:
            hint = f" (or {key}_dbm)" if key in DBM_KEYS else ""
            raise ConfigError(f"missing required key {key!r}{hint}")

    for key in list(entries):
        if key not in _SCENARIO_FIELDS:
            continue
        value = entries.pop(key)
        if key in ("beampattern_thresholds", "rate_thresholds", "target_angles", "user_center", "target_range_interval"):
            scen[key] = _floats(key, value)
        elif key in ("num_antennas", "num_users", "num_targets", "rng_seed"):
            scen[key] = _scalar(key, value, int)
        else:
            scen[key] = _scalar(key, value, float)
    scen["beampattern_thresholds"] = _broadcast("beampattern_thresholds", scen["beampattern_thresholds"], scen["num_targets"])
    scen["rate_thresholds"] = _broadcast("rate_thresholds", scen["rate_thresholds"], scen["num_users"])
    if scen["num_targets"] == 0:
        scen["beampattern_thresholds"] = []
        scen["target_angles"] = []

    solver = {}
    for key in list(entries):
        if key not in _SOLVER_FIELDS:
            continue
        value = entries.pop(key)
        if key == "multiplier_bounds":
            solver[key] = tuple(_floats(key, value))
        elif key == "max_step_norm" and value.lower() in ("none", "off"):
            solver[key] = None
        else:
            default = _SOLVER_FIELDS[key].default
            kind = type(default) if default is not None else float
            solver[key] = _scalar(key, value, kind)

    run = {}
    for key in _EXPERIMENT_KEYS:
        if key in entries:
            run[key] = entries.pop(key)
    if entries:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(entries))}")

    scenario = ScenarioConfig(**scen)
    options = SolverOptions(**solver)
    cfg = RunConfig(scenario=scenario, solver=options)
    if "sweep_parameter" in run:
        cfg.sweep_parameter = normalize_sweep_parameter(run["sweep_parameter"])
    if "sweep_values" in run:
        cfg.sweep_values = [v.strip() for v in run["sweep_values"].split(",") if v.strip()]
    if "trials" in run:
        cfg.trials = _scalar("trials", run["trials"], int)
    if "workers" in run:
        cfg.workers = _scalar("workers", run["workers"], int)
    if cfg.trials < 1:
        raise ConfigError("trials must be >= 1")
    return cfg


def normalize_sweep_parameter(name: str) -> str:
    try:
        return SWEEP_PARAMETERS[name]
    except KeyError:
        raise ConfigError(f"cannot sweep {name!r}; choose from M, omega, method") from None


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return build_run_config(parse_text(text))


def scenario_dict(cfg: ScenarioConfig) -> dict:
    d = dataclasses.asdict(cfg)
    for k, v in d.items():
        if isinstance(v, tuple):
            d[k] = list(v)
    d["sinr_thresholds"] = np.asarray(cfg.sinr_thresholds).tolist()
    d["noise_power_dbm"] = float(watts_to_dbm(cfg.noise_power))
    d["max_power_dbm"] = float(watts_to_dbm(cfg.max_power))
    d["beampattern_thresholds_dbm"] = np.atleast_1d(watts_to_dbm(np.asarray(cfg.beampattern_thresholds, float))).tolist()
    d["wavelength"] = cfg.wavelength
    return d


def apply_sweep_value(run: RunConfig, parameter: str, value) -> RunConfig:
    """Copy of ``run`` with one swept parameter replaced."""
    scenario, solver = run.scenario, run.solver
    if parameter == "num_antennas":
        scenario = dataclasses.replace(scenario, num_antennas=int(float(value)))
    elif parameter == "beampattern_thresholds_dbm":
        watts = float(dbm_to_watts(float(value)))
        scenario = dataclasses.replace(scenario, beampattern_thresholds=(watts,) * scenario.num_targets)
    elif parameter == "method":
        solver = dataclasses.replace(solver, method=str(value))
    else:
        raise ConfigError(f"cannot sweep {parameter!r}")
    return dataclasses.replace(run, scenario=scenario, solver=solver)
