"""Run configuration: TOML file loading, CLI overrides, resolved-copy export.

A run is fully reproducible from its resolved config: every knob the
pipeline reads lives here, and ``to_toml`` round-trips values exactly
(floats are written with repr precision).
"""

import dataclasses
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .data import data_path
from .dgmodels import PvModuleParams, WindTurbineParams
from .network import Network, SystemBase, VoltageLimits
from .optimizer import CandidateGrid, PenetrationSpec, PsoSettings
from .powerflow import SweepSettings
from .stochastic import BETA_FIT_MODES, SigmaRule


class ConfigError(ValueError):
    """The config file is malformed or contains unknown keys."""


@dataclass(frozen=True)
class RunConfig:
    # paths
    buses_csv: str = ""
    branches_csv: str = ""
    wind_profile_csv: str = ""
    solar_profile_csv: str = ""
    # base
    s_base_kva: float = 1000.0
    v_base_kv: float = 12.66
    slack_voltage_pu: float = 1.0
    # limits
    v_min_pu: float = 0.95
    v_max_pu: float = 1.05
    # sweep
    tolerance_pu: float = 1e-6
    max_iterations: int = 100
    # penetration targets and sizing grid
    wind_kw: float = 400.0
    solar_kw: float = 200.0
    biomass_kw: float = 600.0
    step_kw: float = 25.0
    per_bus_max_kw: float = 100.0
    # candidate buses per kind; empty means every non-slack bus
    wind_candidates: tuple = ()
    solar_candidates: tuple = ()
    biomass_candidates: tuple = ()
    # pv module
    k_i_a_per_c: float = 0.00122
    k_v_v_per_c: float = 0.0144
    i_mp_a: float = 4.76
    v_mp_v: float = 17.32
    i_sc_a: float = 5.32
    v_oc_v: float = 21.98
    t_op_c: float = 43.0
    p_max_w: float = 75.0
    t_a_c: float = 25.0
    n_cells: int = 1
    # wind turbine
    v_in_ms: float = 4.0
    v_off_ms: float = 25.0
    v_n_ms: float = 16.0
    p_n_kw: float = 400.0
    # stochastic sampling
    samples_per_hour: int = 10
    seed: int = 42
    beta_fit: str = "moments"
    sigma_fraction: float = 0.1
    sigma_floor: float = 0.02
    # pso
    swarm_size: int = 50
    iterations: int = 200
    inertia: float = 0.729
    cognitive: float = 1.494
    social: float = 1.494
    velocity_clamp: float = 0.5
    penalty_kw_per_pu: float = 1e4
    stall_restart_after: int = 8
    polish: bool = True
    polish_eval_budget: int = 4000
    # output
    out_dir: str = "out"
    threads: int = 1

    def __post_init__(self):
        if self.beta_fit not in BETA_FIT_MODES:
            raise ConfigError(f"beta_fit must be one of {BETA_FIT_MODES}, got {self.beta_fit!r}")
        if self.samples_per_hour < 1:
            raise ConfigError("samples_per_hour must be at least 1")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")

    # builders for the domain objects used by the pipeline

    def system_base(self) -> SystemBase:
        return SystemBase(s_base_kva=self.s_base_kva, v_base_kv=self.v_base_kv)

    def voltage_limits(self) -> VoltageLimits:
        return VoltageLimits(v_min=self.v_min_pu, v_max=self.v_max_pu)

    def sweep_settings(self) -> SweepSettings:
        return SweepSettings(
            tolerance=self.tolerance_pu,
            max_iterations=self.max_iterations,
            slack_voltage_pu=self.slack_voltage_pu,
        )

    def penetration(self) -> PenetrationSpec:
        return PenetrationSpec(
            wind_kw=self.wind_kw, solar_kw=self.solar_kw, biomass_kw=self.biomass_kw
        )

    def pv_params(self) -> PvModuleParams:
        return PvModuleParams(
            k_i=self.k_i_a_per_c,
            k_v=self.k_v_v_per_c,
            i_mp=self.i_mp_a,
            v_mp=self.v_mp_v,
            i_sc=self.i_sc_a,
            v_oc=self.v_oc_v,
            t_op=self.t_op_c,
            p_max=self.p_max_w,
            t_a=self.t_a_c,
            n_cells=self.n_cells,
        )

    def turbine_params(self) -> WindTurbineParams:
        return WindTurbineParams(
            v_in=self.v_in_ms, v_off=self.v_off_ms, v_n=self.v_n_ms, p_n_kw=self.p_n_kw
        )

    def pso_settings(self) -> PsoSettings:
        return PsoSettings(
            swarm_size=self.swarm_size,
            iterations=self.iterations,
            inertia=self.inertia,
            cognitive=self.cognitive,
            social=self.social,
            velocity_clamp=self.velocity_clamp,
            seed=self.seed,
            penalty_kw_per_pu=self.penalty_kw_per_pu,
            stall_restart_after=self.stall_restart_after,
            polish=self.polish,
            polish_eval_budget=self.polish_eval_budget,
        )

    def sigma_rule(self) -> SigmaRule:
        return SigmaRule(fraction=self.sigma_fraction, floor=self.sigma_floor)

    def candidate_grid(self, network: Network) -> CandidateGrid:
        non_slack = tuple(sorted(int(b.id) for b in network.buses if not b.is_slack))

        def pick(explicit):
            return tuple(sorted(int(b) for b in explicit)) if explicit else non_slack

        return CandidateGrid(
            wind=pick(self.wind_candidates),
            solar=pick(self.solar_candidates),
            biomass=pick(self.biomass_candidates),
            step_kw=self.step_kw,
            per_bus_max_kw=self.per_bus_max_kw,
        )


# section -> key -> RunConfig field
_SCHEMA = {
    "paths": {
        "buses": "buses_csv",
        "branches": "branches_csv",
        "wind_profile": "wind_profile_csv",
        "solar_profile": "solar_profile_csv",
    },
    "base": {
        "s_base_kva": "s_base_kva",
        "v_base_kv": "v_base_kv",
        "slack_voltage_pu": "slack_voltage_pu",
    },
    "limits": {"v_min_pu": "v_min_pu", "v_max_pu": "v_max_pu"},
    "sweep": {"tolerance_pu": "tolerance_pu", "max_iterations": "max_iterations"},
    "penetration": {
        "wind_kw": "wind_kw",
        "solar_kw": "solar_kw",
        "biomass_kw": "biomass_kw",
        "step_kw": "step_kw",
        "per_bus_max_kw": "per_bus_max_kw",
    },
    "candidates": {
        "wind": "wind_candidates",
        "solar": "solar_candidates",
        "biomass": "biomass_candidates",
    },
    "pv": {
        "k_i_a_per_c": "k_i_a_per_c",
        "k_v_v_per_c": "k_v_v_per_c",
        "i_mp_a": "i_mp_a",
        "v_mp_v": "v_mp_v",
        "i_sc_a": "i_sc_a",
        "v_oc_v": "v_oc_v",
        "t_op_c": "t_op_c",
        "p_max_w": "p_max_w",
        "t_a_c": "t_a_c",
        "n_cells": "n_cells",
    },
    "wind_turbine": {
        "v_in_ms": "v_in_ms",
        "v_off_ms": "v_off_ms",
        "v_n_ms": "v_n_ms",
        "p_n_kw": "p_n_kw",
    },
    "stochastic": {
        "samples_per_hour": "samples_per_hour",
        "seed": "seed",
        "beta_fit": "beta_fit",
        "sigma_fraction": "sigma_fraction",
        "sigma_floor": "sigma_floor",
    },
    "pso": {
        "swarm_size": "swarm_size",
        "iterations": "iterations",
        "inertia": "inertia",
        "cognitive": "cognitive",
        "social": "social",
        "velocity_clamp": "velocity_clamp",
        "penalty_kw_per_pu": "penalty_kw_per_pu",
        "stall_restart_after": "stall_restart_after",
        "polish": "polish",
        "polish_eval_budget": "polish_eval_budget",
    },
    "output": {"directory": "out_dir", "threads": "threads"},
}

_PATH_FIELDS = ("buses_csv", "branches_csv", "wind_profile_csv", "solar_profile_csv")
_INT_FIELDS = {
    "max_iterations",
    "samples_per_hour",
    "seed",
    "swarm_size",
    "iterations",
    "threads",
    "n_cells",
    "stall_restart_after",
    "polish_eval_budget",
}
_BOOL_FIELDS = {"polish"}
_TUPLE_FIELDS = {"wind_candidates", "solar_candidates", "biomass_candidates"}


def default_config() -> RunConfig:
    """The bundled 33-bus study with the default day profiles."""
    return RunConfig(
        buses_csv=data_path("ieee33_buses.csv"),
        branches_csv=data_path("ieee33_branches.csv"),
        wind_profile_csv=data_path("wind_profile.csv"),
        solar_profile_csv=data_path("solar_profile.csv"),
    )


def _coerce(field_name: str, value, where: str):
    if field_name in _TUPLE_FIELDS:
        if not isinstance(value, list) or not all(isinstance(v, int) for v in value):
            raise ConfigError(f"{where}: expected a list of bus ids")
        return tuple(value)
    if field_name in _PATH_FIELDS or field_name in ("out_dir", "beta_fit"):
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    if field_name in _BOOL_FIELDS:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean")
        return value
    if field_name in _INT_FIELDS:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number")
    return float(value)


def load_config(path) -> RunConfig:
    """Read a TOML config; keys not in the schema are rejected.

    Relative paths are resolved against the config file's directory.
    """
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    updates = {}
    for section, content in raw.items():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        if not isinstance(content, dict):
            raise ConfigError(f"{path}: [{section}] must be a table")
        for key, value in content.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            field_name = _SCHEMA[section][key]
            updates[field_name] = _coerce(field_name, value, f"{path}: {section}.{key}")

    base_dir = path.resolve().parent
    for field_name in _PATH_FIELDS + ("out_dir",):
        if field_name in updates:
            p = Path(updates[field_name])
            if not p.is_absolute():
                updates[field_name] = str(base_dir / p)

    try:
        return dataclasses.replace(default_config(), **updates)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def apply_overrides(config: RunConfig, **overrides) -> RunConfig:
    """Apply CLI flag overrides; None values are ignored."""
    updates = {k: v for k, v in overrides.items() if v is not None}
    if not updates:
        return config
    return dataclasses.replace(config, **updates)


def _toml_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        text = repr(value)
        # TOML floats need a dot or exponent
        return text if ("." in text or "e" in text or "E" in text) else text + ".0"
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(value, tuple):
        return "[" + ", ".join(_toml_scalar(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {value!r}")


def to_toml(config: RunConfig) -> str:
    """Serialize the full resolved config; re-loading reproduces it exactly."""
    lines = []
    for section, keys in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, field_name in keys.items():
            lines.append(f"{key} = {_toml_scalar(getattr(config, field_name))}")
        lines.append("")
    return "\n".join(lines)


def write_resolved(config: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(to_toml(config))
