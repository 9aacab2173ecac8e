"""Generator output models: PV module chain, wind turbine power curve, and
flat-dispatched biomass. All functions are pure; outputs scale linearly with
installed capacity through a fraction-of-nameplate number.
"""

import math
from dataclasses import dataclass

from .stochastic import State

DG_KINDS = ("wind", "solar", "biomass")


@dataclass(frozen=True)
class PvModuleParams:
    """Electrical and thermal parameters of one PV module.

    Units: k_i in A/degC, k_v in V/degC, currents in A, voltages in V,
    temperatures in degC, p_max in W. ``t_op`` is the nominal operating cell
    temperature, ``t_a`` the ambient temperature assumed for the run.
    ``n_cells`` (modules per array) is informational; capacity scaling goes
    through the nameplate fraction, not the module count.
    """

    k_i: float
    k_v: float
    i_mp: float
    v_mp: float
    i_sc: float
    v_oc: float
    t_op: float
    p_max: float
    t_a: float = 25.0
    n_cells: int = 1

    def __post_init__(self):
        for name in ("k_i", "k_v", "i_mp", "v_mp", "i_sc", "v_oc", "t_op", "p_max"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0.0:
                raise ValueError(f"{name} must be a positive finite number")
        if not math.isfinite(self.t_a):
            raise ValueError("t_a must be finite")
        if self.i_mp > self.i_sc:
            raise ValueError("i_mp cannot exceed i_sc")
        if self.v_mp > self.v_oc:
            raise ValueError("v_mp cannot exceed v_oc")
        if self.n_cells < 1:
            raise ValueError("n_cells must be at least 1")

    @property
    def fill_factor(self) -> float:
        """(v_mp * i_mp) / (v_oc * i_sc), always in (0, 1) for valid params."""
        return (self.v_mp * self.i_mp) / (self.v_oc * self.i_sc)


@dataclass(frozen=True)
class WindTurbineParams:
    """Cut-in / nominal / cut-off speeds in m/s and nameplate in kW."""

    v_in: float
    v_off: float
    v_n: float
    p_n_kw: float

    def __post_init__(self):
        if not (0.0 < self.v_in < self.v_n < self.v_off):
            raise ValueError("require 0 < v_in < v_n < v_off")
        if self.p_n_kw <= 0.0:
            raise ValueError("nameplate must be positive")


@dataclass(frozen=True)
class BiomassParams:
    """Dispatchable unit running flat at nameplate."""

    p_n_kw: float

    def __post_init__(self):
        if self.p_n_kw <= 0.0:
            raise ValueError("nameplate must be positive")


@dataclass(frozen=True)
class DgUnit:
    """One installed generator: kind, host bus id, capacity in kW."""

    kind: str
    bus: int
    capacity_kw: float

    def __post_init__(self):
        if self.kind not in DG_KINDS:
            raise ValueError(f"kind must be one of {DG_KINDS}, got {self.kind!r}")
        if self.capacity_kw <= 0.0:
            raise ValueError("capacity must be positive")


# defaults used by the bundled case study
DEFAULT_PV_MODULE = PvModuleParams(
    k_i=0.00122,   # 1.22 mA/degC
    k_v=0.0144,    # 14.40 mV/degC
    i_mp=4.76,
    v_mp=17.32,
    i_sc=5.32,
    v_oc=21.98,
    t_op=43.0,
    p_max=75.0,
)
DEFAULT_WIND_TURBINE = WindTurbineParams(v_in=4.0, v_off=25.0, v_n=16.0, p_n_kw=400.0)
DEFAULT_BIOMASS = BiomassParams(p_n_kw=600.0)


def _check_irradiance(s_avg: float):
    if not math.isfinite(s_avg) or not (0.0 <= s_avg <= 1.0):
        raise ValueError(f"irradiance must lie in [0, 1] kW/m^2, got {s_avg}")


def pv_cell_temperature(s_avg: float, params: PvModuleParams) -> float:
    """Cell temperature in degC: ambient plus irradiance heating through NOCT."""
    _check_irradiance(s_avg)
    return params.t_a + s_avg * (params.t_op - 20.0) / 0.8


def pv_output_fraction(s_avg: float, params: PvModuleParams) -> float:
    """Module output as a fraction of nameplate for irradiance in [0, 1] kW/m^2.

    Chain: cell temperature, then current I_c = s * (i_sc + k_i * (T_c - 25)),
    voltage V_c = v_oc - k_v * T_c, power P = fill_factor * V_c * I_c clamped
    at zero. Can slightly exceed 1 for irradiance and temperature more
    favorable than the rating point.
    """
    _check_irradiance(s_avg)
    t_c = pv_cell_temperature(s_avg, params)
    i_c = s_avg * (params.i_sc + params.k_i * (t_c - 25.0))
    v_c = params.v_oc - params.k_v * t_c
    p_module = max(0.0, params.fill_factor * v_c * i_c)
    return p_module / params.p_max


def wind_output_fraction(v: float, params: WindTurbineParams) -> float:
    """Piecewise power curve: 0 below cut-in, linear ramp to nominal, flat 1
    up to cut-off, 0 above."""
    if not math.isfinite(v) or v < 0.0:
        raise ValueError(f"wind speed must be non-negative, got {v}")
    if v < params.v_in:
        return 0.0
    if v < params.v_n:
        return (v - params.v_in) / (params.v_n - params.v_in)
    if v <= params.v_off:
        return 1.0
    return 0.0


def dg_state_output(
    unit: DgUnit,
    state: State,
    pv: PvModuleParams,
    wind_turbine: WindTurbineParams,
) -> float:
    """Power produced by one unit in one sampled state, in kW."""
    if unit.kind == "wind":
        return unit.capacity_kw * wind_output_fraction(state.wind_speed_ms, wind_turbine)
    if unit.kind == "solar":
        return unit.capacity_kw * pv_output_fraction(state.irradiance_kw_m2, pv)
    return unit.capacity_kw  # biomass is dispatched flat
