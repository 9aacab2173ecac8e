"""Optimal siting and sizing of distributed generation (wind, solar,
biomass) on radial distribution feeders, minimizing probability-weighted
power loss under stochastic wind speed and irradiance."""

from .dgmodels import (
    DEFAULT_BIOMASS,
    DEFAULT_PV_MODULE,
    DEFAULT_WIND_TURBINE,
    BiomassParams,
    DgUnit,
    PvModuleParams,
    WindTurbineParams,
    dg_state_output,
    pv_cell_temperature,
    pv_output_fraction,
    wind_output_fraction,
)
from .network import (
    Branch,
    Bus,
    Network,
    ParseError,
    SystemBase,
    TopologyError,
    UnknownBusError,
    VoltageLimits,
    load_network,
    validate_radial,
)
from .optimizer import (
    Allocation,
    CandidateGrid,
    DgModelSet,
    InfeasibleSpecError,
    InvalidAllocationError,
    ObjectiveEvaluator,
    ObjectiveReport,
    PenetrationSpec,
    PsoResult,
    PsoSettings,
    evaluate_allocation,
    pso_optimize,
    repair_penetration,
)
from .powerflow import (
    ConvergenceError,
    InjectionSet,
    PowerFlowBatch,
    PowerFlowResult,
    SweepSettings,
    solve,
    solve_states,
    total_loss,
    write_voltage_profile,
)
from .stochastic import (
    BetaParams,
    HourlyProfile,
    InfeasibleMomentsError,
    RayleighParams,
    SigmaRule,
    State,
    StateSet,
    beta_pdf,
    build_state_set,
    fit_beta_moments,
    fit_rayleigh,
    rayleigh_pdf,
)

__version__ = "0.1.0"
