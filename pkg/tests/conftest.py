import pytest

from dgalloc import (
    Branch,
    Bus,
    CandidateGrid,
    DgModelSet,
    HourlyProfile,
    Network,
    PenetrationSpec,
    SystemBase,
)
from dgalloc.config import default_config
from dgalloc.data import data_path


@pytest.fixture(scope="session")
def unit_base():
    # z_base = 1 ohm and s_base = 1000 kVA, so pu values read off directly
    return SystemBase(s_base_kva=1000.0, v_base_kv=1.0)


@pytest.fixture(scope="session")
def two_bus(unit_base):
    buses = [Bus(1, 0.0, 0.0, is_slack=True), Bus(2, 100.0, 0.0)]
    branches = [Branch(1, 2, r_ohm=0.1, x_ohm=0.0)]
    return Network(buses, branches, unit_base)


@pytest.fixture(scope="session")
def network33():
    from dgalloc import load_network

    return load_network(
        data_path("ieee33_buses.csv"), data_path("ieee33_branches.csv"), SystemBase()
    )


@pytest.fixture(scope="session")
def run_config():
    return default_config()


@pytest.fixture(scope="session")
def models(run_config):
    return DgModelSet(pv=run_config.pv_params(), wind_turbine=run_config.turbine_params())


@pytest.fixture(scope="session")
def day_profiles(run_config):
    wind = HourlyProfile.from_csv(run_config.wind_profile_csv, "wind")
    solar = HourlyProfile.from_csv(run_config.solar_profile_csv, "irradiance")
    return wind, solar


@pytest.fixture(scope="session")
def feeder6():
    """Small lightly loaded feeder whose base case already meets 0.95 pu."""
    buses = [Bus(1, 0.0, 0.0, is_slack=True)] + [
        Bus(i, 400.0, 200.0) for i in range(2, 7)
    ]
    branches = [Branch(i, i + 1, r_ohm=0.8, x_ohm=0.5) for i in range(1, 6)]
    return Network(buses, branches, SystemBase())


@pytest.fixture(scope="session")
def feeder6_grid():
    return CandidateGrid(
        wind=(2, 4, 6),
        solar=(3, 5, 6),
        biomass=(2, 3, 4),
        step_kw=50.0,
        per_bus_max_kw=100.0,
    )


@pytest.fixture(scope="session")
def feeder6_spec():
    # two 50 kW steps per kind
    return PenetrationSpec(wind_kw=100.0, solar_kw=100.0, biomass_kw=100.0)


@pytest.fixture(scope="session")
def reference_allocation(network33, run_config):
    import json

    from dgalloc import Allocation

    with open(data_path("reference_allocation.json"), encoding="utf-8") as handle:
        entries = json.load(handle)["allocation"]
    allocation = Allocation.from_json_list(entries, run_config.candidate_grid(network33))
    allocation.validate_against(run_config.penetration())
    return allocation
