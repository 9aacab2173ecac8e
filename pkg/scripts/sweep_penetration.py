#!/usr/bin/env python3
"""Penetration sweep on the 33-bus feeder.

Scales the default 400/200/600 kW wind/solar/biomass targets by a range of
factors, optimizes each level, and prints the expected-loss curve. Shows
the usual U-shape: losses fall with penetration until reverse flows start
to dominate.
"""

import argparse
import dataclasses
import time

from dgalloc import (
    DgModelSet,
    HourlyProfile,
    InjectionSet,
    PenetrationSpec,
    build_state_set,
    load_network,
    pso_optimize,
    solve,
)
from dgalloc.config import default_config


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--factors", type=float, nargs="+",
                        default=[0.5, 1.0, 1.5, 2.0, 2.5])
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--samples-per-hour", type=int, default=2)
    parser.add_argument("--iterations", type=int, default=60)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()

    cfg = dataclasses.replace(
        default_config(),
        seed=args.seed,
        samples_per_hour=args.samples_per_hour,
        iterations=args.iterations,
    )
    network = load_network(cfg.buses_csv, cfg.branches_csv, cfg.system_base())
    base = solve(network, InjectionSet.from_network(network), cfg.sweep_settings())
    wind = HourlyProfile.from_csv(cfg.wind_profile_csv, "wind")
    solar = HourlyProfile.from_csv(cfg.solar_profile_csv, "irradiance")
    states = build_state_set(
        wind, solar, cfg.sigma_rule(), cfg.samples_per_hour, cfg.seed, cfg.beta_fit
    )
    models = DgModelSet(pv=cfg.pv_params(), wind_turbine=cfg.turbine_params())
    grid = cfg.candidate_grid(network)

    print(f"base loss: {base.total_loss_kw:.2f} kW (load {network.total_load_kw:.0f} kW)")
    print(f"{'factor':>7}{'wind+solar+biomass kW':>24}{'expected kW':>13}{'of base':>9}{'time s':>8}")
    for factor in args.factors:
        spec = PenetrationSpec(
            wind_kw=round(cfg.wind_kw * factor / cfg.step_kw) * cfg.step_kw,
            solar_kw=round(cfg.solar_kw * factor / cfg.step_kw) * cfg.step_kw,
            biomass_kw=round(cfg.biomass_kw * factor / cfg.step_kw) * cfg.step_kw,
        )
        started = time.perf_counter()
        result = pso_optimize(
            network, spec, states, models, cfg.voltage_limits(),
            settings=cfg.pso_settings(), grid=grid,
            threads=args.threads, sweep=cfg.sweep_settings(),
        )
        elapsed = time.perf_counter() - started
        expected = result.report.expected_loss_kw
        print(
            f"{factor:>7.2f}{spec.total_kw:>24.0f}{expected:>13.2f}"
            f"{100 * expected / base.total_loss_kw:>8.1f}%{elapsed:>8.1f}"
        )


if __name__ == "__main__":
    main()
