"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as they
complete. Criterion 3 runs the full default study and takes about a minute.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest
from click.testing import CliRunner
from scipy.integrate import quad

from dgalloc import (
    BetaParams,
    DEFAULT_PV_MODULE,
    DEFAULT_WIND_TURBINE,
    DgModelSet,
    HourlyProfile,
    InjectionSet,
    ObjectiveEvaluator,
    PsoSettings,
    SweepSettings,
    beta_pdf,
    build_state_set,
    fit_beta_moments,
    fit_rayleigh,
    load_network,
    pso_optimize,
    rayleigh_pdf,
    solve,
    solve_states,
)
from dgalloc.cli import cli
from dgalloc.config import default_config
from dgalloc.stochastic import sample_rayleigh
from oracles import brute_force_best, newton_solve


@contextmanager
def criterion(number, description):
    try:
        yield
    except BaseException:
        print(f"[criterion {number}] FAIL: {description}")
        raise
    print(f"[criterion {number}] PASS: {description}")


@pytest.fixture(scope="module")
def study():
    """The full default 33-bus optimization (criteria 3 and 8)."""
    cfg = default_config()
    network = load_network(cfg.buses_csv, cfg.branches_csv, cfg.system_base())
    wind = HourlyProfile.from_csv(cfg.wind_profile_csv, "wind")
    solar = HourlyProfile.from_csv(cfg.solar_profile_csv, "irradiance")
    states = build_state_set(
        wind, solar, cfg.sigma_rule(), cfg.samples_per_hour, cfg.seed, cfg.beta_fit
    )
    assert cfg.samples_per_hour == 10 and len(states) == 240
    models = DgModelSet(pv=cfg.pv_params(), wind_turbine=cfg.turbine_params())
    base = solve(network, InjectionSet.from_network(network), cfg.sweep_settings())
    started = time.perf_counter()
    result = pso_optimize(
        network,
        cfg.penetration(),
        states,
        models,
        cfg.voltage_limits(),
        settings=cfg.pso_settings(),
        grid=cfg.candidate_grid(network),
        threads=cfg.threads,
        sweep=cfg.sweep_settings(),
    )
    runtime = time.perf_counter() - started
    return cfg, network, states, models, base, result, runtime


def test_criterion_1_two_bus_analytic_oracle(two_bus):
    with criterion(1, "two-bus solve matches the closed form within 1e-8, under 1 ms"):
        injections = InjectionSet.from_network(two_bus)
        settings = SweepSettings(tolerance=1e-12)
        result = solve(two_bus, injections, settings)
        v2 = (1.0 + math.sqrt(0.96)) / 2.0
        loss_pu = (0.1 / v2) ** 2 * 0.1
        assert abs(abs(result.voltages[1]) - v2) < 1e-8
        assert abs(result.total_loss_kw / 1000.0 - loss_pu) < 1e-8
        best = math.inf
        for _ in range(10):
            t0 = time.perf_counter()
            solve(two_bus, injections, settings)
            best = min(best, time.perf_counter() - t0)
        assert best < 1e-3, f"fastest solve took {best * 1e3:.3f} ms"


def test_criterion_2_case33_base_loss(network33):
    with criterion(2, "33-bus base loss within 0.5% of the Newton oracle, weakest bus 18"):
        v_oracle, loss_oracle = newton_solve(network33)
        result = solve(
            network33, InjectionSet.from_network(network33), SweepSettings(tolerance=1e-10)
        )
        assert result.converged
        assert abs(result.total_loss_kw - loss_oracle) / loss_oracle < 0.005
        assert 201.7 < result.total_loss_kw < 203.7  # the expected ~202.7 kW
        vmag = np.abs(result.voltages)
        assert int(network33.bus_ids[int(vmag.argmin())]) == 18


def test_criterion_3_loss_reduction_at_desk_scale(study):
    with criterion(3, "default stochastic study cuts expected loss to <= 60% of base in < 2 min"):
        cfg, network, states, models, base, result, runtime = study
        spec = cfg.penetration()
        assert (spec.wind_kw, spec.solar_kw, spec.biomass_kw) == (400.0, 200.0, 600.0)
        ratio = result.report.expected_loss_kw / base.total_loss_kw
        assert ratio <= 0.60, f"expected loss is {ratio:.1%} of base"
        assert runtime < 120.0, f"optimization took {runtime:.0f} s"


def test_criterion_4_pso_matches_exhaustive_search(
    feeder6, feeder6_grid, feeder6_spec, models, run_config, day_profiles
):
    with criterion(4, "PSO finds the exhaustive optimum in >= 95% of 20 seeded runs"):
        wind, solar = day_profiles
        states = build_state_set(wind, solar, samples_per_hour=1, seed=7)
        evaluator = ObjectiveEvaluator(
            feeder6, states, models, run_config.voltage_limits()
        )
        t0 = time.perf_counter()
        _, best_report = brute_force_best(evaluator, feeder6_spec, feeder6_grid)
        brute_seconds = time.perf_counter() - t0
        assert brute_seconds < 10.0, f"enumeration took {brute_seconds:.1f} s"
        hits = 0
        for seed in range(20):
            result = pso_optimize(
                feeder6, feeder6_spec, states, models, run_config.voltage_limits(),
                settings=PsoSettings(swarm_size=20, iterations=50, seed=seed),
                grid=feeder6_grid,
            )
            if abs(result.report.fitness_kw - best_report.fitness_kw) < 1e-9:
                hits += 1
        assert hits >= 19, f"PSO matched the optimum in only {hits}/20 runs"


def test_criterion_5_distribution_correctness():
    with criterion(5, "densities normalize, moment fits round-trip, sampling is consistent"):
        for alpha, beta in [(1.0, 1.0), (2.0, 2.0), (1.5, 1.5), (5.0, 2.0), (2.0, 8.0)]:
            value, _ = quad(
                beta_pdf, 0.0, 1.0, args=(BetaParams(alpha, beta),),
                epsabs=1e-12, limit=200,
            )
            assert abs(value - 1.0) < 1e-9
        for v_m in (1.0, 5.5, 10.0):
            value, _ = quad(
                rayleigh_pdf, 0.0, np.inf, args=(fit_rayleigh(v_m),),
                epsabs=1e-12, limit=200,
            )
            assert abs(value - 1.0) < 1e-9
        for mu, sigma in [(0.5, 0.25), (0.2, 0.1), (0.85, 0.05), (0.05, 0.02)]:
            params = fit_beta_moments(mu, sigma)
            assert abs(params.mean - mu) < 1e-12
            assert abs(params.variance - sigma * sigma) < 1e-12
        rng = np.random.default_rng(2024)
        v_m = 7.5
        samples = sample_rayleigh(fit_rayleigh(v_m), 100_000, rng)
        assert abs(samples.mean() - v_m) / v_m < 0.02


def test_criterion_6_power_curve_breakpoints():
    with criterion(6, "wind power curve reproduces the turbine breakpoints exactly"):
        from dgalloc import wind_output_fraction

        assert wind_output_fraction(3.0, DEFAULT_WIND_TURBINE) == 0.0
        assert wind_output_fraction(10.0, DEFAULT_WIND_TURBINE) == 0.5
        assert wind_output_fraction(16.0, DEFAULT_WIND_TURBINE) == 1.0
        assert wind_output_fraction(25.0, DEFAULT_WIND_TURBINE) == 1.0
        assert wind_output_fraction(26.0, DEFAULT_WIND_TURBINE) == 0.0


def test_criterion_7_pv_chain():
    with criterion(7, "PV fill factor and module power match the hand-evaluated chain"):
        from dgalloc import pv_output_fraction

        assert abs(DEFAULT_PV_MODULE.fill_factor - 0.70504) < 1e-5
        watts = pv_output_fraction(0.8, DEFAULT_PV_MODULE) * DEFAULT_PV_MODULE.p_max
        assert abs(watts - 64.22) < 0.01


def test_criterion_8_feasibility(study, feeder6, feeder6_grid, feeder6_spec, models,
                                 run_config, day_profiles):
    with criterion(8, "results meet capacity targets exactly; feasible results stay in band"):
        cfg, network, states, _models, base, result, _runtime = study
        spec = cfg.penetration()
        for kind, target in (
            ("wind", spec.wind_kw), ("solar", spec.solar_kw), ("biomass", spec.biomass_kw)
        ):
            total = sum(u.capacity_kw for u in result.allocation.units if u.kind == kind)
            assert total == target
        # a lightly loaded instance where the optimum is feasible: verify the
        # voltage band holds across every stochastic state
        wind, solar = day_profiles
        small_states = build_state_set(wind, solar, samples_per_hour=1, seed=7)
        small = pso_optimize(
            feeder6, feeder6_spec, small_states, models, run_config.voltage_limits(),
            settings=PsoSettings(swarm_size=20, iterations=50, seed=0),
            grid=feeder6_grid,
        )
        assert small.report.feasible
        evaluator = ObjectiveEvaluator(
            feeder6, small_states, models, run_config.voltage_limits()
        )
        batch = solve_states(
            feeder6,
            evaluator.net_load_kw(small.allocation),
            np.tile(feeder6.q_load_kvar, (len(small_states), 1)),
        )
        vmag = np.abs(batch.voltages)
        limits = run_config.voltage_limits()
        assert batch.converged.all()
        assert (vmag >= limits.v_min - 1e-12).all()
        assert (vmag <= limits.v_max + 1e-12).all()


def test_criterion_9_byte_identical_runs(tmp_path):
    with criterion(9, "optimize reruns are byte-identical at any thread count"):
        runner = CliRunner()

        def run(name, threads):
            out = tmp_path / name
            config = tmp_path / f"{name}.toml"
            config.write_text(
                "[stochastic]\n"
                "samples_per_hour = 2\n"
                "seed = 42\n"
                "[pso]\n"
                "swarm_size = 10\n"
                "iterations = 12\n"
                "[output]\n"
                f'directory = "{out}"\n'
                f"threads = {threads}\n"
            )
            invocation = runner.invoke(cli, ["optimize", "--config", str(config)])
            assert invocation.exit_code == 0, invocation.output
            return (
                (out / "result.json").read_bytes(),
                (out / "trace.csv").read_bytes(),
            )

        first = run("a", threads=1)
        second = run("b", threads=1)
        threaded = run("c", threads=4)
        assert first == second == threaded
