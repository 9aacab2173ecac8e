"""Command-line surface.

Subcommands: ``powerflow`` (base-case load flow), ``fit`` (per-hour
distribution parameters as CSV on stdout), ``optimize`` (full PSO study),
``evaluate`` (re-score a fixed allocation). Every run writes a
``config_resolved.toml`` next to its outputs so it can be reproduced
exactly from that file alone.

Exit codes: 0 ok, 1 input error, 2 power flow non-convergence,
3 infeasible penetration targets, 4 invalid allocation.
"""

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import config as cfgmod
from .config import ConfigError, RunConfig, apply_overrides, default_config, load_config
from .network import Network, ParseError, TopologyError, load_network
from .optimizer import (
    Allocation,
    DgModelSet,
    InfeasibleSpecError,
    InvalidAllocationError,
    ObjectiveEvaluator,
    evaluate_allocation,
    pso_optimize,
)
from .powerflow import InjectionSet, solve, write_voltage_profile
from .stochastic import (
    HourlyProfile,
    InfeasibleMomentsError,
    StateSet,
    build_state_set,
    fit_beta_moments,
    fit_rayleigh,
)

EXIT_INPUT = 1
EXIT_NO_CONVERGENCE = 2
EXIT_INFEASIBLE_SPEC = 3
EXIT_BAD_ALLOCATION = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_run_config(config_path, **overrides) -> RunConfig:
    try:
        cfg = load_config(config_path) if config_path else default_config()
        return apply_overrides(cfg, **overrides)
    except (ConfigError, OSError) as exc:
        _fail(EXIT_INPUT, str(exc))


def _load_network(cfg: RunConfig) -> Network:
    try:
        return load_network(cfg.buses_csv, cfg.branches_csv, cfg.system_base())
    except (ParseError, TopologyError, OSError, ValueError) as exc:
        _fail(EXIT_INPUT, str(exc))


def _load_states(cfg: RunConfig) -> StateSet:
    try:
        wind = HourlyProfile.from_csv(cfg.wind_profile_csv, "wind")
        solar = HourlyProfile.from_csv(cfg.solar_profile_csv, "irradiance")
        return build_state_set(
            wind,
            solar,
            sigma_rule=cfg.sigma_rule(),
            samples_per_hour=cfg.samples_per_hour,
            seed=cfg.seed,
            beta_fit=cfg.beta_fit,
        )
    except (InfeasibleMomentsError, OSError, ValueError) as exc:
        _fail(EXIT_INPUT, str(exc))


def _prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.write_resolved(cfg, out / "config_resolved.toml")
    return out


def _base_case(network: Network, cfg: RunConfig):
    result = solve(network, InjectionSet.from_network(network), cfg.sweep_settings())
    if not result.converged:
        _fail(EXIT_NO_CONVERGENCE, f"base case power flow: {result.diagnostic}")
    return result


def _write_json(path: Path, payload: dict):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


_shared_options = [
    click.option("--config", "config_path", type=click.Path(), default=None,
                 help="TOML config file; defaults to the bundled 33-bus study."),
    click.option("--seed", type=int, default=None, help="Override the run seed."),
    click.option("--threads", type=int, default=None, help="Worker threads for swarm evaluation."),
    click.option("--out", "out_dir", type=click.Path(), default=None, help="Output directory."),
    click.option("--samples-per-hour", type=int, default=None,
                 help="Stochastic samples per hour (N = 24 x M states)."),
    click.option("--beta-fit", type=click.Choice(["moments", "paper"]), default=None,
                 help="Irradiance fit mode: exact moment matching or the published variant."),
]


def shared_options(fn):
    for option in reversed(_shared_options):
        fn = option(fn)
    return fn


@click.group()
@click.version_option(package_name="dgalloc")
def cli():
    """Site and size distributed generation on a radial feeder for minimum
    expected loss under stochastic wind and solar."""


@cli.command("powerflow")
@shared_options
def cmd_powerflow(config_path, seed, threads, out_dir, samples_per_hour, beta_fit):
    """Solve the base case and export the voltage profile."""
    cfg = _load_run_config(config_path, seed=seed, threads=threads, out_dir=out_dir,
                           samples_per_hour=samples_per_hour, beta_fit=beta_fit)
    network = _load_network(cfg)
    out = _prepare_out(cfg)
    result = _base_case(network, cfg)
    write_voltage_profile(out / "voltage_profile.csv", network, result)
    vmag = np.abs(result.voltages)
    worst = int(np.argmin(vmag))
    click.echo(f"total loss: {result.total_loss_kw:.4f} kW")
    click.echo(f"min voltage: {vmag[worst]:.6f} pu at bus {int(network.bus_ids[worst])}")
    click.echo(f"iterations: {result.iterations}")
    click.echo(f"outputs in {out}")


@cli.command("fit")
@shared_options
def cmd_fit(config_path, seed, threads, out_dir, samples_per_hour, beta_fit):
    """Print per-hour fitted distribution parameters (alpha, beta, c) as CSV."""
    cfg = _load_run_config(config_path, seed=seed, threads=threads, out_dir=out_dir,
                           samples_per_hour=samples_per_hour, beta_fit=beta_fit)
    try:
        wind = HourlyProfile.from_csv(cfg.wind_profile_csv, "wind")
        solar = HourlyProfile.from_csv(cfg.solar_profile_csv, "irradiance")
    except (OSError, ValueError) as exc:
        _fail(EXIT_INPUT, str(exc))
    _prepare_out(cfg)
    rule = cfg.sigma_rule()
    click.echo("hour,alpha,beta,c")
    for hour in range(24):
        mu = solar.values[hour]
        if mu > 0.0:
            try:
                params = fit_beta_moments(mu, rule.sigma_for(mu), mode=cfg.beta_fit)
            except (InfeasibleMomentsError, ValueError) as exc:
                _fail(EXIT_INPUT, f"hour {hour}: {exc}")
            alpha, beta = repr(params.alpha), repr(params.beta)
        else:
            alpha = beta = ""
        v_mean = wind.values[hour]
        c = repr(fit_rayleigh(v_mean).c) if v_mean > 0.0 else ""
        click.echo(f"{hour},{alpha},{beta},{c}")


def _models(cfg: RunConfig) -> DgModelSet:
    try:
        return DgModelSet(pv=cfg.pv_params(), wind_turbine=cfg.turbine_params())
    except ValueError as exc:
        _fail(EXIT_INPUT, str(exc))


def _allocation_profile(network, cfg, evaluator, allocation, report, path):
    """Voltage profile of the allocation at its lowest-voltage state."""
    p_net = evaluator.net_load_kw(allocation)[report.worst_state_index]
    result = solve(
        network,
        InjectionSet(p_net_kw=p_net, q_net_kvar=network.q_load_kvar.copy()),
        cfg.sweep_settings(),
    )
    write_voltage_profile(path, network, result)


@cli.command("optimize")
@shared_options
def cmd_optimize(config_path, seed, threads, out_dir, samples_per_hour, beta_fit):
    """Run the full stochastic siting/sizing study and export the results."""
    cfg = _load_run_config(config_path, seed=seed, threads=threads, out_dir=out_dir,
                           samples_per_hour=samples_per_hour, beta_fit=beta_fit)
    network = _load_network(cfg)
    states = _load_states(cfg)
    models = _models(cfg)
    out = _prepare_out(cfg)
    states.save(out / "states.json")

    base = _base_case(network, cfg)

    try:
        grid = cfg.candidate_grid(network)
    except ValueError as exc:
        _fail(EXIT_INPUT, str(exc))
    try:
        result = pso_optimize(
            network,
            cfg.penetration(),
            states,
            models,
            cfg.voltage_limits(),
            settings=cfg.pso_settings(),
            grid=grid,
            threads=cfg.threads,
            sweep=cfg.sweep_settings(),
        )
    except InfeasibleSpecError as exc:
        _fail(EXIT_INFEASIBLE_SPEC, str(exc))
    if result.diagnostics:
        click.echo(f"warning: {result.diagnostics}", err=True)

    expected = result.report.expected_loss_kw
    reduction = 100.0 * (base.total_loss_kw - expected) / base.total_loss_kw
    settings = cfg.pso_settings()
    _write_json(
        out / "result.json",
        {
            "allocation": result.allocation.to_json_list(),
            "expected_loss_kw": expected,
            "base_loss_kw": base.total_loss_kw,
            "reduction_pct": reduction,
            "worst_voltage_pu": result.report.worst_voltage_pu,
            "violation_pu": result.report.violation_pu,
            "feasible": result.report.feasible,
            "trace": list(result.trace),
            "seed": cfg.seed,
            "settings": {
                "swarm_size": settings.swarm_size,
                "iterations": settings.iterations,
                "inertia": settings.inertia,
                "cognitive": settings.cognitive,
                "social": settings.social,
                "velocity_clamp": settings.velocity_clamp,
                "penalty_kw_per_pu": settings.penalty_kw_per_pu,
                "stall_restart_after": settings.stall_restart_after,
                "polish": settings.polish,
                "polish_eval_budget": settings.polish_eval_budget,
                "samples_per_hour": cfg.samples_per_hour,
                "beta_fit": cfg.beta_fit,
            },
        },
    )
    with open(out / "trace.csv", "w", encoding="utf-8") as handle:
        handle.write("iteration,gbest_kw\n")
        for i, value in enumerate(result.trace):
            handle.write(f"{i},{value!r}\n")

    evaluator = ObjectiveEvaluator(
        network, states, models, cfg.voltage_limits(), cfg.penalty_kw_per_pu,
        cfg.sweep_settings(),
    )
    _allocation_profile(network, cfg, evaluator, result.allocation, result.report,
                        out / "voltage_profile.csv")

    click.echo(f"base loss: {base.total_loss_kw:.4f} kW")
    click.echo(f"optimized expected loss: {expected:.4f} kW")
    click.echo(f"reduction: {reduction:.2f} %")
    click.echo(f"outputs in {out}")


@cli.command("evaluate")
@click.argument("allocation_file", type=click.Path())
@shared_options
def cmd_evaluate(allocation_file, config_path, seed, threads, out_dir, samples_per_hour, beta_fit):
    """Re-score a fixed allocation (JSON with an "allocation" list) over the
    configured state set."""
    cfg = _load_run_config(config_path, seed=seed, threads=threads, out_dir=out_dir,
                           samples_per_hour=samples_per_hour, beta_fit=beta_fit)
    network = _load_network(cfg)
    try:
        with open(allocation_file, encoding="utf-8") as handle:
            payload = json.load(handle)
        entries = payload["allocation"] if isinstance(payload, dict) else payload
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        _fail(EXIT_INPUT, f"{allocation_file}: {exc}")

    try:
        grid = cfg.candidate_grid(network)
    except ValueError as exc:
        _fail(EXIT_INPUT, str(exc))
    try:
        grid.check_spec(cfg.penetration())
    except InfeasibleSpecError as exc:
        _fail(EXIT_INFEASIBLE_SPEC, str(exc))
    try:
        allocation = Allocation.from_json_list(entries, grid)
        allocation.validate_against(cfg.penetration())
    except InvalidAllocationError as exc:
        _fail(EXIT_BAD_ALLOCATION, f"{allocation_file}: {exc}")

    states = _load_states(cfg)
    models = _models(cfg)
    out = _prepare_out(cfg)
    states.save(out / "states.json")
    base = _base_case(network, cfg)

    report = evaluate_allocation(
        network, allocation, states, models, cfg.voltage_limits(),
        penalty_kw_per_pu=cfg.penalty_kw_per_pu, sweep=cfg.sweep_settings(),
    )
    reduction = 100.0 * (base.total_loss_kw - report.expected_loss_kw) / base.total_loss_kw
    _write_json(
        out / "report.json",
        {
            "allocation": allocation.to_json_list(),
            "expected_loss_kw": report.expected_loss_kw,
            "base_loss_kw": base.total_loss_kw,
            "reduction_pct": reduction,
            "per_state_loss_kw": list(report.per_state_loss_kw),
            "worst_voltage_pu": report.worst_voltage_pu,
            "violation_pu": report.violation_pu,
            "feasible": report.feasible,
            "fitness_kw": report.fitness_kw,
            "seed": cfg.seed,
        },
    )
    click.echo(f"expected loss: {report.expected_loss_kw:.4f} kW "
               f"(base {base.total_loss_kw:.4f} kW, reduction {reduction:.2f} %)")
    click.echo(f"worst voltage: {report.worst_voltage_pu:.6f} pu")
    click.echo(f"feasible: {report.feasible}")
    click.echo(f"outputs in {out}")


def main():
    cli()


if __name__ == "__main__":
    main()
