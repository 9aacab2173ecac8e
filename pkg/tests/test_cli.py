import csv
import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from dgalloc.cli import cli
from dgalloc.data import data_path


@pytest.fixture()
def runner():
    return CliRunner()


def write_small_config(tmp_path, **extra):
    """A fast configuration: tiny swarm, few iterations, M = 2."""
    tmp_path = Path(tmp_path)
    tmp_path.mkdir(parents=True, exist_ok=True)
    out = tmp_path / "out"
    lines = [
        "[stochastic]",
        "samples_per_hour = 2",
        "seed = 42",
        "[pso]",
        "swarm_size = 8",
        "iterations = 10",
        "[output]",
        f'directory = "{out}"',
    ]
    for section, content in extra.items():
        lines.append(f"[{section}]")
        for key, value in content.items():
            lines.append(f"{key} = {value}")
    path = tmp_path / "run.toml"
    path.write_text("\n".join(lines) + "\n")
    return path, out


class TestPowerflowCommand:
    def test_bundled_base_case(self, runner, tmp_path):
        result = runner.invoke(cli, ["powerflow", "--out", str(tmp_path / "o")])
        assert result.exit_code == 0, result.output
        assert "total loss: 202.67" in result.output
        assert "at bus 18" in result.output
        profile = tmp_path / "o" / "voltage_profile.csv"
        with open(profile, newline="") as handle:
            rows = list(csv.DictReader(handle))
        assert len(rows) == 33
        assert (tmp_path / "o" / "config_resolved.toml").exists()

    def test_zero_load_fixture(self, runner, tmp_path):
        buses = tmp_path / "b.csv"
        buses.write_text(
            "id,p_load_kw,q_load_kvar,is_slack\n1,0,0,1\n2,0,0,0\n"
        )
        branches = tmp_path / "br.csv"
        branches.write_text("from,to,r_ohm,x_ohm\n1,2,0.5,0.3\n")
        config = tmp_path / "run.toml"
        config.write_text(
            "[paths]\n"
            f'buses = "{buses}"\n'
            f'branches = "{branches}"\n'
            "[output]\n"
            f'directory = "{tmp_path / "o"}"\n'
        )
        result = runner.invoke(cli, ["powerflow", "--config", str(config)])
        assert result.exit_code == 0, result.output
        assert "total loss: 0.0000 kW" in result.output

    def test_missing_branch_file_exit_1(self, runner, tmp_path):
        config = tmp_path / "run.toml"
        missing = tmp_path / "branches_gone.csv"
        config.write_text(
            "[paths]\n"
            f'buses = "{data_path("ieee33_buses.csv")}"\n'
            f'branches = "{missing}"\n'
        )
        result = runner.invoke(cli, ["powerflow", "--config", str(config)])
        assert result.exit_code == 1
        assert "branches_gone.csv" in result.output

    def test_unknown_config_key_exit_1(self, runner, tmp_path):
        config = tmp_path / "run.toml"
        config.write_text("[pso]\nswarm = 10\n")
        result = runner.invoke(cli, ["powerflow", "--config", str(config)])
        assert result.exit_code == 1
        assert "unknown key" in result.output

    def test_rerun_from_resolved_config_reproduces_profile(self, runner, tmp_path):
        first = runner.invoke(cli, ["powerflow", "--out", str(tmp_path / "a")])
        assert first.exit_code == 0
        again = runner.invoke(
            cli,
            [
                "powerflow",
                "--config", str(tmp_path / "a" / "config_resolved.toml"),
                "--out", str(tmp_path / "b"),
            ],
        )
        assert again.exit_code == 0
        assert (tmp_path / "a" / "voltage_profile.csv").read_bytes() == (
            tmp_path / "b" / "voltage_profile.csv"
        ).read_bytes()


class TestFitCommand:
    def test_prints_hourly_parameters(self, runner, tmp_path):
        result = runner.invoke(cli, ["fit", "--out", str(tmp_path / "o")])
        assert result.exit_code == 0, result.output
        lines = [l for l in result.output.splitlines() if "," in l]
        assert lines[0] == "hour,alpha,beta,c"
        assert len(lines) == 25
        # midnight: no sun, wind present
        first = lines[1].split(",")
        assert first[0] == "0"
        assert first[1] == "" and first[2] == ""
        assert float(first[3]) > 0

    def test_paper_fit_mode_changes_output(self, runner, tmp_path):
        a = runner.invoke(cli, ["fit", "--out", str(tmp_path / "a")])
        b = runner.invoke(
            cli, ["fit", "--out", str(tmp_path / "b"), "--beta-fit", "paper"]
        )
        assert a.exit_code == 0 and b.exit_code == 0
        assert a.output != b.output


class TestOptimizeCommand:
    def test_small_run_outputs(self, runner, tmp_path):
        config, out = write_small_config(tmp_path)
        result = runner.invoke(cli, ["optimize", "--config", str(config)])
        assert result.exit_code == 0, result.output
        assert "reduction:" in result.output
        payload = json.loads((out / "result.json").read_text())
        assert set(payload) >= {
            "allocation", "expected_loss_kw", "base_loss_kw", "reduction_pct",
            "worst_voltage_pu", "trace", "seed", "settings",
        }
        assert payload["base_loss_kw"] == pytest.approx(202.677, abs=0.01)
        assert payload["expected_loss_kw"] < payload["base_loss_kw"]
        with open(out / "trace.csv", newline="") as handle:
            rows = list(csv.DictReader(handle))
        values = [float(r["gbest_kw"]) for r in rows]
        assert len(values) == 11
        assert all(a >= b for a, b in zip(values, values[1:]))
        assert (out / "states.json").exists()
        assert (out / "voltage_profile.csv").exists()

    def test_zero_targets_equal_base(self, runner, tmp_path):
        config, out = write_small_config(
            tmp_path,
            penetration={"wind_kw": 0.0, "solar_kw": 0.0, "biomass_kw": 0.0},
        )
        result = runner.invoke(cli, ["optimize", "--config", str(config)])
        assert result.exit_code == 0, result.output
        payload = json.loads((out / "result.json").read_text())
        assert payload["allocation"] == []
        assert payload["expected_loss_kw"] == pytest.approx(
            payload["base_loss_kw"], rel=1e-6
        )

    def test_infeasible_targets_exit_3(self, runner, tmp_path):
        config, out = write_small_config(
            tmp_path,
            penetration={"wind_kw": 99999.0},
        )
        result = runner.invoke(cli, ["optimize", "--config", str(config)])
        assert result.exit_code == 3

    def test_rerun_is_byte_identical(self, runner, tmp_path):
        config_a, out_a = write_small_config(tmp_path / "a")
        config_b, out_b = write_small_config(tmp_path / "b")
        assert runner.invoke(cli, ["optimize", "--config", str(config_a)]).exit_code == 0
        assert runner.invoke(cli, ["optimize", "--config", str(config_b)]).exit_code == 0
        assert (out_a / "result.json").read_bytes() == (out_b / "result.json").read_bytes()
        assert (out_a / "trace.csv").read_bytes() == (out_b / "trace.csv").read_bytes()
        assert (out_a / "states.json").read_bytes() == (out_b / "states.json").read_bytes()

    def test_rerun_from_resolved_config_reproduces(self, runner, tmp_path):
        config, out = write_small_config(tmp_path)
        assert runner.invoke(cli, ["optimize", "--config", str(config)]).exit_code == 0
        resolved = out / "config_resolved.toml"
        again = tmp_path / "again"
        result = runner.invoke(
            cli, ["optimize", "--config", str(resolved), "--out", str(again)]
        )
        assert result.exit_code == 0, result.output
        assert (out / "result.json").read_bytes() == (again / "result.json").read_bytes()
        assert (out / "trace.csv").read_bytes() == (again / "trace.csv").read_bytes()


class TestEvaluateCommand:
    def test_reference_allocation_scores_below_base(self, runner, tmp_path):
        config, out = write_small_config(tmp_path)
        result = runner.invoke(
            cli,
            ["evaluate", data_path("reference_allocation.json"), "--config", str(config)],
        )
        assert result.exit_code == 0, result.output
        payload = json.loads((out / "report.json").read_text())
        assert payload["expected_loss_kw"] < payload["base_loss_kw"]
        assert len(payload["per_state_loss_kw"]) == 48

    def test_off_step_allocation_exit_4(self, runner, tmp_path):
        config, out = write_small_config(tmp_path)
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"allocation": [
            {"kind": "wind", "bus": 8, "kw": 30},
        ]}))
        result = runner.invoke(cli, ["evaluate", str(bad), "--config", str(config)])
        assert result.exit_code == 4
        assert "step grid" in result.output

    def test_empty_allocation_with_zero_targets(self, runner, tmp_path):
        config, out = write_small_config(
            tmp_path,
            penetration={"wind_kw": 0.0, "solar_kw": 0.0, "biomass_kw": 0.0},
        )
        empty = tmp_path / "empty.json"
        empty.write_text(json.dumps({"allocation": []}))
        result = runner.invoke(cli, ["evaluate", str(empty), "--config", str(config)])
        assert result.exit_code == 0, result.output
        payload = json.loads((out / "report.json").read_text())
        assert payload["expected_loss_kw"] == pytest.approx(
            payload["base_loss_kw"], rel=1e-6
        )

    def test_total_mismatch_exit_4(self, runner, tmp_path):
        config, out = write_small_config(tmp_path)
        short = tmp_path / "short.json"
        short.write_text(json.dumps({"allocation": [
            {"kind": "wind", "bus": 8, "kw": 25},
        ]}))
        result = runner.invoke(cli, ["evaluate", str(short), "--config", str(config)])
        assert result.exit_code == 4
        assert "target" in result.output

    def test_infeasible_config_targets_exit_3(self, runner, tmp_path):
        config, out = write_small_config(
            tmp_path, penetration={"wind_kw": 99999.0}
        )
        anything = tmp_path / "alloc.json"
        anything.write_text(json.dumps({"allocation": []}))
        result = runner.invoke(cli, ["evaluate", str(anything), "--config", str(config)])
        assert result.exit_code == 3

    def test_bad_grid_config_exit_1(self, runner, tmp_path):
        config, out = write_small_config(
            tmp_path, penetration={"per_bus_max_kw": 90.0}  # off the 25 kW step
        )
        result = runner.invoke(cli, ["optimize", "--config", str(config)])
        assert result.exit_code == 1
        assert "multiple of the step" in result.output
