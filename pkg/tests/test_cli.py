import json

import pytest
from click.testing import CliRunner

from conftest import small_config_data, write_toml
from ndgd import __version__
from ndgd.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_INFEASIBLE, cli


@pytest.fixture
def runner():
    return CliRunner()


def _config_file(tmp_path, **run):
    return str(write_toml(tmp_path / "config.toml", small_config_data(tmp_path, **run)))


def test_schedule_at_rho_four(runner):
    result = runner.invoke(cli, ["schedule", "--rho", "4"])
    assert result.exit_code == 0, result.output
    # lambda_min / (L_g sqrt(rho)) = 0.5 / 12
    assert "0.041666667" in result.output
    assert "unbounded" in result.output


def test_schedule_infeasible(runner):
    result = runner.invoke(cli, ["schedule", "--lambda-2", "0.6", "--rho", "1.2"])
    assert result.exit_code == EXIT_INFEASIBLE
    assert "rho >" in result.output


@pytest.mark.parametrize("option", ["--lg", "--lh", "--disagreement"])
def test_schedule_rejects_non_positive_constants(runner, tmp_path, option):
    assert runner.invoke(cli, ["schedule", option, "0"]).exit_code == EXIT_CONFIG
    with_config = runner.invoke(cli, ["schedule", "--rho", "6", "--config", _config_file(tmp_path), option, "0"])
    assert with_config.exit_code == EXIT_CONFIG


def test_schedule_sweep(runner):
    assert runner.invoke(cli, ["schedule", "--sweep"]).exit_code == 0
    result = runner.invoke(cli, ["schedule", "--sweep", "--lambda-min", "0.1", "--lambda-2", "0.999"])
    assert result.exit_code == EXIT_INFEASIBLE


def test_schedule_from_config(runner, tmp_path):
    result = runner.invoke(cli, ["schedule", "--rho", "6", "--config", _config_file(tmp_path)])
    assert result.exit_code == 0, result.output
    missing = runner.invoke(cli, ["schedule", "--config", str(tmp_path / "absent.toml")])
    assert missing.exit_code == EXIT_CONFIG


def test_verify_writes_identical_reports(runner, tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    for path in (first, second):
        result = runner.invoke(cli, ["verify", "chisq", "--trials", "500", "--seed", "42", "-o", str(path)])
        assert result.exit_code == 0, result.output
    assert first.read_bytes() == second.read_bytes()
    records = json.loads(first.read_text())
    assert len(records) == 8
    assert {r["verdict"] for r in records} == {"pass"}


def test_verify_rejects_unknown_suite(runner, tmp_path):
    result = runner.invoke(cli, ["verify", "lemma99", "-o", str(tmp_path / "v.json")])
    assert result.exit_code == 2
    assert not (tmp_path / "v.json").exists()


def test_verify_rejects_zero_trials(runner, tmp_path):
    result = runner.invoke(cli, ["verify", "chisq", "--trials", "0", "-o", str(tmp_path / "v.json")])
    assert result.exit_code == 1


def test_run_missing_config(runner, tmp_path):
    result = runner.invoke(cli, ["run", str(tmp_path / "absent.toml")])
    assert result.exit_code == EXIT_CONFIG


def test_run_invalid_config(runner, tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[run]\nalpha = -1.0\n")
    assert runner.invoke(cli, ["run", str(path)]).exit_code == EXIT_CONFIG


def test_run_writes_outputs(runner, tmp_path):
    result = runner.invoke(cli, ["run", _config_file(tmp_path)])
    assert result.exit_code == 0, result.output
    out = tmp_path / "out"
    for name in ("dgd_r00_trace.csv", "ndgd_r01_trace.csv", "ndgd_r01_trajectory.csv", "metadata.json", "timing.json"):
        assert (out / name).exists(), name
    header = (out / "dgd_r00_trace.csv").read_text().splitlines()[0]
    assert header.endswith(",dist_agent_5")


def test_run_warns_without_schedule(runner, tmp_path):
    result = runner.invoke(cli, ["run", _config_file(tmp_path, rho=1.0)])
    assert result.exit_code == 0, result.output
    assert "Warning" in result.output
    assert "no feasible schedule at rho=1" in result.output


def test_run_schedule_infeasible(runner, tmp_path):
    result = runner.invoke(cli, ["run", _config_file(tmp_path, step="schedule", rho=1.0)])
    assert result.exit_code == EXIT_INFEASIBLE


def test_run_divergence_writes_partial_trace(runner, tmp_path):
    result = runner.invoke(cli, ["run", _config_file(tmp_path, alpha=10.0, init=[2.0, 2.0])])
    assert result.exit_code == EXIT_DIVERGED
    partial = tmp_path / "out" / "dgd_diverged_trace.csv"
    assert partial.exists()
    assert len(partial.read_text().splitlines()) >= 2


def test_version(runner):
    result = runner.invoke(cli, ["version"])
    assert result.exit_code == 0
    assert f"ndgd version {__version__}" in result.output
