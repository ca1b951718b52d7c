"""Command line surface: payloads, artifacts and exit codes."""

import json
import os
import sys

import pandas as pd
import pytest
from click.testing import CliRunner

import main
from main import RunConfig, cli, run
from errors import InvalidInputError
from utils_verify import CheckResult, VerifyReport


@pytest.fixture
def runner():
    runner = CliRunner()
    with runner.isolated_filesystem():
        yield runner


def last_json(result):
    return json.loads(result.output.strip().splitlines()[-1])


class TestSolve:
    def test_power_three_points(self, runner):
        result = runner.invoke(cli, ["solve", "--utility", "power:gamma=0.5", "--n", "3"])
        assert result.exit_code == 0, result.output
        payload = last_json(result)
        assert payload["command"] == "solve"
        assert payload["rewards"] == pytest.approx([1.0, 0.5, 0.0], abs=1e-8)
        assert payload["converged"] is True

    def test_artifacts(self, runner):
        result = runner.invoke(cli, ["solve", "--utility", "log", "--n", "5",
                                     "--output", "both", "--out", "out/log5"])
        assert result.exit_code == 0, result.output
        with open("out/log5.json", encoding="utf-8") as f:
            assert json.load(f)["n"] == 5
        frame = pd.read_csv("out/log5.csv")
        assert list(frame.columns) == ["rank", "reward"]
        assert len(frame) == 5

    def test_invalid_utility(self, runner):
        result = runner.invoke(cli, ["solve", "--utility", "cubic", "--n", "3"])
        assert result.exit_code == 2
        assert last_json(result)["code"] == "invalid_input"

    def test_invalid_n(self, runner):
        result = runner.invoke(cli, ["solve", "--utility", "log", "--n", "1"])
        assert result.exit_code == 2

    def test_non_convergence_exits_one(self, runner):
        result = runner.invoke(cli, ["solve", "--utility", "power:gamma=0.5", "--n", "10",
                                     "--max-iters", "0"])
        assert result.exit_code == 1
        assert last_json(result)["converged"] is False

    def test_config_file_is_used(self, runner):
        with open("custom.json", "w", encoding="utf-8") as f:
            json.dump({"solver": {"max_iters": 0}}, f)
        result = runner.invoke(cli, ["--config", "custom.json", "solve",
                                     "--utility", "power:gamma=0.5", "--n", "10"])
        assert result.exit_code == 1


class TestLimitAndFit:
    def test_power_limit(self, runner):
        result = runner.invoke(cli, ["limit", "--utility", "power:gamma=0.8"])
        assert result.exit_code == 0
        payload = last_json(result)
        assert payload["kind"] == "beta"
        assert payload["alpha"] == 0.1
        assert payload["beta"] == 0.1

    def test_negpow_limit_is_exact(self, runner):
        result = runner.invoke(cli, ["limit", "--utility", "negpow:gamma=0.8"])
        assert last_json(result)["alpha"] == 0.9

    def test_extended_limit_is_unknown(self, runner):
        result = runner.invoke(cli, ["limit", "--utility", "negpow:gamma=1,eps=0.1,ext=appendixA"])
        assert result.exit_code == 2
        assert last_json(result)["code"] == "limit_unknown"

    def test_fit_beta_law(self, runner):
        runner.invoke(cli, ["solve", "--utility", "log", "--n", "40", "--output", "csv", "--out", "log40"])
        result = runner.invoke(cli, ["fit", "--rewards", "log40.csv", "--utility", "log"])
        assert result.exit_code == 0, result.output
        payload = last_json(result)
        assert payload["n"] == 40
        assert 0.0 < payload["ks"] < 0.1

    def test_fit_endpoint_bound(self, runner):
        with open("rewards.json", "w", encoding="utf-8") as f:
            json.dump({"rewards": [1.0, 1.0, 1.0, 0.5, 0.0, 0.0, 0.0]}, f)
        result = runner.invoke(cli, ["fit", "--rewards", "rewards.json", "--utility", "logsigmoid:sigma=1"])
        assert result.exit_code == 0, result.output
        payload = last_json(result)
        assert payload["mass_at_0"] == pytest.approx(3 / 7)
        assert payload["bound_met"] is True

    def test_fit_missing_file(self, runner):
        result = runner.invoke(cli, ["fit", "--rewards", "nope.csv", "--utility", "log"])
        assert result.exit_code == 2


class TestFlatnessAndMeasure:
    def test_flatness_with_control(self, runner):
        result = runner.invoke(cli, ["flatness", "--gamma", "0.5", "--c-grid", "11",
                                     "--quad-points", "200", "--control"])
        assert result.exit_code == 0, result.output
        payload = last_json(result)
        assert payload["max_deviation"] <= 1e-3
        assert payload["control_max_deviation"] >= 0.05

    def test_flatness_bad_gamma(self, runner):
        result = runner.invoke(cli, ["flatness", "--gamma", "1.5"])
        assert result.exit_code == 2

    def test_linear_measure_csv(self, runner):
        result = runner.invoke(cli, ["measure", "--utility", "linear", "--grid", "21",
                                     "--output", "csv", "--out", "m"])
        assert result.exit_code == 0, result.output
        frame = pd.read_csv("m.csv")
        assert frame["weight"].iloc[0] == pytest.approx(0.5, abs=1e-8)
        assert frame["weight"].iloc[-1] == pytest.approx(0.5, abs=1e-8)
        assert frame["weight"].iloc[1:-1].sum() <= 1e-8
        assert last_json(result)["m"] == 21

    def test_even_grid(self, runner):
        result = runner.invoke(cli, ["measure", "--utility", "linear", "--grid", "20"])
        assert result.exit_code == 2


class TestBTLAndCollapse:
    def test_preset(self, runner):
        result = runner.invoke(cli, ["btl", "--utility", "logsigmoid:sigma=1", "--thetas", "preset:left",
                                     "--output", "csv", "--out", "btl"])
        assert result.exit_code == 0, result.output
        payload = last_json(result)
        assert payload["order_ok"] is True
        assert payload["bound_report"]["applicable"] is False
        assert payload["strong_concavity"]["mu"] == pytest.approx(0.19661, abs=1e-5)
        assert list(pd.read_csv("btl.csv").columns) == ["item", "theta", "reward"]

    def test_thetas_file(self, runner):
        with open("thetas.json", "w", encoding="utf-8") as f:
            json.dump([0.5, -0.2, 1.0], f)
        result = runner.invoke(cli, ["btl", "--utility", "logsigmoid:sigma=1", "--thetas", "thetas.json"])
        assert result.exit_code == 0, result.output
        rewards = last_json(result)["rewards"]
        assert rewards[2] > rewards[0] > rewards[1]

    def test_singular_utility(self, runner):
        result = runner.invoke(cli, ["btl", "--utility", "log", "--thetas", "preset:right"])
        assert result.exit_code == 2

    def test_collapse_demo(self, runner):
        result = runner.invoke(cli, ["collapse-demo", "--prompts", "8", "--n", "6", "--seed", "1"])
        assert result.exit_code == 0, result.output
        payload = last_json(result)
        assert payload["collapse_gap_fixed"] == 0.0
        assert payload["seed"] == 1
        assert payload["prompt_count"] == 8
        assert payload["n"] is None
        assert {len(p["aware"]) for p in payload["prompts"]} == {6}


class TestExitCodes:
    def test_failed_verify_exits_one(self, runner, monkeypatch):
        report = VerifyReport([CheckResult("solver.two_points", False, "off", 0.0)])
        monkeypatch.setattr(main, "run_verify", lambda *args: report)
        result = runner.invoke(cli, ["verify"])
        assert result.exit_code == 1
        assert last_json(result)["failed"] == ["solver.two_points"]

    def test_run_returns_zero(self, runner, capsys):
        assert run(RunConfig("limit", {"utility": "log"})) == 0
        assert json.loads(capsys.readouterr().out)["alpha"] == 0.5

    @pytest.mark.parametrize("kwargs", [{"command": "plot"}, {"command": "limit", "output": "xml"}])
    def test_invalid_run_config(self, kwargs):
        with pytest.raises(InvalidInputError):
            RunConfig(**kwargs)

    def test_usage_error_from_main(self, runner, monkeypatch, capsys):
        monkeypatch.setattr(sys, "argv", ["reward-collapse", "solve", "--n", "3"])
        with pytest.raises(SystemExit) as info:
            main.main()
        assert info.value.code == 2
        error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert error["code"] == "invalid_input"


class TestOutputSettings:
    def test_config_format_and_directory(self, runner):
        with open("custom.json", "w", encoding="utf-8") as f:
            json.dump({"output": {"format": "csv", "directory": "runs"}}, f)
        result = runner.invoke(cli, ["--config", "custom.json", "solve", "--utility", "log",
                                     "--n", "4", "--out", "log4"])
        assert result.exit_code == 0, result.output
        assert len(pd.read_csv("runs/log4.csv")) == 4
        assert not os.path.exists("runs/log4.json")
        assert not os.path.exists("log4.csv")

    def test_flag_beats_config_format(self, runner):
        with open("custom.json", "w", encoding="utf-8") as f:
            json.dump({"output": {"format": "csv"}}, f)
        result = runner.invoke(cli, ["--config", "custom.json", "limit", "--utility", "log",
                                     "--output", "json", "--out", "law"])
        assert result.exit_code == 0, result.output
        assert os.path.exists("law.json")

    def test_same_command_gives_identical_bytes(self, runner):
        args = ["solve", "--utility", "power:gamma=0.5", "--n", "12", "--output", "both"]
        first = runner.invoke(cli, args + ["--out", "a"])
        second = runner.invoke(cli, args + ["--out", "b"])
        assert first.exit_code == second.exit_code == 0
        assert first.output == second.output
        for suffix in (".json", ".csv"):
            with open("a" + suffix, "rb") as fa, open("b" + suffix, "rb") as fb:
                assert fa.read() == fb.read()

    def test_csv_round_trip_keeps_ks(self, runner):
        solved = runner.invoke(cli, ["solve", "--utility", "power:gamma=0.5", "--n", "30",
                                     "--output", "both", "--out", "p30"])
        assert solved.exit_code == 0, solved.output
        from_csv = last_json(runner.invoke(cli, ["fit", "--rewards", "p30.csv", "--utility", "power:gamma=0.5"]))
        from_json = last_json(runner.invoke(cli, ["fit", "--rewards", "p30.json", "--utility", "power:gamma=0.5"]))
        assert from_csv["ks"] == pytest.approx(from_json["ks"], abs=1e-12)
