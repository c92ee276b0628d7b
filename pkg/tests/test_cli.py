import json

import pytest

from feslkit.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main
from feslkit.nlp import QPInfeasibleError


def test_run_p1_prints_report(capsys, tmp_path):
    code = main(["run", "--problem", "p1", "--method", "fesl", "--out", str(tmp_path)])
    assert code == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["n_tha"] == 3
    assert [round(v, 6) for v in report["x"]] == [0.1, 0.6]
    assert (tmp_path / "report.json").exists()


def test_esl_restart_from_optimum(capsys):
    assert main(["run", "--problem", "p1", "--method", "esl", "--x0", "0.1,0.6"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert [round(v, 6) for v in report["x"]] == [0.85, 0.1]


def test_config_with_flag_override(capsys, tmp_path):
    cfg = tmp_path / "p1.cfg"
    cfg.write_text("problem = p1\nmethod = direct\neps = 1e-9\n")
    assert main(["run", "--config", str(cfg), "--method", "esl"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["method"] == "esl"
    assert report["settings"]["eps"] == 1e-9


@pytest.mark.parametrize("argv", [
    [],
    ["run"],
    ["run", "--problem", "p9"],
    ["run", "--problem", "p1", "--method", "bfgs"],
    ["run", "--problem", "p1", "--x0", "0.2"],
    ["run", "--problem", "p1", "--x0", "a,b"],
    ["run", "--problem", "p1", "--eps", "-1"],
    ["run", "--problem", "p1", "--record", "x.csv"],
    ["run", "--problem", "p2", "--record", "/nonexistent/la02.csv"],
    ["run", "--config", "/nonexistent.cfg"],
])
def test_usage_errors_exit_1(argv, capsys):
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == EXIT_USAGE


def test_numerical_failure_exit_2(monkeypatch, capsys):
    import feslkit.cli as cli

    def boom(spec):
        raise QPInfeasibleError("inconsistent linearization")

    monkeypatch.setattr(cli, "run_benchmark", boom)
    assert main(["run", "--problem", "p1"]) == EXIT_NUMERICAL
    assert "numerical failure" in capsys.readouterr().err


def test_non_converged_run_exit_2(capsys):
    assert main(["run", "--problem", "p1", "--max-outer", "1"]) == EXIT_NUMERICAL
    assert json.loads(capsys.readouterr().out)["converged"] is False


def test_verify_exit_codes(monkeypatch, capsys):
    assert main(["verify", "--problem", "p1"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["passed"] and {c["check"] for c in out["checks"]}
    monkeypatch.setenv("FESLKIT_THREADS", "zero")
    assert main(["verify", "--problem", "p1"]) == EXIT_USAGE


def test_failed_verify_exit_2(monkeypatch, capsys):
    import feslkit.cli as cli
    from feslkit.bench import CheckResult

    monkeypatch.setattr(cli, "verify", lambda problems, workers: [
        CheckResult("fake", False, 1.0, 1e-5, "forced")])
    assert main(["verify"]) == EXIT_NUMERICAL
