import asyncio
import json

import numpy as np
import pytest

from main import EXIT_PASS, EXIT_USAGE, LabRunner, cli_run
from measure_core import lebesgue_grid
from scenarios import PiecewiseAffineField, ScenarioConfig
from transport import two_point_value
from young import elementary


@pytest.fixture(autouse=True)
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def test_distance_prints_closed_form(capsys):
    m1 = json.dumps({"points": [[0.0]], "weights": [1.0]})
    m2 = json.dumps({"points": [[2.0]], "weights": [1.0]})
    assert cli_run(["distance", "--m1", m1, "--m2", m2]) == EXIT_PASS
    assert float(capsys.readouterr().out.strip()) == pytest.approx(two_point_value(2.0), abs=1e-7)


def test_usage_errors():
    assert cli_run(["bogus"]) == EXIT_USAGE
    assert cli_run(["scenario", "nope"]) == EXIT_USAGE


def test_envelope_command(workdir):
    code = cli_run(["envelope", "--k", "1", "--grid", "5", "--iters", "16", "--output", str(workdir / "gk")])
    assert code == EXIT_PASS
    assert (workdir / "gk.npy").exists()


def test_scenario_command_writes_report(workdir):
    code = cli_run(["scenario", "jensen", "--output-dir", str(workdir / "out"), "--no-plots"])
    assert code == EXIT_PASS
    report = json.loads((workdir / "out" / "jensen" / "report.json").read_text())
    assert report["pass"] is True


def test_estimate_command(workdir, capsys):
    mu = lebesgue_grid(64)
    sign = np.where(np.arange(64) % 2 == 0, 1.0, -1.0)
    fields = np.stack([sign, np.repeat(sign[::2], 2)])
    np.savez(workdir / "seq.npz", fields=fields, points=mu.points, weights=mu.weights)
    code = cli_run(["estimate", "--seq", str(workdir / "seq.npz"), "--output", str(workdir / "nu.json")])
    assert code == EXIT_PASS
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["lambda_mass"] == 0.0
    assert (workdir / "nu.json").exists()


def test_verify_characterisation_command(workdir):
    mu = lebesgue_grid(32)
    u = PiecewiseAffineField((0.5,), (1.0, -1.0), (0.0,))
    nu = elementary(u.gradient(mu.points[:, 0]), mu)
    (workdir / "nu.json").write_text(json.dumps(nu.to_dict()))
    (workdir / "u.json").write_text(json.dumps(u.to_dict()))
    code = cli_run(["verify-characterisation", "--triple", str(workdir / "nu.json"), "--u", str(workdir / "u.json")])
    assert code == EXIT_PASS


def test_lab_runner_writes_summary(workdir):
    configs = [ScenarioConfig(name, output_dir=str(workdir)) for name in ("jensen", "reshetnyak")]
    runner = LabRunner(configs, workers=2, output_dir=str(workdir), plots=False)
    assert asyncio.run(runner.start())
    assert len(runner.reports) == 2
    assert (workdir / "summary.csv").exists()
