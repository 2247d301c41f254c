import json

import numpy as np
import pytest

from compactification import AtomRegistry, sphere_spec
from integrand_catalog import get_integrand
from measure_core import DiscreteMeasure, VectorDiscreteMeasure, lebesgue_grid
from scenarios import (
    SCENARIOS,
    CharacterisationError,
    PiecewiseAffineField,
    ScenarioConfig,
    ScenarioReport,
    perspective_functional,
    run_scenario,
    verify_characterisation,
)
from young import YoungTriple, elementary


def test_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig("jensen", resolution=100)
    with pytest.raises(ValueError):
        ScenarioConfig("jensen", resolution=64, cells=48)
    with pytest.raises(ValueError):
        ScenarioConfig("jensen", js=())
    cfg = ScenarioConfig("jensen", js=[4, 8])
    assert cfg.js == (4.0, 8.0)


def test_config_extras_land_in_params(tmp_path):
    cfg = ScenarioConfig.from_dict({"scenario": "envelope", "ks": [1, 2], "params": {"n": 5}})
    assert cfg.params == {"ks": [1, 2], "n": 5}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    again = ScenarioConfig.from_json(str(path), scenario="separation")
    assert again.scenario == "separation"
    assert again.params == cfg.params


def test_report_helpers():
    report = ScenarioReport("demo", ScenarioConfig("demo"))
    assert report.near("close", 1.0005, 1.0, 1e-3).passed
    assert report.at_least("floor", 2.0, 1.0).passed
    assert report.holds("flag", True).passed
    assert report.passed
    report.at_most("ceiling", 2.0, 1.0)
    assert not report.passed
    report.add_series("s", [1, 2], [3, 4], "x", "y")
    assert list(report.checks_frame()["pass"]) == [True, True, True, False]
    data = json.loads(json.dumps(report.to_dict()))
    assert data["pass"] is False
    assert data["series"]["s"]["y"] == [3.0, 4.0]


def test_unknown_scenario():
    with pytest.raises(KeyError):
        run_scenario(ScenarioConfig("nope"))


def test_piecewise_affine_field():
    u = PiecewiseAffineField((0.5,), (1.0, 0.6), (0.5,))
    assert np.allclose(u([0.25, 0.75]), [0.25, 1.15])
    du = u.derivative_measure(lebesgue_grid(8))
    assert du.total()[0] == pytest.approx(1.3)
    assert PiecewiseAffineField.from_dict(u.to_dict()) == u
    with pytest.raises(ValueError):
        PiecewiseAffineField((0.6, 0.4), (1.0, 1.0, 1.0), (0.0, 0.0))
    with pytest.raises(ValueError):
        PiecewiseAffineField((0.5,), (1.0,), (0.0,))


def test_perspective_functional():
    eta = VectorDiscreteMeasure([[0.2], [0.7]], [[1.0], [-2.0]])
    assert perspective_functional(eta, get_integrand("abs")) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        perspective_functional(eta, get_integrand("area"))


def test_characterisation_of_elementary_triple():
    mu = lebesgue_grid(64)
    u = PiecewiseAffineField((0.3, 0.7), (1.0, -2.0, 0.5), (0.0, 0.0))
    nu = elementary(u.gradient(mu.points[:, 0]), mu)
    rep = verify_characterisation(nu, u)
    assert rep.passed
    assert rep.first_moment == pytest.approx(0.3 + 0.8 + 0.15, abs=0.05)
    assert set(rep.table["condition"]) == {1, 2, 3}


def test_characterisation_rejects_boundary_concentration():
    mu = lebesgue_grid(16)
    spec = sphere_spec(1)
    registry = AtomRegistry(spec)
    atom = registry.atom_for_direction([1.0])
    base = elementary(np.zeros(len(mu)), mu, spec, registry)
    nu = YoungTriple(base.osc, mu, DiscreteMeasure([[0.0]], [0.3]), {0: DiscreteMeasure.dirac([float(atom)])},
                     spec, registry)
    with pytest.raises(CharacterisationError):
        verify_characterisation(nu, PiecewiseAffineField((0.5,), (0.0, 0.0), (0.3,)))


@pytest.mark.parametrize("name, params", [
    ("area_strict", {}),
    ("reshetnyak", {}),
    ("jensen", {}),
    ("characterisation", {}),
    ("envelope", {"ks": (1, 2), "n": 5, "iters": 16}),
])
def test_quick_scenarios_pass(name, params, tmp_path):
    report = run_scenario(ScenarioConfig(name, output_dir=str(tmp_path), params=params))
    assert report.checks
    assert report.passed, report.checks_frame().to_string()


@pytest.mark.slow
@pytest.mark.parametrize("name", sorted(set(SCENARIOS) - {"area_strict", "reshetnyak", "jensen",
                                                          "characterisation", "envelope"}))
def test_full_scenarios_pass(name, tmp_path):
    report = run_scenario(ScenarioConfig(name, output_dir=str(tmp_path)))
    assert report.passed, report.checks_frame().to_string()
