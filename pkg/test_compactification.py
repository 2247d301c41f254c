import logging

import numpy as np
import pytest

from compactification import (
    AtomRegistry,
    BoundaryAtom,
    CompactificationSpec,
    classify_point,
    metric_d,
    metric_matrix,
    spec_from_ids,
    sphere_project,
    sphere_spec,
    stack,
)
from config import NORMALIZATION_SAMPLES, SEED
from gallery import counter_magnitude
from integrand_catalog import abs_integrand, get_integrand
from transform import lipschitz_norms, lipschitz_pairs, to_ball_coords


@pytest.fixture(scope="module")
def logsin_spec():
    return spec_from_ids(["logsin"], 1)


def test_sphere_metric_is_euclidean(sphere1):
    z = np.array([[0.2], [-0.4]])
    w = np.array([[0.5], [0.1]])
    assert sphere1.is_sphere
    assert np.allclose(metric_d(z, w, sphere1), [0.3, 0.5])


def test_generators_are_normalized(logsin_spec):
    assert logsin_spec.scales[0] >= 1.0
    zhat = np.linspace(-0.999, 0.999, 401).reshape(-1, 1)
    assert np.max(np.abs(logsin_spec.ball_values(zhat))) <= 1.0 + 1e-9
    with pytest.raises(ValueError):
        logsin_spec.ball_values(np.array([[1.0]]))


def test_normalization_records_ball_lipschitz(logsin_spec):
    pairs = lipschitz_pairs(1, NORMALIZATION_SAMPLES, SEED)
    norms = lipschitz_norms(get_integrand("logsin"), pairs)
    assert logsin_spec.scales[0] == pytest.approx(max(1.0, norms.sup_T, norms.lip_f))
    assert logsin_spec.ball_lips[0] == pytest.approx(norms.lip_T / logsin_spec.scales[0])
    assert logsin_spec.ball_lips[0] > 1.0
    area = spec_from_ids(["area"], 1)
    assert area.ball_lips[0] <= 1.0 + 1e-6
    assert sphere_spec(1).ball_lips == ()


def test_metric_matrix_is_a_metric(logsin_spec):
    zhat = to_ball_coords(np.array([[-50.0], [-1.0], [0.0], [2.0], [1e4]]))
    d = metric_matrix(zhat, logsin_spec)
    assert np.allclose(d, d.T)
    assert np.allclose(np.diag(d), 0.0)
    for k in range(len(d)):
        assert np.all(d <= d[:, [k]] + d[[k], :] + 1e-12)
    assert metric_d(zhat[:1], zhat[1:2], logsin_spec)[0] >= abs(zhat[0, 0] - zhat[1, 0])


def test_sphere_registry_groups_by_direction(registry1):
    a = registry1.classify([1e4])
    assert registry1.classify([5e5]) == a
    assert registry1.lookup([-1e4]) is None
    b = registry1.classify([-2e4])
    assert a != b
    assert np.allclose(sphere_project(registry1[b]), [-1.0])
    with pytest.raises(ValueError):
        registry1.classify([10.0])


def test_logsin_separates_phases(logsin_spec):
    registry = AtomRegistry(logsin_spec)
    even = registry.seed_atom([counter_magnitude(4, False)])
    odd = registry.seed_atom([counter_magnitude(4, True)])
    assert even != odd
    assert registry[even].gen_limits[0] > registry[odd].gen_limits[0] + logsin_spec.tol_equiv
    assert np.allclose(registry[even].dir, registry[odd].dir)


def test_seeded_atom_is_cauchy(logsin_spec):
    registry = AtomRegistry(logsin_spec)
    atom = registry[registry.seed_atom([counter_magnitude(4, False)])]
    assert atom.cauchy
    assert atom.spread <= logsin_spec.tol_equiv
    assert np.linalg.norm(atom.dir) == pytest.approx(1.0, abs=1e-9)


def test_drifting_phase_witness_is_flagged(logsin_spec, caplog):
    registry = AtomRegistry(logsin_spec)
    with caplog.at_level(logging.WARNING, logger="compactification"):
        atom_id = registry.seed_atom([counter_magnitude(4, False)], log_step=1.0)
    atom = registry[atom_id]
    assert not atom.cauchy
    assert atom.spread > logsin_spec.tol_equiv
    assert "not Cauchy" in caplog.text
    restored = AtomRegistry.from_dict(registry.to_dict())
    assert not restored[atom_id].cauchy


def test_atom_without_witness_fails_validation(logsin_spec):
    with pytest.raises(ValueError):
        BoundaryAtom(0, logsin_spec).validate()


def test_registry_round_trip(logsin_spec):
    registry = AtomRegistry(logsin_spec)
    registry.atom_for_direction([1.0])
    registry.atom_for_direction([-1.0])
    restored = AtomRegistry.from_dict(registry.to_dict())
    assert len(restored) == len(registry)
    for a, b in zip(registry.atoms, restored.atoms):
        assert np.allclose(a.dir, b.dir)
        assert np.allclose(a.gen_limits, b.gen_limits)


def test_classify_point_checks_registry(sphere1):
    with pytest.raises(ValueError):
        classify_point([1e4], sphere1, AtomRegistry(sphere_spec(1)))


def test_stack_appends_generators(sphere1):
    stacked = stack(sphere1, [get_integrand("logsin")], ["logsin"])
    assert stacked.generator_ids == ("logsin",)
    assert not stacked.is_sphere


def test_spec_validation():
    with pytest.raises(ValueError):
        CompactificationSpec.build([abs_integrand(2)], ["abs"], dim=1)
    spec = CompactificationSpec.from_dict(spec_from_ids(["area"], 2).to_dict())
    assert spec.dim == 2
    assert spec.generator_ids == ("area",)
