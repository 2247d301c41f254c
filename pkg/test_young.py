import json

import numpy as np
import pytest

import gallery
from compactification import AtomRegistry, spec_from_ids, sphere_spec
from integrand_catalog import area_integrand, get_integrand, logsin_integrand
from measure_core import DiscreteMeasure, ParametrizedMeasure, VectorDiscreteMeasure, lebesgue_grid
from transform import Integrand
from transport import two_point_value
from young import (
    _classify_all,
    BallTest,
    ConcentrationOverlapError,
    IntegrandNotContinuousError,
    SampledSequence,
    SpatialTest,
    YoungTriple,
    barycentre,
    compare_triples,
    decompose,
    elementary,
    elementary_measure,
    estimate,
    fiber_distance,
    is_equiintegrable,
    join,
    pair,
    pair_test,
    r_cut_sensitivity,
    rescale_compare,
    staircase,
    ym_distance,
)

RES, CELLS = 512, 64
JS = (128.0, 256.0)


@pytest.fixture(scope="module")
def oscillating():
    return gallery.oscillation(JS, RES, CELLS)


@pytest.fixture(scope="module")
def spiking():
    return gallery.concentration((64.0, 128.0, 256.0), RES, CELLS)


@pytest.fixture
def point_mass():
    mu = lebesgue_grid(64)
    return elementary_measure(VectorDiscreteMeasure([[0.5]], [[1.0]]), mu)


def test_sampled_sequence_validation():
    mu = lebesgue_grid(4)
    with pytest.raises(ValueError):
        SampledSequence.from_measure(np.zeros((2, 4, 1)), mu, (1.0,))
    with pytest.raises(ValueError):
        SampledSequence.from_measure(np.zeros((1, 3, 1)), mu, (1.0,))
    seq = SampledSequence.from_measure(np.ones((1, 4)), mu, (1.0,))
    assert seq.dim == 1
    assert seq.integral(area_integrand())[0] == pytest.approx(np.sqrt(2.0))


def test_oscillation_fibers(oscillating):
    nu = estimate(oscillating)
    target = DiscreteMeasure([[-1.0], [1.0]], [0.5, 0.5])
    assert max(fiber_distance(f, target) for f in nu.osc.fibers) < 1e-6
    assert nu.lambda_mass() == 0.0
    assert pair(nu, area_integrand()) == pytest.approx(np.sqrt(2.0))


def test_concentration_goes_to_lambda(spiking):
    nu = estimate(spiking, R_cut=32.0)
    assert nu.lambda_mass() == pytest.approx(1.0)
    centre = nu.conc.weights @ nu.conc.points[:, 0] / nu.lambda_mass()
    assert centre < 2.0 / CELLS
    for i in np.nonzero(nu.conc.weights > 0)[0]:
        assert all(atom.dir[0] > 0 for atom, _ in nu.atoms_of(i))
    assert pair(nu, area_integrand()) == pytest.approx(2.0, abs=1e-6)


def test_classification_keeps_observed_magnitude():
    registry = AtomRegistry(spec_from_ids(["logsin"], 1))
    ids = _classify_all(np.array([[40.0], [500.0], [40.0]]), registry)
    assert ids[0] != ids[1]
    assert ids[2] == ids[0]
    mags = sorted(float(np.linalg.norm(a.witness_array())) for a in registry.atoms)
    assert mags == pytest.approx([40.0, 500.0])
    with pytest.raises(ValueError):
        _classify_all(np.array([[40.0]]), registry, floor=100.0)


def test_spikes_below_mag_min_keep_their_signature(spiking):
    spec = spec_from_ids(["logsin"], 1)
    nu = estimate(spiking, spec, R_cut=32.0)
    assert nu.lambda_mass() == pytest.approx(1.0)
    witness = np.concatenate([a.witness_array()[:, 0] for a in nu.registry.atoms])
    assert set(np.round(witness, 9)) <= {64.0, 128.0, 256.0}
    assert np.max(witness) < spec.mag_min


def test_point_mass_pairing(point_mass):
    assert pair(point_mass, area_integrand()) == pytest.approx(2.0)
    assert np.allclose(barycentre(point_mass).total(), [1.0])


def test_pairing_needs_continuity(point_mass):
    logsin = logsin_integrand()
    with pytest.raises(IntegrandNotContinuousError):
        pair(point_mass, logsin)
    upper = pair(point_mass, logsin, recession="upper")
    assert 0.0 < upper <= 2.0 + 1e-9
    atom = point_mass.atoms_of(0)[0][0]
    assert pair(point_mass, logsin, recession={atom.id: 1.5}) == pytest.approx(1.5)


def test_pairing_checks_growth_exponent(point_mass):
    quadratic = Integrand(func=lambda z, x: np.sum(z * z, axis=1), p=2, label="quadratic")
    with pytest.raises(ValueError):
        pair(point_mass, quadratic)


def test_elementary_measure_needs_atoms_on_finer_spec():
    mu = lebesgue_grid(8)
    with pytest.raises(ValueError):
        elementary_measure(VectorDiscreteMeasure([[0.5]], [[1.0]]), mu, spec_from_ids(["logsin"], 1))


def test_triple_requires_angle_fibers(sphere1, registry1):
    mu = lebesgue_grid(4)
    osc = ParametrizedMeasure(mu.points, tuple(DiscreteMeasure.dirac([0.0]) for _ in range(4)))
    with pytest.raises(ValueError):
        YoungTriple(osc, mu, DiscreteMeasure([[0.5]], [1.0]), {}, sphere1, registry1)


def test_triple_json_round_trip(point_mass):
    restored = YoungTriple.from_dict(json.loads(json.dumps(point_mass.to_dict())))
    area = area_integrand()
    assert pair(restored, area) == pytest.approx(pair(point_mass, area))
    assert restored.lambda_mass() == pytest.approx(1.0)


def test_lambda_boundary(sphere1, registry1):
    mu = lebesgue_grid(4)
    osc = ParametrizedMeasure(mu.points, tuple(DiscreteMeasure.dirac([0.0]) for _ in range(4)))
    atom = registry1.atom_for_direction([1.0])
    conc = DiscreteMeasure([[0.0], [0.5]], [0.3, 0.7])
    angle = {0: DiscreteMeasure.dirac([float(atom)]), 1: DiscreteMeasure.dirac([float(atom)])}
    nu = YoungTriple(osc, mu, conc, angle, sphere1, registry1)
    assert nu.lambda_boundary() == pytest.approx(0.3)


def test_equiintegrability_flag(oscillating, spiking):
    assert is_equiintegrable(oscillating).flag
    flagged = is_equiintegrable(spiking, R_cut=32.0)
    assert not flagged.flag
    assert flagged.profile[-1] == pytest.approx(1.0)


def test_decompose_is_exact():
    seq = gallery.mixed(JS, RES, CELLS)
    dec = decompose(seq, 32.0)
    assert np.array_equal(dec.osc_part.fields + dec.conc_part.fields, seq.fields)
    assert np.max(np.abs(dec.osc_part.fields)) <= 32.0
    assert estimate(dec.osc_part, R_cut=32.0).lambda_mass() == 0.0


def test_join_matches_prediction():
    spec = sphere_spec(1)
    registry = AtomRegistry(spec)
    w = gallery.mixed(JS, RES, CELLS)
    v = gallery.strongly_convergent(0.5, JS, RES, CELLS, spike_at=0.5)
    joined = join(v, w, spec, registry, R_cut=32.0)
    nu_sum = estimate(joined.sequence, spec, 32.0, registry=registry)
    assert ym_distance(nu_sum, joined.predicted) < 0.05
    assert joined.predicted.lambda_mass() == pytest.approx(2.0, abs=0.01)


def test_join_rejects_overlapping_concentration():
    w = gallery.mixed(JS, RES, CELLS)
    v = gallery.strongly_convergent(0.5, JS, RES, CELLS, spike_at=0.0)
    with pytest.raises(ConcentrationOverlapError):
        join(v, w, R_cut=32.0)


@pytest.mark.parametrize("scale", ["constant", "linear"])
def test_rescaling(oscillating, scale):
    x = oscillating.mu.points[:, 0]
    a = np.full_like(x, 2.0) if scale == "constant" else 1.0 + x
    report = rescale_compare(oscillating, a)
    assert report.passed
    assert report.lambda_gap == 0.0


def test_rescaling_rejects_nonpositive_weight(oscillating):
    with pytest.raises(ValueError):
        rescale_compare(oscillating, np.zeros(len(oscillating.mu)))


def test_staircase_bounds():
    x = np.linspace(0.0, 1.0, 101)
    st = staircase(1.0 + x, 20)
    assert st.sup_err <= 1.0 / 20
    with pytest.raises(ValueError):
        staircase(x, 20)
    with pytest.raises(ValueError):
        staircase(np.full(3, 0.01), 20)


def test_ball_and_spatial_tests(sphere1, registry1):
    atom = registry1[registry1.atom_for_direction([-1.0])]
    assert BallTest("radial").boundary(atom) == 0.5
    assert BallTest("coord", (0,)).boundary(atom) == pytest.approx(-0.5)
    assert np.allclose(SpatialTest()(np.zeros((3, 1))), 1.0)
    assert SpatialTest((0.5,))(np.array([[0.5]]))[0] == pytest.approx(0.5)
    with pytest.raises(KeyError):
        BallTest("nope").boundary(atom)


def test_pair_test_mass_split(point_mass):
    # mass test vanishes at the boundary, radial test sees the whole concentration
    assert pair_test(point_mass, SpatialTest(), BallTest("mass")) == pytest.approx(0.5)
    assert pair_test(point_mass, SpatialTest(), BallTest("radial")) == pytest.approx(0.5)


def test_fiber_distance_uses_ball_coordinates():
    assert fiber_distance(DiscreteMeasure.dirac([0.0]), DiscreteMeasure.dirac([1.0])) == pytest.approx(
        two_point_value(0.5), abs=1e-7)


def test_distances_between_triples(point_mass):
    assert ym_distance(point_mass, point_mass) == 0.0
    assert compare_triples(point_mass, point_mass).within(1e-9)
    mu = lebesgue_grid(8)
    other = elementary(np.zeros(8), mu, spec_from_ids(["area"], 1))
    with pytest.raises(ValueError):
        ym_distance(point_mass, other)


def test_r_cut_sensitivity_table(spiking):
    table = r_cut_sensitivity(spiking, cuts=(32.0, 1e3), f=get_integrand("abs"))
    assert list(table.columns) == ["R_cut", "lambda_mass", "pair", "atoms"]
    assert table["lambda_mass"].iloc[0] == pytest.approx(1.0)
    assert table["lambda_mass"].iloc[1] == 0.0
