import numpy as np
import pytest

from measure_core import (
    DiscreteMeasure,
    EmptyMeasureError,
    MissingFiberError,
    ParametrizedMeasure,
    ProductMeasure,
    SpatialGrid,
    VectorDiscreteMeasure,
    assemble,
    atomic_split,
    boundary_points,
    disintegrate,
    group_labels,
    lebesgue_grid,
    measure_from_dict,
    pushforward,
    radon_nikodym,
    restrict,
    tv_pair,
)


def test_duplicate_points_are_merged():
    m = DiscreteMeasure([[0.0], [0.0], [1.0]], [0.2, 0.3, 0.5])
    assert len(m) == 2
    assert np.allclose(sorted(m.weights), [0.5, 0.5])
    assert m.mass() == pytest.approx(1.0)


def test_near_duplicates_group_across_sort_order():
    # rows 0 and 2 agree to 1e-13 but row 1 sorts between them
    pts = np.array([[0.0, 1.0], [5e-14, 9.0], [1e-13, 1.0]])
    labels, first = group_labels(pts, 1e-9)
    assert labels.tolist() == [0, 1, 0]
    assert first.tolist() == [0, 1]
    m = DiscreteMeasure(pts, [0.2, 0.3, 0.5])
    assert len(m) == 2
    assert sorted(m.weights) == pytest.approx([0.3, 0.7])


def test_group_labels_chains_and_keeps_first_occurrence():
    pts = np.array([[3.0], [0.0], [0.5], [1.0], [3.0]])
    labels, first = group_labels(pts, 0.6)
    assert labels.tolist() == [0, 1, 1, 1, 0]
    assert first.tolist() == [0, 1]
    assert group_labels(np.zeros((0, 2)), 1e-9)[0].size == 0


def test_invalid_weights_rejected():
    with pytest.raises(ValueError):
        DiscreteMeasure([[0.0]], [-1.0])
    with pytest.raises(ValueError):
        DiscreteMeasure([[0.0], [1.0]], [1.0])
    with pytest.raises(ValueError):
        DiscreteMeasure([[np.nan]], [1.0])


def test_mean_of_empty_measure_raises():
    with pytest.raises(EmptyMeasureError):
        DiscreteMeasure.zero(1).mean()


def test_disintegrate_then_assemble():
    joint = DiscreteMeasure([[0.0, 1.0], [0.0, -1.0], [1.0, 2.0]], [0.25, 0.25, 0.5])
    marginal, fibers = disintegrate(ProductMeasure(joint, 1))
    assert np.allclose(marginal.weights, [0.5, 0.5])
    fiber = fibers.fiber_at([0.0])
    assert fiber.mass() == pytest.approx(1.0)
    assert np.allclose(sorted(fiber.points[:, 0]), [-1.0, 1.0])

    rebuilt = assemble(marginal, fibers)
    assert rebuilt.measure.mass() == pytest.approx(1.0)
    assert len(rebuilt.measure) == 3


def test_assemble_needs_every_fiber():
    marginal = DiscreteMeasure([[0.0], [1.0]], [0.5, 0.5])
    fibers = ParametrizedMeasure([[0.0]], (DiscreteMeasure.dirac([0.0]),))
    with pytest.raises(MissingFiberError):
        assemble(marginal, fibers)


def test_parametrized_measure_requires_probabilities():
    with pytest.raises(ValueError):
        ParametrizedMeasure([[0.0]], (DiscreteMeasure([[0.0]], [0.5]),))
    sub = ParametrizedMeasure([[0.0]], (DiscreteMeasure([[0.0]], [0.5]),), sub_probability=True)
    assert len(sub) == 1


def test_pushforward_merges_images():
    m = DiscreteMeasure([[-1.0], [1.0]], [0.5, 0.5])
    image = pushforward(m, np.abs, vectorized=True)
    assert len(image) == 1
    assert image.weights[0] == pytest.approx(1.0)


def test_restrict_by_predicate_and_mask():
    m = lebesgue_grid(8)
    left = restrict(m, lambda p: p[0] < 0.5)
    assert left.mass() == pytest.approx(0.5)
    masked = restrict(m, m.points[:, 0] > 0.75)
    assert masked.mass() == pytest.approx(0.25)


def test_radon_nikodym_splits_density_and_atom():
    mu = lebesgue_grid(4)
    ac = VectorDiscreteMeasure(mu.points, 0.25 * np.array([[1.0], [2.0], [3.0], [4.0]]))
    atom = VectorDiscreteMeasure([[0.5]], [[1.0]])
    rn = radon_nikodym(ac + atom, mu)
    assert np.allclose(rn.density[:, 0], [1.0, 2.0, 3.0, 4.0])
    assert rn.singular.total_variation() == pytest.approx(1.0)
    assert np.allclose(rn.singular.points, [[0.5]])


def test_tv_pair_adds_area_and_singular_mass():
    mu = lebesgue_grid(16)
    eta = VectorDiscreteMeasure.from_density(np.full(16, 2.0), mu) + VectorDiscreteMeasure([[0.5]], [[-1.0]])
    assert tv_pair(eta, mu) == pytest.approx(np.sqrt(5.0) + 1.0)


def test_atomic_split():
    m = DiscreteMeasure([[0.0], [1.0], [2.0]], [0.5, 0.01, 0.49])
    heavy, light = atomic_split(m, 0.1)
    assert heavy.mass() == pytest.approx(0.99)
    assert light.mass() == pytest.approx(0.01)
    with pytest.raises(ValueError):
        atomic_split(m, 0.0)


def test_lebesgue_grid_and_boundary():
    grid = lebesgue_grid(4, 2)
    assert len(grid) == 16
    assert grid.mass() == pytest.approx(1.0)
    assert np.allclose(boundary_points(8, 1), [[0.0], [1.0]])
    faces = boundary_points(4, 2)
    assert len(faces) == 16
    assert np.all(np.any((faces == 0.0) | (faces == 1.0), axis=1))


def test_spatial_grid_cells():
    grid = SpatialGrid(16, 4)
    cells = grid.cell_index()
    assert np.bincount(cells).tolist() == [4, 4, 4, 4]
    with pytest.raises(ValueError):
        SpatialGrid(16, 5)


def test_measure_from_dict_restores_kind():
    v = VectorDiscreteMeasure([[0.1], [0.2]], [[1.0, 0.0], [0.0, 2.0]])
    restored = measure_from_dict(v.to_dict())
    assert isinstance(restored, VectorDiscreteMeasure)
    assert np.allclose(restored.vweights, v.vweights)
    s = measure_from_dict(DiscreteMeasure([[0.3]], [0.7]).to_dict())
    assert isinstance(s, DiscreteMeasure)
    assert s.mass() == pytest.approx(0.7)
