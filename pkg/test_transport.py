import numpy as np
import pytest

from compactification import sphere_spec
from measure_core import DiscreteMeasure
from transform import to_ball_coords
from transport import (
    FiniteMetricSpace,
    kantorovich_norm,
    lip_dual_distance,
    metric_space_from_spec,
    solve_lip_dual,
    two_point_value,
)


@pytest.mark.parametrize("t", [0.1, 0.5, 2.0, 10.0])
def test_two_point_closed_form(t):
    value = lip_dual_distance(DiscreteMeasure.dirac([0.0]), DiscreteMeasure.dirac([t]))
    assert value == pytest.approx(two_point_value(t), abs=1e-7)


def test_identical_measures_are_at_distance_zero():
    m = DiscreteMeasure([[0.0], [1.0]], [0.3, 0.7])
    result = solve_lip_dual(m, m)
    assert result.value == 0.0
    assert result.n_support == 0


def test_mass_defect_uses_the_sup_bound():
    result = kantorovich_norm(np.array([0.5]), np.zeros((1, 1)))
    assert result.value == pytest.approx(0.5, abs=1e-9)


def test_symmetry_and_triangle(rng):
    ms = [DiscreteMeasure(rng.uniform(size=(4, 2)), rng.uniform(size=4)) for _ in range(3)]
    d01 = lip_dual_distance(ms[0], ms[1])
    assert d01 == pytest.approx(lip_dual_distance(ms[1], ms[0]), abs=1e-8)
    d12 = lip_dual_distance(ms[1], ms[2])
    d02 = lip_dual_distance(ms[0], ms[2])
    assert d02 <= d01 + d12 + 1e-8


def test_metric_validation():
    bad = FiniteMetricSpace([[0.0], [1.0], [2.0]], np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]], dtype=float))
    with pytest.raises(ValueError, match="triangle"):
        bad.validate()
    with pytest.raises(ValueError):
        FiniteMetricSpace([[0.0]], np.zeros((2, 2)))


def test_space_must_contain_support():
    space = FiniteMetricSpace.euclidean([[0.0], [1.0]])
    with pytest.raises(ValueError, match="not embedded"):
        solve_lip_dual(DiscreteMeasure.dirac([0.5]), DiscreteMeasure.dirac([0.0]), space)
    with pytest.raises(ValueError):
        solve_lip_dual(DiscreteMeasure.dirac([0.0]), DiscreteMeasure.dirac([0.0, 1.0]))


def test_ball_space_from_sphere_spec():
    pts = to_ball_coords(np.array([[0.0], [3.0]]))
    space = metric_space_from_spec(pts, sphere_spec(1))
    value = solve_lip_dual(DiscreteMeasure.dirac(pts[0]), DiscreteMeasure.dirac(pts[1]), space).value
    assert value == pytest.approx(two_point_value(0.75), abs=1e-7)


def test_support_size_is_capped():
    n = 600
    with pytest.raises(ValueError, match="LP_MAX_POINTS"):
        kantorovich_norm(np.ones(n), np.zeros((n, n)))
