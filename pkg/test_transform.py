import importlib

import numpy as np
import pytest

import config
from compactification import AtomRegistry, sphere_spec
from integrand_catalog import abs_integrand, affine_integrand, area_integrand, get_integrand, logsin_integrand
from transform import (
    DomainError,
    GrowthViolationError,
    Integrand,
    NoRecessionError,
    default_magnitudes,
    direction_net,
    from_ball,
    from_ball_coords,
    linear_combination,
    lipschitz_norms,
    perspective,
    recession_profile,
    recession_value,
    to_ball,
    to_ball_coords,
    upper_recession,
)


def test_ball_coordinates_are_inverse():
    z = np.array([[3.0], [-0.5], [0.0]])
    assert np.allclose(from_ball_coords(to_ball_coords(z)), z)
    with pytest.raises(DomainError):
        from_ball_coords(np.array([[1.0]]))


def test_growth_is_certified():
    with pytest.raises(GrowthViolationError):
        Integrand(func=lambda z, x: z[:, 0] ** 2, label="square")
    with pytest.raises(ValueError):
        Integrand(func=lambda z, x: z[:, 0], p=0.5)


def test_transform_of_area():
    g = to_ball(area_integrand())
    assert g(np.array([[0.5]]))[0] == pytest.approx(np.sqrt(0.5))
    assert g(np.array([[0.0]]))[0] == pytest.approx(1.0)
    with pytest.raises(DomainError):
        g(np.array([[1.0]]))


def test_from_ball_undoes_to_ball():
    f = area_integrand()
    back = from_ball(to_ball(f))
    z = np.array([[-7.0], [0.3], [12.0]])
    assert np.allclose(back(z), f(z))


def test_recession_profile_of_area_is_regular():
    estimates = recession_profile(area_integrand())
    assert all(e.regular for e in estimates)
    assert [e.value for e in estimates] == pytest.approx([1.0, 1.0])


def test_logsin_has_no_recession():
    f = logsin_integrand()
    assert not all(e.regular for e in recession_profile(f))
    assert recession_value(f, [1.0]) is None
    with pytest.raises(NoRecessionError):
        perspective(f)


def test_recession_profile_needs_four_decades():
    with pytest.raises(ValueError):
        recession_profile(area_integrand(), magnitudes=np.logspace(1, 3, 10))


def test_perspective_of_area():
    p = perspective(area_integrand())
    assert p(np.array([[2.0]]), 0.0)[0] == pytest.approx(2.0)
    assert p(np.array([[2.0]]), 2.0)[0] == pytest.approx(2.0 * np.sqrt(2.0))


def test_upper_recession_finds_logsin_peak():
    spec = sphere_spec(1)
    registry = AtomRegistry(spec)
    atom = registry[registry.atom_for_direction([1.0])]
    value = upper_recession(logsin_integrand(), atom, spec)
    assert 1.8 < value <= 2.0 + 1e-9


def test_lipschitz_norms_of_abs():
    norms = lipschitz_norms(abs_integrand())
    assert norms.lip_f <= 1.0 + 1e-9
    assert norms.sup_T <= 1.0 + 1e-9
    assert norms.weighted_lip == pytest.approx(norms.sup_T + norms.lip_f)


def test_linear_combination_keeps_recession():
    f = linear_combination([(2.0, abs_integrand()), (-1.0, affine_integrand([1.0], 0.5))])
    z = np.array([[3.0], [-2.0]])
    assert np.allclose(f(z), [2 * 3.0 - 3.5, 2 * 2.0 + 1.5])
    assert recession_value(f, [1.0]) == pytest.approx(1.0)
    assert recession_value(f, [-1.0]) == pytest.approx(3.0)


def test_direction_net_is_unit():
    dirs = direction_net(2, 8)
    assert dirs.shape == (8, 2)
    assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)
    assert np.allclose(np.linalg.norm(direction_net(3, 20), axis=1), 1.0)


def test_catalog_rejects_unknown_id():
    with pytest.raises(KeyError):
        get_integrand("nope")
    assert get_integrand("const:2").growth_C == pytest.approx(2.0)


def test_recession_decades_from_env(monkeypatch):
    monkeypatch.setenv("REC_MAGNITUDE_DECADES", "2,7")
    try:
        assert importlib.reload(config).REC_MAGNITUDE_DECADES == (2, 7)
    finally:
        monkeypatch.delenv("REC_MAGNITUDE_DECADES")
        importlib.reload(config)
    mags = default_magnitudes((2, 7))
    assert mags[0] == pytest.approx(1e2)
    assert mags[-1] == pytest.approx(1e7)
    assert len(mags) == 5 * config.REC_POINTS_PER_DECADE + 1
    with pytest.raises(ValueError):
        default_magnitudes((1, 3))
