import json

import numpy as np
import pytest

from compactification import AtomRegistry, sphere_spec
from config import ENVELOPE_NODES
from convexity import (
    IndexSet,
    conformal_minorant,
    convex_battery,
    diagonal_incomparable,
    envelope_integrand,
    g_lambda,
    gk_envelope,
    jensen_verify,
    lamination_envelope,
    minorant_gap,
    muller_gk,
    rank_one_directions,
    rank_one_violation,
    separation,
)
from integrand_catalog import abs_integrand, get_integrand
from measure_core import DiscreteMeasure

SMALL = 5


@pytest.fixture(scope="module")
def small_envelope():
    return gk_envelope(1.0, SMALL, 16)


def test_muller_gk_values():
    g = muller_gk(2.0)
    assert g(np.zeros((1, 4)))[0] == pytest.approx(4.0)
    assert g(np.array([[2.0, 0.0, 0.0, 2.0]]))[0] == 0.0
    assert g(np.array([[1.0, 1.0, 1.0, -1.0]]))[0] == pytest.approx(2.0 + 2.0 + 4.0)
    with pytest.raises(ValueError):
        muller_gk(0.0)


def test_index_set_parsing():
    s = IndexSet.parse("5,1,2/8")
    assert s.members == (1, 2, 5)
    assert s.n_max == 8
    assert 2 in s and 3 not in s
    assert s.complement() == (0, 3, 4, 6, 7, 8)
    assert IndexSet.parse(str(s)) == s
    with pytest.raises(ValueError):
        IndexSet((), 8)
    with pytest.raises(ValueError):
        IndexSet(tuple(range(9)), 8)


def test_g_lambda_vanishes_on_member_traces():
    g = g_lambda(IndexSet((1, 3), 8))
    for j in (1, 3):
        assert g(np.array([[3.0 ** j, 0.0, 0.0, 3.0 ** j]]))[0] == pytest.approx(0.0)
    assert g(np.array([[9.0, 0.0, 0.0, 9.0]]))[0] == pytest.approx(12.0)
    assert get_integrand("glambda:1,3/8").label == g.label


def test_rank_one_directions():
    dirs = rank_one_directions()
    assert dirs.shape == (16, 4)
    det = dirs[:, 0] * dirs[:, 3] - dirs[:, 1] * dirs[:, 2]
    assert np.all(det == 0)


def test_convex_function_is_its_own_envelope():
    f = abs_integrand(4)
    res = lamination_envelope(f, 1.0, SMALL, iters=8)
    assert np.allclose(res.grid.values, res.f_values)
    assert res.changes[0] <= 1e-12


def test_gk_envelope_is_rank_one_convex(small_envelope):
    value = small_envelope.value_at_center()
    assert 0.0 < value <= 2.0
    assert all(c >= 0 for c in small_envelope.changes)
    last = small_envelope.changes[-1]
    assert rank_one_violation(small_envelope) <= last + 1e-12
    assert minorant_gap(small_envelope, conformal_minorant()) >= -1e-12


def test_gk_envelope_scales_with_k(small_envelope):
    doubled = gk_envelope(2.0, SMALL, 16)
    assert doubled.value_at_center() / 2.0 == pytest.approx(small_envelope.value_at_center(), rel=1e-9)


def test_envelope_rejects_bad_grids():
    with pytest.raises(ValueError):
        lamination_envelope(abs_integrand(1), 1.0, SMALL)
    with pytest.raises(ValueError):
        lamination_envelope(muller_gk(1.0), 1.0, 4)


def test_envelope_export(small_envelope, tmp_path):
    npy, header = small_envelope.export(str(tmp_path / "gk_1"))
    assert np.load(npy).shape == (SMALL,) * 4
    with open(header) as fh:
        meta = json.load(fh)
    assert meta["n_per_axis"] == SMALL
    assert meta["box"] == pytest.approx(4.0)


def test_envelope_integrand(small_envelope):
    f = muller_gk(1.0)
    interp = envelope_integrand(small_envelope, f)
    centre = np.zeros((1, 4))
    assert interp(centre)[0] == pytest.approx(small_envelope.value_at_center())
    far = np.array([[100.0, 0.0, 0.0, 0.0]])
    assert interp(far)[0] == pytest.approx(f(far)[0])


def test_separation_of_singletons():
    L, G = IndexSet((1,), 4), IndexSet((2,), 4)
    sep = separation(L, G, [1], n=SMALL, iters=16)
    assert sep.value == pytest.approx(4.0)
    assert list(sep.table["j"]) == [1]
    assert separation(L, L, [1, 2]).value == 0.0


def test_diagonal_incomparable_meets_every_set():
    family = [IndexSet((1, 3, 5, 7), 16), IndexSet((2, 4, 6, 8, 10), 16)]
    diag = diagonal_incomparable(family, 16)
    for A in family:
        assert any(j in A for j in diag.members)
        assert any(j not in A for j in diag.members)
    assert diagonal_incomparable([], 6).members == (0, 2, 4, 6)


def test_jensen_on_laminate(small_envelope):
    A = np.array([2.0, 2.0, 0.0, 2.0])
    B = np.array([2.0, -2.0, 0.0, 2.0])
    nu0 = DiscreteMeasure(np.vstack([A, B]), [0.5, 0.5])
    numeric = envelope_integrand(small_envelope, muller_gk(1.0))
    battery = convex_battery(4) + [(numeric, "numeric")]
    assert len(battery) == 7
    tol = 1e-9 + small_envelope.changes[-1]
    ok = jensen_verify(nu0, DiscreteMeasure.zero(1), 0.5 * (A + B), battery, tol=tol)
    assert ok.passed
    assert ok.min_slack >= -tol
    assert "numeric" in set(ok.table["tag"])
    bad = jensen_verify(nu0, DiscreteMeasure.zero(1), A + B + 10.0, battery)
    assert not bad.passed


def test_jensen_with_concentration():
    spec = sphere_spec(4)
    registry = AtomRegistry(spec)
    ab = np.outer([1.0, 0.0], [1.0, 1.0]).reshape(-1) / np.sqrt(2.0)
    atom = registry.atom_for_direction(ab)
    nu_inf = DiscreteMeasure([[float(atom)]], [1.0])
    rep = jensen_verify(DiscreteMeasure.dirac(np.zeros(4)), nu_inf, ab, convex_battery(4), spec, registry)
    assert rep.passed
    assert set(rep.table.columns) >= {"integrand", "lhs", "rhs", "slack"}
    exact = jensen_verify(DiscreteMeasure.dirac(np.zeros(4)), nu_inf, ab, [(abs_integrand(4), "abs")], spec,
                          registry)
    assert exact.table["slack"].iloc[0] == pytest.approx(0.0, abs=1e-9)


@pytest.mark.slow
def test_full_grid_envelope():
    res = gk_envelope(8.0, ENVELOPE_NODES)
    assert res.value_at_center() > 0
    assert rank_one_violation(res) <= res.changes[-1] + 1e-9 * 8.0
