import numpy as np
import pytest

from gallery import laminate_target, singular_target
from inhomogenization import (
    TERMS,
    BudgetParameterError,
    ErrorBudget,
    battery_checks,
    inhomogenize_ac,
    inhomogenize_singular,
)
from young import elementary

K = 8


@pytest.fixture(scope="module")
def point_target():
    return singular_target([[0.5]], [1.0], [[1.0]], K)


def test_error_budget_total():
    budget = ErrorBudget({"E1": 0.1, "E2": -0.2}, {"a": 1}, slack=0.05)
    assert budget.total == pytest.approx(0.35)
    assert budget.to_dict()["total"] == pytest.approx(0.35)


def test_singular_stays_within_budget(point_target):
    result = inhomogenize_singular(point_target, a=3, b=2)
    assert result.within_budget
    assert set(result.budget.terms) == set(TERMS)
    assert result.budget.terms["E1"] == 0.0
    assert result.field.sum() / len(result.mu) == pytest.approx(1.0)
    assert np.all(result.field >= 0)


def test_singular_rejects_bad_parameters(point_target):
    with pytest.raises(BudgetParameterError):
        inhomogenize_singular(point_target, a=6, b=3)
    with pytest.raises(BudgetParameterError):
        inhomogenize_singular(point_target, a=0)
    near_edge = singular_target([[0.1]], [1.0], [[1.0]], K)
    with pytest.raises(BudgetParameterError, match="increase a"):
        inhomogenize_singular(near_edge, a=3)


def test_singular_without_concentration():
    empty = singular_target([[0.5]], [0.0], [[1.0]], K)
    result = inhomogenize_singular(empty, a=3)
    assert not result.field.any()
    assert result.budget.total == 0.0
    assert result.discrepancy == pytest.approx(0.0, abs=1e-12)


def test_ac_builds_a_laminate():
    target = laminate_target([1.0], [-1.0], 0.5, K)
    result = inhomogenize_ac(target, 2.0 ** -4)
    assert result.within_budget
    assert set(np.unique(result.field)) == {-1.0, 1.0}
    assert np.mean(result.field > 0) == pytest.approx(0.5)
    assert result.budget.params["cubes"] == 16
    assert not result.notes


@pytest.mark.parametrize("t, s", [(0.3, 0.5), (2.0 ** -K, 0.5), (2.0 ** -4, 1.0)])
def test_ac_rejects_bad_parameters(t, s):
    target = laminate_target([1.0], [-1.0], 0.5, K)
    with pytest.raises(BudgetParameterError):
        inhomogenize_ac(target, t, s)


def test_ac_needs_absolutely_continuous_concentration(point_target):
    with pytest.raises(BudgetParameterError, match="absolutely continuous"):
        inhomogenize_ac(point_target, 2.0 ** -4)


def test_battery_checks_table(point_target):
    zero = elementary(np.zeros((len(point_target.mu), 1)), point_target.mu, point_target.spec,
                      point_target.registry)
    table = battery_checks(point_target, zero)
    assert list(table.columns) == ["eta", "psi", "field", "target", "gap"]
    assert table["gap"].max() > 0
