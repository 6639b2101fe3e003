import numpy as np
import pytest

from mcecontrol import (
    DependenceMeasures,
    build_targets,
    copula_moments,
    copula_pdf,
    feasibility_margin,
    fit_copula,
    gauss_legendre,
    group_measures,
    independence_copula,
    shrink_to_feasible,
)
from mcecontrol.copula import ConstraintTargets, CopulaDensity, features
from mcecontrol.errors import Infeasible
from mcecontrol.numerics import integrate2d
from mcecontrol.ranks import INDEPENDENCE

from oracles import fgm_feature_targets, fgm_moment

GL64 = gauss_legendre(64)


@pytest.fixture(scope="module")
def fgm_fit():
    t = ConstraintTargets.from_vector(5, fgm_feature_targets(0.6))
    return fit_copula(t, GL64)


@pytest.fixture(scope="module")
def g5_shrunk():
    return fit_copula(build_targets(group_measures(5)), GL64, on_infeasible="shrink")


def test_independence_targets():
    t = build_targets(INDEPENDENCE)
    assert t.uv_target == pytest.approx(0.25, abs=1e-15)
    assert t.u2v_sym_target == pytest.approx(1 / 3, abs=1e-15)
    assert t.u2v2_target == pytest.approx(1 / 9, abs=1e-15)
    assert t.symmetric_moments == pytest.approx([1 / 2, 1 / 3, 1 / 4, 1 / 5, 1 / 6])


def test_example1_targets():
    t = build_targets(DependenceMeasures(0.5636842, 0.2685579, 0.2972395, 0.7218584))
    assert t.uv_target == pytest.approx((0.5636842 + 3) / 12, abs=1e-15)
    assert t.u2v_sym_target == pytest.approx((4 * 0.5636842 - 0.2685579 - 0.2972395 + 4) / 12, abs=1e-15)
    assert t.u2v2_target == pytest.approx((0.7218584 + 0.2) / 6, abs=1e-15)


def test_group5_targets():
    t = build_targets(group_measures(5))
    assert t.uv_target == pytest.approx(0.2833333333333, abs=1e-12)
    assert t.u2v2_target == pytest.approx(1 / 6, abs=1e-15)


def test_target_dependence_round_trip():
    d = DependenceMeasures(0.3, 0.2, 0.1, 0.6)
    rho, nu_sum, eta = build_targets(d).dependence()
    assert (rho, nu_sum, eta) == pytest.approx((0.3, 0.3, 0.6), abs=1e-14)


def test_fgm_oracle_is_consistent():
    # closed-form FGM moments agree with quadrature of the FGM density
    for a, b in [(1, 1), (2, 1), (2, 2), (5, 0)]:
        q = integrate2d(lambda u, v: u ** a * v ** b * (1 + 0.6 * (1 - 2 * u) * (1 - 2 * v)), GL64)
        assert q == pytest.approx(fgm_moment(0.6, a, b), abs=1e-14)


def test_independence_fit():
    c = fit_copula(build_targets(INDEPENDENCE), GL64)
    assert np.max(np.abs(c.lam[1:])) <= 1e-8
    assert c.lambda0 == pytest.approx(-1, abs=1e-8)
    assert copula_pdf(c, 0.3, 0.7) == pytest.approx(1, abs=1e-8)
    np.testing.assert_allclose(copula_pdf(c, np.linspace(0, 1, 7), 0.2), 1, atol=1e-8)


def test_independence_copula_helper():
    c = independence_copula()
    assert copula_pdf(c, 0.1, 0.9) == 1.0
    np.testing.assert_allclose(copula_moments(c, GL64).vector(), build_targets(INDEPENDENCE).vector(), atol=1e-14)


def test_fgm_fit_matches_closed_form(fgm_fit):
    err = np.abs(copula_moments(fgm_fit, GL64).vector() - fgm_feature_targets(0.6))
    assert err.max() < 1e-6
    assert fgm_fit.residual_norm < 1e-8


def test_fit_is_a_copula(fgm_fit):
    rule = gauss_legendre(96)
    u, v, w = rule.tensor()
    c = copula_pdf(fgm_fit, u, v)
    assert (w * c).sum() == pytest.approx(1, abs=1e-9)
    # uniform margins up to the truncation at r moments
    grid = rule.nodes
    margin = c.reshape(96, 96) @ rule.weights
    for i in range(1, 6):
        assert (rule.weights * margin) @ grid ** i == pytest.approx(1 / (i + 1), abs=1e-8)


def test_fit_symmetric(fgm_fit):
    u = np.random.default_rng(0).random((2, 100))
    np.testing.assert_allclose(copula_pdf(fgm_fit, u[0], u[1]), copula_pdf(fgm_fit, u[1], u[0]), rtol=1e-13)


def test_dual_decreases(fgm_fit):
    h = np.array(fgm_fit.dual_history)
    assert h.size >= 2
    assert np.all(np.diff(h) <= 1e-12 * (1 + np.abs(h[:-1])))


def test_fit_independent_of_swap():
    d = DependenceMeasures(0.3, 0.25, 0.35, 0.6)
    a = fit_copula(build_targets(d), GL64)
    b = fit_copula(build_targets(d.swapped()), GL64)
    np.testing.assert_allclose(a.lam, b.lam, atol=1e-9)


def test_positive_dependence_sign():
    c = fit_copula(build_targets(DependenceMeasures.symmetric(0.3, 0.3, 0.6)), GL64)
    assert copula_pdf(c, 0.9, 0.9) > copula_pdf(c, 0.9, 0.1)
    assert copula_pdf(c, 0.1, 0.1) > copula_pdf(c, 0.1, 0.9)


def test_shrunk_group5_concordant_corner(g5_shrunk):
    assert 0 < g5_shrunk.shrink < 1
    assert copula_pdf(g5_shrunk, 0.9, 0.9) > copula_pdf(g5_shrunk, 0.9, 0.1)
    ach = copula_moments(g5_shrunk, GL64)
    rho, _, _ = ach.dependence()
    assert 0 < rho < 0.4


def test_feasibility_margin_signs():
    assert feasibility_margin(build_targets(INDEPENDENCE), GL64) == pytest.approx(1, abs=1e-9)
    assert feasibility_margin(ConstraintTargets.from_vector(5, fgm_feature_targets(0.6)), GL64) > 0.1
    # eta = 1 with rho = 0 cannot be attained
    assert feasibility_margin(build_targets(DependenceMeasures.symmetric(0, 0, 1)), GL64) < 0


@pytest.mark.parametrize("group", [1, 2, 3, 4, 5])
def test_table_groups_are_not_attainable(group):
    with pytest.raises(Infeasible) as info:
        fit_copula(build_targets(group_measures(group)), GL64)
    assert info.value.margin <= 1e-9
    assert info.value.code == "Infeasible"


def test_shrink_reaches_margin():
    t = build_targets(group_measures(3))
    ts, s = shrink_to_feasible(t, GL64)
    assert 0.9 < s < 1
    assert feasibility_margin(ts, GL64) >= 0.05


def test_shrink_is_identity_on_feasible_targets():
    t = ConstraintTargets.from_vector(5, fgm_feature_targets(0.6))
    ts, s = shrink_to_feasible(t, GL64)
    assert s == 1.0 and ts == t


def test_round_trip_dict(fgm_fit):
    d = fgm_fit.to_dict()
    back = CopulaDensity.from_dict(d)
    np.testing.assert_array_equal(back.lam, fgm_fit.lam)
    np.testing.assert_allclose(back.achieved_moments.vector(), fgm_fit.achieved_moments.vector(), atol=1e-12)


def test_features_shape():
    g = features([0.5, 0.2], [0.5, 0.4], 3)
    assert g.shape == (2, 6)
    assert g[1].tolist() == pytest.approx([0.6, 0.2, 0.072, 0.08, 0.048, 0.0064], abs=1e-15)


def test_invalid_targets():
    with pytest.raises(ValueError):
        ConstraintTargets(0, (), 0.25, 1 / 3, 1 / 9)
    with pytest.raises(ValueError):
        fit_copula(build_targets(INDEPENDENCE), GL64, on_infeasible="ignore")
