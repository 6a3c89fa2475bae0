from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import stats as sps

from misinfosim.errors import ParameterError, SingularDesignError, StateError
from misinfosim.stats import (SURFACE_TERMS, QuadraticSurface, anova_factor_covariate,
                              anova_oneway, anova_power, anova_power_required_n,
                              anova_sequential, cohens_f_from_eta2, eta_squared,
                              f_cdf, f_isf, f_sf, fit_quadratic_surface,
                              mc_anova_rejection_rate, mc_power_rejection_rate,
                              noncentral_f_cdf, ols_fit, surface_design,
                              surface_extrema_on_box, surface_stationary_point,
                              t_two_sided_p)


def _surface(beta) -> QuadraticSurface:
    return QuadraticSurface(beta=np.asarray(beta, dtype=float), fit=None)


# ---------------------------------------------------------------------------
# distribution tails vs scipy (independent second route)


@pytest.mark.parametrize("t,df", [(0.0, 5), (1.3, 3), (2.1, 14), (-2.1, 14),
                                  (4.5, 120), (0.7, 1)])
def test_t_two_sided_matches_scipy(t, df):
    assert t_two_sided_p(t, df) == pytest.approx(2 * sps.t.sf(abs(t), df), abs=1e-13)


@pytest.mark.parametrize("x,dfn,dfd", [(0.5, 2, 10), (1.0, 9, 9), (2.345, 9, 18),
                                       (7.0, 1, 4), (0.01, 20, 200)])
def test_f_cdf_and_sf_match_scipy(x, dfn, dfd):
    assert f_cdf(x, dfn, dfd) == pytest.approx(sps.f.cdf(x, dfn, dfd), abs=1e-13)
    assert f_sf(x, dfn, dfd) == pytest.approx(sps.f.sf(x, dfn, dfd), rel=1e-12)
    assert f_cdf(x, dfn, dfd) + f_sf(x, dfn, dfd) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("p,dfn,dfd", [(0.05, 9, 90), (0.01, 2, 10),
                                       (0.5, 14, 3), (0.001, 19, 280)])
def test_f_isf_inverts_the_upper_tail(p, dfn, dfd):
    x = f_isf(p, dfn, dfd)
    assert x == pytest.approx(sps.f.isf(p, dfn, dfd), rel=1e-9)
    assert f_sf(x, dfn, dfd) == pytest.approx(p, rel=1e-9)


def test_f_at_nonpositive_x():
    assert f_cdf(0.0, 3, 7) == 0.0
    assert f_sf(-1.0, 3, 7) == 1.0


@pytest.mark.parametrize("nc", [0.0, 1e-6, 0.5, 5.0, 57.0, 812.0, 57121.0])
def test_noncentral_f_cdf_matches_scipy(nc):
    for x in (0.2, 1.0, 3.7, 25.0):
        got = noncentral_f_cdf(x, 9, 126, nc)
        want = sps.ncf.cdf(x, 9, 126, nc) if nc > 0 else sps.f.cdf(x, 9, 126)
        assert got == pytest.approx(want, abs=2e-11)


def test_noncentral_zero_lambda_equals_central():
    for x in (0.1, 0.9, 1.7, 4.2):
        for dfn, dfd in ((3, 12), (9, 126), (19, 3.4)):
            assert abs(noncentral_f_cdf(x, dfn, dfd, 0.0)
                       - f_cdf(x, dfn, dfd)) < 1e-10


def test_noncentral_f_cdf_is_monotone_and_bounded():
    xs = np.linspace(0.0, 40.0, 81)
    vals = noncentral_f_cdf(xs, 4, 19, 13.0)
    assert (np.diff(vals) >= -1e-13).all()
    assert vals[0] == 0.0 and vals[-1] <= 1.0


def test_distribution_argument_validation():
    with pytest.raises(ParameterError):
        f_cdf(1.0, 0, 5)
    with pytest.raises(ParameterError):
        f_isf(1.5, 3, 5)
    with pytest.raises(ParameterError):
        noncentral_f_cdf(1.0, 3, 5, -1.0)
    with pytest.raises(ParameterError):
        t_two_sided_p(1.0, 0)


# ---------------------------------------------------------------------------
# ordinary least squares


def test_ols_recovers_noiseless_coefficients_exactly():
    rng = np.random.default_rng(2)
    X = np.column_stack([np.ones(40), rng.normal(size=(40, 4))])
    beta = np.array([3.0, -1.5, 0.25, 8.0, 1e-3])
    fit = ols_fit(X, X @ beta)
    assert np.max(np.abs(fit.coef - beta) / np.abs(beta)) < 1e-9
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_ols_matches_closed_form_normal_equations():
    # independent route: pinv-based coefficients and covariance
    rng = np.random.default_rng(3)
    X = np.column_stack([np.ones(60), rng.normal(size=(60, 3))])
    y = X @ np.array([1.0, 2.0, -3.0, 0.5]) + rng.normal(size=60)
    fit = ols_fit(X, y)
    xtx_inv = np.linalg.inv(X.T @ X)
    coef = xtx_inv @ X.T @ y
    resid = y - X @ coef
    sigma2 = resid @ resid / (60 - 4)
    assert fit.coef == pytest.approx(coef, rel=1e-10)
    assert fit.sigma2 == pytest.approx(sigma2, rel=1e-10)
    assert fit.se == pytest.approx(np.sqrt(np.diag(sigma2 * xtx_inv)), rel=1e-10)
    assert fit.pvalues == pytest.approx(
        [2 * sps.t.sf(abs(t), 56) for t in fit.tvalues], abs=1e-12)


def test_ols_r_squared_conventions():
    rng = np.random.default_rng(4)
    x = rng.normal(size=50)
    y = 2.0 + 3.0 * x + rng.normal(size=50)
    X = np.column_stack([np.ones(50), x])
    fit = ols_fit(X, y)
    sst = ((y - y.mean()) ** 2).sum()
    assert fit.r_squared == pytest.approx(1 - fit.ssr / sst, rel=1e-12)
    assert 0.8 < fit.r_squared < 1.0


def test_ols_singular_design_names_the_column():
    rng = np.random.default_rng(5)
    x = rng.normal(size=30)
    X = np.column_stack([np.ones(30), x, 2 * x])
    with pytest.raises(SingularDesignError) as err:
        ols_fit(X, rng.normal(size=30), names=("const", "speed", "speed_doubled"))
    assert "speed_doubled" in str(err.value)


def test_ols_shape_validation():
    with pytest.raises(ParameterError):
        ols_fit(np.ones((5, 6)), np.ones(5))  # more columns than rows
    with pytest.raises(ParameterError):
        ols_fit(np.ones((5, 2)), np.ones(4))
    with pytest.raises(ParameterError):
        ols_fit(np.ones((5, 2)), np.ones(5), names=("just_one",))


# ---------------------------------------------------------------------------
# ANOVA


def test_oneway_anova_matches_scipy_f_oneway():
    rng = np.random.default_rng(6)
    groups = [rng.normal(loc=m, size=12) for m in (0.0, 0.4, 1.1, 1.2)]
    y = np.concatenate(groups)
    labels = sum(([i] * 12 for i in range(4)), [])
    table = anova_oneway(y, labels)
    row = table.row("group")
    want_f, want_p = sps.f_oneway(*groups)
    assert row.f == pytest.approx(want_f, rel=1e-10)
    assert row.p == pytest.approx(want_p, rel=1e-10)
    assert row.df == 3
    assert table.residual.df == 44


def test_anova_sums_of_squares_reconcile():
    rng = np.random.default_rng(7)
    y = rng.normal(size=90)
    labels = [i % 3 for i in range(90)]
    x = rng.normal(size=90)
    table = anova_factor_covariate(y, labels, x)
    total = sum(r.ss for r in table.rows)
    assert total == pytest.approx(table.ss_total, abs=1e-8)
    assert [r.term for r in table.rows] == [
        "factor", "covariate", "factor:covariate", "Residual"]
    assert table.row("factor").df == 2
    assert table.row("covariate").df == 1
    assert table.row("factor:covariate").df == 2


def test_sequential_anova_matches_incremental_lstsq():
    # independent route: residual-SS drops from numpy lstsq fits
    rng = np.random.default_rng(8)
    n = 80
    labels = rng.integers(0, 3, size=n)
    x = rng.normal(size=n)
    y = 1.0 + 0.8 * (labels == 1) - 0.3 * (labels == 2) + 0.5 * x \
        + 0.2 * x * (labels == 1) + rng.normal(size=n)
    table = anova_factor_covariate(y, labels.tolist(), x)

    def rss(cols):
        X = np.column_stack(cols)
        beta, *_ = np.linalg.lstsq(X, y, rcond=None)
        r = y - X @ beta
        return float(r @ r)

    ones = np.ones(n)
    d1, d2 = (labels == 1).astype(float), (labels == 2).astype(float)
    designs = [
        [ones],
        [ones, d1, d2],
        [ones, d1, d2, x],
        [ones, d1, d2, x, d1 * x, d2 * x],
    ]
    drops = [rss(designs[i]) - rss(designs[i + 1]) for i in range(3)]
    assert table.row("factor").ss == pytest.approx(drops[0], rel=1e-9)
    assert table.row("covariate").ss == pytest.approx(drops[1], rel=1e-9)
    assert table.row("factor:covariate").ss == pytest.approx(drops[2], rel=1e-9)
    assert table.residual.ss == pytest.approx(rss(designs[-1]), rel=1e-9)


def test_anova_requires_enough_observations_per_level():
    with pytest.raises(ParameterError):
        anova_oneway([1.0, 2.0, 3.0], ["a", "a", "b"])
    with pytest.raises(ParameterError):
        anova_factor_covariate([1.0, 2.0, 3.0, 4.0], ["a", "a", "b", "b"],
                               [1.0, 2.0, 3.0, 3.0])  # constant within "b"


def test_eta_squared_and_cohens_f():
    assert eta_squared(25.0, 100.0) == pytest.approx(0.25)
    assert cohens_f_from_eta2(0.5) == pytest.approx(1.0)
    assert cohens_f_from_eta2(0.85) == pytest.approx(math.sqrt(0.85 / 0.15))
    with pytest.raises(ParameterError):
        eta_squared(-1.0, 10.0)
    with pytest.raises(ParameterError):
        eta_squared(11.0, 10.0)
    with pytest.raises(ParameterError):
        cohens_f_from_eta2(1.0)


def test_anova_eta_squared_accessor():
    rng = np.random.default_rng(9)
    y = np.concatenate([rng.normal(loc=m, size=10) for m in (0, 2, 4)])
    table = anova_oneway(y, [0] * 10 + [1] * 10 + [2] * 10)
    ss = table.row("group").ss
    assert table.eta_squared("group") == pytest.approx(ss / table.ss_total)


# ---------------------------------------------------------------------------
# power analysis


def test_power_increases_with_n_and_effect():
    p1 = anova_power(0.25, 4, 10)
    p2 = anova_power(0.25, 4, 40)
    p3 = anova_power(0.50, 4, 10)
    assert p1 < p2 and p1 < p3
    assert 0 < p1 < 1


def test_power_agrees_with_monte_carlo_at_integer_n():
    # distribution-route power vs data-level simulated ANOVA rejections
    f, k, n = 0.45, 4, 16
    analytic = anova_power(f, k, n)
    simulated = mc_anova_rejection_rate(f, k, n, trials=20_000, seed=11)
    assert abs(analytic - simulated) < 3 * math.sqrt(analytic * (1 - analytic) / 20_000)


def test_mc_sampling_route_matches_analytic_power():
    f, k, n = 0.9, 5, 4.75  # fractional n only the gamma route can do
    analytic = anova_power(f, k, n)
    sampled = mc_power_rejection_rate(f, k, n, trials=40_000, seed=12)
    assert abs(analytic - sampled) < 3 * math.sqrt(analytic * (1 - analytic) / 40_000)


def test_data_level_mc_is_calibrated_under_near_null():
    rate = mc_anova_rejection_rate(1e-9, 5, 10, alpha=0.05, trials=20_000, seed=13)
    assert abs(rate - 0.05) < 3 * math.sqrt(0.05 * 0.95 / 20_000)


def test_required_n_hits_the_target_power():
    sol = anova_power_required_n(0.4, 5, alpha=0.05, target_power=0.8)
    assert sol.achieved_power == pytest.approx(0.8, abs=1e-4)
    assert anova_power(0.4, 5, sol.required_n - 1e-3) < 0.8
    assert anova_power(0.4, 5, sol.required_n + 1e-3) >= 0.8


def test_required_n_for_large_effects_is_small():
    sol = anova_power_required_n(2.3805, 10)
    assert 1.0 < sol.required_n < 2.0


def test_unattainable_power_raises():
    with pytest.raises(ParameterError):
        anova_power_required_n(1e-9, 3, target_power=0.8)


def test_power_argument_validation():
    with pytest.raises(ParameterError):
        anova_power(0.5, 1, 10)
    with pytest.raises(ParameterError):
        anova_power(0.0, 3, 10)
    with pytest.raises(ParameterError):
        anova_power(0.5, 3, 1.0)
    with pytest.raises(ParameterError):
        anova_power_required_n(0.5, 3, target_power=1.2)
    with pytest.raises(ParameterError):
        mc_anova_rejection_rate(0.5, 3, 1)


# ---------------------------------------------------------------------------
# quadratic response surfaces


def test_quadratic_fit_round_trip_is_exact():
    beta = np.array([14.0, 7.5, 9.0, 1.7, -8.1, -9.3])
    b, d = np.meshgrid(np.linspace(0.1, 1.0, 10), np.linspace(0.1, 1.0, 10))
    b, d = b.ravel(), d.ravel()
    z = surface_design(b, d) @ beta
    surf = fit_quadratic_surface(b, d, z)
    assert np.max(np.abs(surf.beta - beta)) < 1e-9


def test_stationary_point_of_a_known_paraboloid():
    # z = -(b-0.3)^2 - 2(d-0.7)^2 + 5, maximum at (0.3, 0.7, 5)
    beta = np.array([5 - 0.09 - 0.98, 0.6, 2.8, 0.0, -1.0, -2.0])
    sp = surface_stationary_point(_surface(beta))
    assert (sp.b, sp.d) == pytest.approx((0.3, 0.7), abs=1e-12)
    assert sp.value == pytest.approx(5.0, abs=1e-12)
    assert sp.kind == "max"


def test_stationary_point_classification():
    assert surface_stationary_point(
        _surface([0, 0, 0, 0, 1.0, 2.0])).kind == "min"
    assert surface_stationary_point(
        _surface([0, 0, 0, 0, 1.0, -2.0])).kind == "saddle"
    assert surface_stationary_point(
        _surface([0, 0, 0, 3.0, 0.0, 0.0])).kind == "saddle"


def test_degenerate_hessian_raises():
    with pytest.raises(StateError):
        surface_stationary_point(_surface([1, 2, 3, 0, 0, 0]))  # planar
    with pytest.raises(StateError):
        surface_stationary_point(_surface([0, 1, 1, 2, 1, 1]))  # det = 0


def test_box_extrema_match_a_dense_grid():
    rng = np.random.default_rng(14)
    for _ in range(12):
        beta = rng.normal(size=6) * np.array([5, 4, 4, 3, 3, 3])
        surf = _surface(beta)
        box = surface_extrema_on_box(surf, (0.1, 1.0), (0.1, 1.0))
        gb, gd = np.meshgrid(np.linspace(0.1, 1.0, 361), np.linspace(0.1, 1.0, 361))
        vals = surf.value(gb, gd)
        assert box.min_point[2] <= vals.min() + 1e-6
        assert box.max_point[2] >= vals.max() - 1e-6
        assert box.min_point[2] == pytest.approx(vals.min(), abs=2e-4)
        assert box.max_point[2] == pytest.approx(vals.max(), abs=2e-4)


def test_box_extrema_rejects_degenerate_box():
    with pytest.raises(ParameterError):
        surface_extrema_on_box(_surface([0, 1, 1, 0, 1, 1]), (0.5, 0.5), (0.1, 1.0))


def test_surface_design_names_align():
    b = np.array([0.2, 0.4])
    d = np.array([0.6, 0.8])
    X = surface_design(b, d)
    assert X.shape == (2, 6)
    assert SURFACE_TERMS == ("const", "b", "d", "b_d", "b_sq", "d_sq")
    assert X[0] == pytest.approx([1.0, 0.2, 0.6, 0.12, 0.04, 0.36])
