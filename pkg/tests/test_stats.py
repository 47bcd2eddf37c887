import math

import numpy as np
import pytest
import scipy.special
import scipy.stats
from hypothesis import given, strategies as st

from slipstab.errors import DataError, NumericalError
from slipstab.stats import (
    betainc,
    bonferroni_pairwise,
    f_sf,
    fit_random_intercept_lmm,
    icc_from_variances,
    linear_regression,
    normal_sf,
    paired_t,
    rm_anova,
    student_t_sf,
    student_t_two_sided,
)


def test_betainc_matches_reference_to_1e10():
    rng = np.random.default_rng(0)
    for _ in range(500):
        a = float(rng.uniform(0.1, 50.0))
        b = float(rng.uniform(0.1, 50.0))
        x = float(rng.uniform(0.0, 1.0))
        assert abs(betainc(a, b, x) - scipy.special.betainc(a, b, x)) < 1e-10


def test_betainc_boundaries_and_validation():
    assert betainc(2.0, 3.0, 0.0) == 0.0
    assert betainc(2.0, 3.0, 1.0) == 1.0
    with pytest.raises(NumericalError):
        betainc(-1.0, 2.0, 0.5)


@given(st.floats(min_value=0.01, max_value=0.99), st.floats(min_value=0.02, max_value=0.98))
def test_betainc_monotone_in_x(x1, x2):
    lo, hi = sorted((x1, x2))
    assert betainc(2.5, 3.5, lo) <= betainc(2.5, 3.5, hi) + 1e-15


def test_t_and_f_tails_match_reference():
    rng = np.random.default_rng(1)
    for _ in range(200):
        t = float(rng.uniform(-6.0, 6.0))
        df = float(rng.uniform(1.0, 60.0))
        assert abs(student_t_sf(t, df) - scipy.stats.t.sf(t, df)) < 1e-10
        f = float(rng.uniform(0.0, 15.0))
        d1 = float(rng.uniform(1.0, 20.0))
        d2 = float(rng.uniform(1.0, 40.0))
        assert abs(f_sf(f, d1, d2) - scipy.stats.f.sf(f, d1, d2)) < 1e-10
    z = 1.959963984540054
    assert abs(normal_sf(z) - 0.025) < 1e-12


def test_linear_regression_matches_reference():
    rng = np.random.default_rng(2)
    X = np.column_stack([np.ones(40), rng.normal(size=40)])
    y = X @ np.array([1.0, 2.5]) + rng.normal(0, 0.5, 40)
    fit = linear_regression(X, y, names=("intercept", "slope"))
    ref = scipy.stats.linregress(X[:, 1], y)
    est, se, p = fit.coefficient("slope")
    assert est == pytest.approx(ref.slope, rel=1e-12)
    assert se == pytest.approx(ref.stderr, rel=1e-9)
    assert p == pytest.approx(ref.pvalue, rel=1e-9)
    assert fit.df_residual == 38


def test_linear_regression_validation():
    with pytest.raises(DataError):
        linear_regression(np.ones((2, 3)), np.zeros(2))
    X = np.ones((10, 2))  # duplicate columns: rank deficient
    with pytest.raises(NumericalError):
        linear_regression(X, np.arange(10.0))


def test_lmm_boundary_fit_without_group_effect():
    rng = np.random.default_rng(3)
    n = 120
    groups = np.repeat(np.arange(6), 20)
    X = np.column_stack([np.ones(n), rng.normal(size=n)])
    y = X @ np.array([1.0, 0.5]) + rng.normal(size=n)  # no subject effect
    # remove even the sampling-noise group means so the between-subject
    # variance estimate sits exactly on the zero boundary
    for g in np.unique(groups):
        y[groups == g] -= (y - X @ np.array([1.0, 0.5]))[groups == g].mean()
    fit = fit_random_intercept_lmm(X, y, groups)
    assert fit.boundary_fit
    assert fit.subject_variance == 0.0


def test_lmm_recovers_fixed_effects_and_components():
    rng = np.random.default_rng(4)
    n_sub, per = 30, 40
    groups = np.repeat(np.arange(n_sub), per)
    X = np.column_stack([np.ones(n_sub * per), rng.normal(size=n_sub * per)])
    beta = np.array([3.0, -2.0])
    y = X @ beta + np.repeat(rng.normal(0, 2.0, n_sub), per) + rng.normal(
        0, 1.0, n_sub * per
    )
    fit = fit_random_intercept_lmm(X, y, groups, names=("intercept", "x"))
    assert np.allclose(fit.coefficients, beta, atol=0.5)
    assert fit.subject_variance == pytest.approx(4.0, rel=0.5)
    assert fit.residual_variance == pytest.approx(1.0, rel=0.1)
    assert not fit.boundary_fit
    est, se, p = fit.coefficient("x")
    assert p < 1e-6


def test_lmm_validation():
    with pytest.raises(DataError):
        fit_random_intercept_lmm(np.ones((4, 1)), np.zeros(4), np.zeros(4))
    with pytest.raises(DataError):
        fit_random_intercept_lmm(np.ones((4, 1)), np.zeros(3), np.zeros(4))


def test_icc_values_and_validation():
    assert icc_from_variances(1237.7, 350.1) == pytest.approx(0.7795, abs=1e-4)
    assert icc_from_variances(0.0, 1.0) == 0.0
    with pytest.raises(DataError):
        icc_from_variances(-1.0, 1.0)
    with pytest.raises(DataError):
        icc_from_variances(0.0, 0.0)


def test_rm_anova_matches_reference_f():
    rng = np.random.default_rng(5)
    table = rng.normal(10, 3, size=(8, 4))
    res = rm_anova(table)
    # reference: one-way repeated measures via two-way ANOVA decomposition
    n_sub, n_cond = table.shape
    grand = table.mean()
    ss_cond = n_sub * ((table.mean(0) - grand) ** 2).sum()
    ss_sub = n_cond * ((table.mean(1) - grand) ** 2).sum()
    ss_err = ((table - grand) ** 2).sum() - ss_cond - ss_sub
    f_ref = (ss_cond / 3) / (ss_err / 21)
    assert res.f_value == pytest.approx(f_ref, rel=1e-12)
    assert res.p_value == pytest.approx(scipy.stats.f.sf(f_ref, 3, 21), abs=1e-10)
    with pytest.raises(DataError):
        rm_anova(np.ones((1, 4)))


def test_paired_t_matches_reference():
    rng = np.random.default_rng(6)
    a = rng.normal(10, 2, 12)
    b = a + rng.normal(1, 1, 12)
    diff, t, df = paired_t(a, b)
    ref = scipy.stats.ttest_rel(a, b)
    assert t == pytest.approx(ref.statistic, rel=1e-12)
    assert student_t_two_sided(t, df) == pytest.approx(ref.pvalue, rel=1e-9)
    assert df == 11


def test_paired_t_identical_samples():
    a = np.array([1.0, 2.0, 3.0])
    diff, t, df = paired_t(a, a.copy())
    assert diff == 0.0 and t == 0.0
    assert student_t_two_sided(t, df) == 1.0


def test_paired_t_constant_nonzero_difference():
    a = np.array([1.0, 2.0, 3.0])
    diff, t, df = paired_t(a + 2.0, a)
    assert diff == 2.0 and math.isinf(t)


def test_bonferroni_adjustment_and_count():
    rng = np.random.default_rng(7)
    samples = {
        "a": rng.normal(0, 1, 10),
        "b": rng.normal(3, 1, 10),
        "c": rng.normal(0.1, 1, 10),
    }
    out = bonferroni_pairwise(samples)
    assert len(out) == 3
    for comp in out:
        assert comp.p_adjusted == pytest.approx(min(1.0, comp.p_value * 3))
    ab = next(c for c in out if (c.label_a, c.label_b) == ("a", "b"))
    assert ab.p_adjusted < 0.05
