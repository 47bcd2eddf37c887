"""Statistics battery for the outcome analyses.

Provides ordinary least squares with t-based inference, a random-intercept
linear mixed model fit by restricted maximum likelihood, intraclass
correlation from its variance components, a one-way repeated-measures
ANOVA over repetitions, and Bonferroni-corrected paired t comparisons.

Tail probabilities come from an in-module regularized incomplete beta
function (modified Lentz continued fraction) so that p-values have no
dependency beyond the standard library math; the implementation is
verified against an independent reference in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import ConditionDataset
from .errors import DataError, NumericalError

_BETA_TOL = 1e-12
_BETA_MAX_ITER = 500


def _betainc_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta at x < (a+1)/(a+b+2)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_TOL:
            return h
    raise NumericalError(
        f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})"
    )


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise NumericalError(f"betainc requires positive shape parameters, got a={a}, b={b}")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betainc_cf(a, b, x) / a
    return 1.0 - front * _betainc_cf(b, a, 1.0 - x) / b


def student_t_sf(t: float, df: float) -> float:
    """Upper-tail probability P(T > t) for Student's t."""
    if df <= 0:
        raise NumericalError(f"t distribution needs df > 0, got {df}")
    x = df / (df + t * t)
    p = 0.5 * betainc(df / 2.0, 0.5, x)
    return p if t >= 0 else 1.0 - p


def student_t_two_sided(t: float, df: float) -> float:
    return 2.0 * student_t_sf(abs(t), df)


def f_sf(f: float, df1: float, df2: float) -> float:
    """Upper-tail probability P(F > f) for the F distribution."""
    if df1 <= 0 or df2 <= 0:
        raise NumericalError(f"F distribution needs positive df, got ({df1}, {df2})")
    if f <= 0:
        return 1.0
    return betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))


def normal_sf(z: float) -> float:
    """Upper-tail probability for the standard normal."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


@dataclass(frozen=True)
class RegressionResult:
    names: tuple[str, ...]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    t_values: np.ndarray
    p_values: np.ndarray
    df_residual: int
    sigma2: float
    r_squared: float

    def coefficient(self, name: str) -> tuple[float, float, float]:
        """(estimate, standard error, p-value) for one term."""
        i = self.names.index(name)
        return (
            float(self.coefficients[i]),
            float(self.standard_errors[i]),
            float(self.p_values[i]),
        )


def linear_regression(X: np.ndarray, y: np.ndarray, names=None) -> RegressionResult:
    """Ordinary least squares with t-based coefficient inference.

    ``X`` must already include an intercept column if one is wanted.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n <= p:
        raise DataError(f"need more observations ({n}) than parameters ({p})")
    names = tuple(names) if names else tuple(f"x{i}" for i in range(p))
    if len(names) != p:
        raise DataError(f"{len(names)} names for {p} columns")
    xtx = X.T @ X
    if np.linalg.cond(xtx) > 1e12:
        raise NumericalError("design matrix is rank deficient")
    xtx_inv = np.linalg.inv(xtx)
    beta = xtx_inv @ X.T @ y
    resid = y - X @ beta
    df = n - p
    sigma2 = float(resid @ resid / df)
    se = np.sqrt(sigma2 * np.diag(xtx_inv))
    t = np.divide(beta, se, out=np.zeros_like(beta), where=se > 0)
    pvals = np.array([student_t_two_sided(float(ti), df) for ti in t])
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 0.0
    return RegressionResult(
        names=names,
        coefficients=beta,
        standard_errors=se,
        t_values=t,
        p_values=pvals,
        df_residual=df,
        sigma2=sigma2,
        r_squared=r2,
    )


@dataclass(frozen=True)
class MixedModelResult:
    names: tuple[str, ...]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    z_values: np.ndarray
    p_values: np.ndarray
    subject_variance: float
    residual_variance: float
    reml_criterion: float
    boundary_fit: bool  # True when the subject variance hit zero

    def coefficient(self, name: str) -> tuple[float, float, float]:
        i = self.names.index(name)
        return (
            float(self.coefficients[i]),
            float(self.standard_errors[i]),
            float(self.p_values[i]),
        )


def _reml_profile(theta: float, X, y, group_sizes, group_slices):
    """Profiled REML criterion and GLS estimates at variance ratio theta.

    theta is the ratio of subject variance to residual variance. With a
    random intercept per subject, the per-subject inverse correlation
    matrix is I - theta / (1 + theta n_j) * J, which keeps everything at
    O(n) per evaluation.
    """
    n, p = X.shape
    xtvx = np.zeros((p, p))
    xtvy = np.zeros(p)
    ytvy = 0.0
    log_det_v = 0.0
    for size, sl in zip(group_sizes, group_slices):
        shrink = theta / (1.0 + theta * size)
        Xj, yj = X[sl], y[sl]
        sx, sy = Xj.sum(0), yj.sum()
        xtvx += Xj.T @ Xj - shrink * np.outer(sx, sx)
        xtvy += Xj.T @ yj - shrink * sx * sy
        ytvy += yj @ yj - shrink * sy * sy
        log_det_v += math.log1p(theta * size)
    xtvx_inv = np.linalg.inv(xtvx)
    beta = xtvx_inv @ xtvy
    rss = ytvy - beta @ xtvy  # generalized residual sum of squares
    if rss <= 0:
        raise NumericalError("non-positive generalized residual sum of squares")
    sigma2 = rss / (n - p)
    sign, log_det_xtvx = np.linalg.slogdet(xtvx)
    if sign <= 0:
        raise NumericalError("indefinite normal equations in mixed-model profile")
    criterion = log_det_v + log_det_xtvx + (n - p) * math.log(sigma2)
    return criterion, beta, sigma2, xtvx_inv


def fit_random_intercept_lmm(
    X: np.ndarray,
    y: np.ndarray,
    groups: np.ndarray,
    names=None,
    theta_max: float = 1e4,
    tol: float = 1e-8,
) -> MixedModelResult:
    """Random-intercept mixed model fit by restricted maximum likelihood.

    The variance ratio is profiled out and optimized by golden-section
    search; fixed effects are the GLS estimates at the optimum, with Wald
    z inference.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    groups = np.asarray(groups)
    n, p = X.shape
    if len(y) != n or len(groups) != n:
        raise DataError("X, y, and groups must have matching lengths")
    if n <= p:
        raise DataError(f"need more observations ({n}) than parameters ({p})")
    names = tuple(names) if names else tuple(f"x{i}" for i in range(p))

    order = np.argsort(groups, kind="stable")
    X, y, groups = X[order], y[order], groups[order]
    labels, counts = np.unique(groups, return_counts=True)
    if len(labels) < 2:
        raise DataError("mixed model needs at least two subjects")
    edges = np.concatenate([[0], np.cumsum(counts)])
    slices = [slice(edges[i], edges[i + 1]) for i in range(len(labels))]
    sizes = counts.tolist()

    def objective(theta):
        return _reml_profile(theta, X, y, sizes, slices)[0]

    # golden-section search on log-ish bracket [0, theta_max]
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    lo, hi = 0.0, theta_max
    c = hi - inv_phi * (hi - lo)
    d = lo + inv_phi * (hi - lo)
    fc, fd = objective(c), objective(d)
    while hi - lo > tol * max(1.0, hi):
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - inv_phi * (hi - lo)
            fc = objective(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + inv_phi * (hi - lo)
            fd = objective(d)
    theta = (lo + hi) / 2.0
    if objective(0.0) <= objective(theta):
        theta = 0.0
    criterion, beta, sigma2, xtvx_inv = _reml_profile(theta, X, y, sizes, slices)

    se = np.sqrt(sigma2 * np.diag(xtvx_inv))
    z = np.divide(beta, se, out=np.zeros_like(beta), where=se > 0)
    pvals = np.array([2.0 * normal_sf(abs(float(zi))) for zi in z])
    return MixedModelResult(
        names=names,
        coefficients=beta,
        standard_errors=se,
        z_values=z,
        p_values=pvals,
        subject_variance=theta * sigma2,
        residual_variance=sigma2,
        reml_criterion=criterion,
        boundary_fit=theta == 0.0,
    )


def icc_from_variances(subject_variance: float, residual_variance: float) -> float:
    """Intraclass correlation: subject variance over total variance."""
    total = subject_variance + residual_variance
    if subject_variance < 0 or residual_variance < 0:
        raise DataError("variance components must be non-negative")
    if total <= 0:
        raise DataError("zero total variance")
    return subject_variance / total


@dataclass(frozen=True)
class AnovaResult:
    f_value: float
    df_effect: int
    df_error: int
    p_value: float
    ss_effect: float
    ss_error: float
    ss_subject: float


def rm_anova(table: np.ndarray) -> AnovaResult:
    """One-way repeated-measures ANOVA on a subjects x conditions table."""
    table = np.asarray(table, dtype=float)
    if table.ndim != 2 or table.shape[0] < 2 or table.shape[1] < 2:
        raise DataError(f"need a 2-D subjects x conditions table, got shape {table.shape}")
    if np.isnan(table).any():
        raise DataError("repeated-measures table contains missing values")
    n_sub, n_cond = table.shape
    grand = table.mean()
    ss_subject = n_cond * ((table.mean(1) - grand) ** 2).sum()
    ss_effect = n_sub * ((table.mean(0) - grand) ** 2).sum()
    ss_total = ((table - grand) ** 2).sum()
    ss_error = ss_total - ss_subject - ss_effect
    df_effect = n_cond - 1
    df_error = (n_sub - 1) * (n_cond - 1)
    ms_effect = ss_effect / df_effect
    ms_error = ss_error / df_error
    if ms_error <= 0:
        raise NumericalError("zero error mean square in repeated-measures ANOVA")
    f = ms_effect / ms_error
    return AnovaResult(
        f_value=float(f),
        df_effect=df_effect,
        df_error=df_error,
        p_value=f_sf(float(f), df_effect, df_error),
        ss_effect=float(ss_effect),
        ss_error=float(ss_error),
        ss_subject=float(ss_subject),
    )


@dataclass(frozen=True)
class PairedComparison:
    label_a: str
    label_b: str
    mean_difference: float
    t_value: float
    df: int
    p_value: float  # uncorrected
    p_adjusted: float  # Bonferroni


def paired_t(a: np.ndarray, b: np.ndarray) -> tuple[float, float, int]:
    """(mean difference, t, df) for paired samples; t is 0 for identical pairs."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise DataError("paired t needs two equal-length vectors of length >= 2")
    d = a - b
    df = len(d) - 1
    sd = d.std(ddof=1)
    if sd == 0:
        return float(d.mean()), 0.0 if d.mean() == 0 else math.inf, df
    t = d.mean() / (sd / math.sqrt(len(d)))
    return float(d.mean()), float(t), df


def bonferroni_pairwise(samples: dict[str, np.ndarray]) -> list[PairedComparison]:
    """All pairwise paired t comparisons with Bonferroni-adjusted p-values."""
    labels = sorted(samples)
    if len(labels) < 2:
        raise DataError("pairwise comparison needs at least two conditions")
    m = len(labels) * (len(labels) - 1) // 2
    out = []
    for i, la in enumerate(labels):
        for lb in labels[i + 1 :]:
            diff, t, df = paired_t(samples[la], samples[lb])
            if math.isinf(t):
                p = 0.0
            else:
                p = student_t_two_sided(t, df)
            out.append(
                PairedComparison(
                    label_a=la,
                    label_b=lb,
                    mean_difference=diff,
                    t_value=t,
                    df=df,
                    p_value=p,
                    p_adjusted=min(1.0, p * m),
                )
            )
    return out


def outcome_mixed_model(data: ConditionDataset) -> MixedModelResult:
    """Mixed model of the outcome on magnitude, duration, and their product.

    Uses per-subject condition means over the trapezoid grid with a random
    intercept per subject.
    """
    rows = [r for r in data.subject_condition_means() if r[1] == "trapezoid"]
    if not rows:
        raise DataError("no trapezoid-grid conditions in dataset")
    subjects = np.array([r[0] for r in rows])
    mags = np.array([r[2] for r in rows])
    durs = np.array([r[3] for r in rows])
    y = np.array([r[4] for r in rows])
    X = np.column_stack([np.ones_like(mags), mags, durs, mags * durs])
    return fit_random_intercept_lmm(
        X, y, subjects, names=("intercept", "magnitude", "duration", "magnitude_x_duration")
    )


def repetition_anova(data: ConditionDataset) -> AnovaResult:
    """Repeated-measures ANOVA across repetitions of the grid mean outcome."""
    _, table = data.repetition_table()
    return rm_anova(table)
