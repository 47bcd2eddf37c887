"""Acceptance suite: one test per release criterion.

Each test is self-contained and checks the package against an
independently coded oracle or a planted ground truth, with tolerances and
runtime budgets stated inline.
"""

import math
import time

import numpy as np
import pytest

from slipstab.bodymodel import SegmentInertia, SegmentInertialSet, SubjectAnthropometry
from slipstab.controller import TrapezoidProfile, trapezoid_torque
from slipstab.dataset import ConditionDataset
from slipstab.pipeline import RunConfig, run_pipeline, states_from_trial, process_trial
from slipstab.stats import (
    fit_random_intercept_lmm,
    icc_from_variances,
    linear_regression,
    rm_anova,
)
from slipstab.surface import bootstrap_optimum, find_optimum, fit_rbf
from slipstab.synth import (
    Perturbation,
    PlantedSurfaceSpec,
    WalkerScenario,
    analytic_wbam_oracle,
    early_stance_onset,
    generate_trial,
    interaction_surface_spec,
    plant_response_surface,
    rotating_rod_trial,
)
from slipstab.wbam import compute_wbam_series


def test_criterion_01_trapezoid_closed_form_and_integral():
    """Torque profile matches an independent closed form at 1e6 random
    points to 1e-12 and integrates to 0.8 * t_max * duration to 1e-9
    relative, in under 5 s."""
    start = time.perf_counter()
    rng = np.random.default_rng(12345)
    n = 1_000_000
    t_max = rng.uniform(0.5, 30.0, n)
    dur = rng.uniform(0.05, 2.0, n)
    t = rng.uniform(-1.0, 3.0, n) * dur

    # each point has its own profile; the torque is linear in t_max and
    # scales with duration, so the bulk evaluation goes through a unit
    # profile at normalized time, with per-point profiles spot-checked below
    unit = TrapezoidProfile(t_max=1.0, duration=1.0)
    got = t_max * trapezoid_torque(t / dur, unit)

    x = t / dur
    expected = t_max * np.select(
        [x < 0, x <= 0.2, x < 0.8, x <= 1.0],
        [0.0, x / 0.2, 1.0, (1.0 - (x - 0.8) / 0.2)],
        default=0.0,
    )
    assert np.abs(got - expected).max() < 1e-12

    # scale invariance of the evaluation used above, spot-checked directly
    check = rng.integers(0, n, 2000)
    direct = np.array(
        [trapezoid_torque(t[i], TrapezoidProfile(t_max=t_max[i], duration=dur[i]))
         for i in check]
    )
    assert np.abs(direct - expected[check]).max() < 1e-12

    # exact quadrature: the profile is piecewise linear, so the trapezoid
    # rule over a grid containing the breakpoints integrates it exactly
    profile = TrapezoidProfile(t_max=17.3, duration=0.87)
    d = profile.duration
    grid = np.unique(np.concatenate(
        [np.linspace(0, d, 2001), [0.2 * d, 0.8 * d]]
    ))
    integral = np.trapezoid(trapezoid_torque(grid, profile), grid)
    target = 0.8 * profile.t_max * d
    assert abs(integral - target) / target < 1e-9
    assert time.perf_counter() - start < 5.0


def _walker_error(rate: float) -> float:
    scenario = WalkerScenario(
        rate=rate, perturbation=Perturbation(onset=6.0), amplitude_scale=1.0
    )
    trial = generate_trial(scenario)
    states = states_from_trial(trial, cutoff=None)
    wbam = compute_wbam_series(states, scenario.inertials(), scenario.anthro)
    oracle = analytic_wbam_oracle(scenario, wbam.times)
    interior = slice(5, -5)
    err = wbam.samples[interior] - oracle[interior]
    return float(np.sqrt(np.mean(err**2)) / np.sqrt(np.mean(oracle[interior] ** 2)))


def _rod_error(rate: float) -> float:
    trial, inertials, anthro, expected = rotating_rod_trial(rate=rate)
    states = states_from_trial(trial, cutoff=None)
    wbam = compute_wbam_series(states, inertials, anthro)
    interior = slice(5, -5)
    return float(np.abs(wbam.samples[interior] - expected).max() / abs(expected))


def test_criterion_02_wbam_matches_analytic_oracle_with_convergence():
    """Differentiation-pipeline momentum matches analytic oracles within
    1e-3 relative at 100 Hz and converges with order >= 1.8 at 200 Hz, in
    under 30 s."""
    start = time.perf_counter()
    rod_100, rod_200 = _rod_error(100.0), _rod_error(200.0)
    walk_100, walk_200 = _walker_error(100.0), _walker_error(200.0)
    assert rod_100 < 1e-3
    assert walk_100 < 1e-3
    assert math.log2(rod_100 / rod_200) >= 1.8
    assert math.log2(walk_100 / walk_200) >= 1.8
    assert time.perf_counter() - start < 30.0


def test_criterion_03_steady_state_and_mass_scaling():
    """Unperturbed walking changes the range metric by < 2 percent, and
    the normalized momentum is invariant under global mass scaling to
    1e-12."""
    scenario = WalkerScenario(
        perturbation=Perturbation(onset=6.0, response_amplitude=0.0)
    )
    trial = generate_trial(scenario)
    outcome = process_trial(trial, scenario.anthro)
    assert outcome.value is not None and abs(outcome.value) < 2.0

    t = np.arange(0, 1500) / 100.0
    from slipstab.synth import exact_states

    states = exact_states(
        WalkerScenario(perturbation=Perturbation(onset=6.0)), t
    )
    base_scenario = WalkerScenario(perturbation=Perturbation(onset=6.0))
    inert = base_scenario.inertials()
    anthro = base_scenario.anthro
    w1 = compute_wbam_series(states, inert, anthro)
    lam = 10.0
    scaled_inert = SegmentInertialSet(
        {
            seg: SegmentInertia(
                mass=si.mass * lam,
                moment_sagittal=si.moment_sagittal * lam,
                added_mass=si.added_mass * lam,
            )
            for seg, si in inert.segments.items()
        }
    )
    scaled_anthro = SubjectAnthropometry(
        body_mass=anthro.body_mass * lam,
        height=anthro.height,
        walking_speed=anthro.walking_speed,
    )
    w2 = compute_wbam_series(states, scaled_inert, scaled_anthro)
    scale = np.abs(w1.samples).max()
    assert np.abs(w1.samples - w2.samples).max() / scale < 1e-12


def test_criterion_04_noiseless_surface_recovery():
    """On a noiseless planted quadratic with minimum at (15.9 %, 3.64 x),
    the interpolating surface recovers the location within (0.5 %, 0.05)."""
    spec = PlantedSurfaceSpec(noise_sd=0.0, subject_offset_sd=0.0)
    data = plant_response_surface(spec, seed=0)
    surface = fit_rbf(data, smoothing=0.0)
    opt = find_optimum(surface, mode="min")
    assert abs(opt.point[0] - 0.159) < 0.005
    assert abs(opt.point[1] - 3.64) < 0.05


def test_criterion_05_bootstrap_coverage_and_ci_shape():
    """With trial noise and subject offsets matching the target variance
    structure, the 95 % bootstrap CI covers the planted optimum in >= 90
    of 100 seeded runs, the span-normalized duration CI is narrower than
    the magnitude CI in >= 95, and one 1000-replicate run takes < 60 s."""
    spec = PlantedSurfaceSpec()
    smoothing = 0.05

    start = time.perf_counter()
    bootstrap_optimum(plant_response_surface(spec, seed=999), n=1000, seed=999,
                      smoothing=smoothing)
    assert time.perf_counter() - start < 60.0

    mag_span = 0.25 - 0.05
    dur_span = 4.0 - 0.5
    covered = 0
    narrower = 0
    for seed in range(100):
        data = plant_response_surface(spec, seed=seed)
        boot = bootstrap_optimum(data, n=1000, seed=seed, smoothing=smoothing)
        lo_m, hi_m = boot.ci_magnitude
        lo_d, hi_d = boot.ci_duration
        if lo_m <= spec.optimum[0] <= hi_m and lo_d <= spec.optimum[1] <= hi_d:
            covered += 1
        if (hi_d - lo_d) / dur_span < (hi_m - lo_m) / mag_span:
            narrower += 1
    assert covered >= 90, f"coverage {covered}/100"
    assert narrower >= 95, f"duration CI narrower in only {narrower}/100"


def test_criterion_06_icc_value():
    """Variance components (1237.7, 350.1) give an ICC of 0.78 +- 0.005."""
    assert abs(icc_from_variances(1237.7, 350.1) - 0.78) < 0.005


def test_criterion_07_anova_df_and_sums_of_squares_oracle():
    """An 8 x 4 repetition table yields df (3, 21) exactly, and F matches
    a brute-force sums-of-squares oracle to 1e-10 on 100 random tables."""
    rng = np.random.default_rng(7)
    table = rng.normal(size=(8, 4))
    res = rm_anova(table)
    assert (res.df_effect, res.df_error) == (3, 21)

    for _ in range(100):
        n_sub = int(rng.integers(3, 12))
        n_cond = int(rng.integers(2, 8))
        table = rng.normal(10.0, 5.0, size=(n_sub, n_cond))
        res = rm_anova(table)
        # oracle: explicit cell-by-cell sums of squares
        grand = table.sum() / table.size
        ss_sub = sum(
            n_cond * (table[i].mean() - grand) ** 2 for i in range(n_sub)
        )
        ss_cond = sum(
            n_sub * (table[:, j].mean() - grand) ** 2 for j in range(n_cond)
        )
        ss_tot = sum(
            (table[i, j] - grand) ** 2 for i in range(n_sub) for j in range(n_cond)
        )
        ss_err = ss_tot - ss_sub - ss_cond
        f_oracle = (ss_cond / (n_cond - 1)) / (ss_err / ((n_sub - 1) * (n_cond - 1)))
        assert abs(res.f_value - f_oracle) < 1e-10 * max(1.0, abs(f_oracle))


def _reml_oracle(X, y, groups, theta_grid):
    """Dense-matrix REML criterion evaluated on an explicit theta grid."""
    labels = np.unique(groups)
    Z = (groups[:, None] == labels[None, :]).astype(float)
    n, p = X.shape
    best = None
    for theta in theta_grid:
        V0 = np.eye(n) + theta * Z @ Z.T
        V0inv = np.linalg.inv(V0)
        xtvx = X.T @ V0inv @ X
        beta = np.linalg.solve(xtvx, X.T @ V0inv @ y)
        r = y - X @ beta
        sigma2 = float(r @ V0inv @ r) / (n - p)
        crit = (
            np.linalg.slogdet(V0)[1]
            + np.linalg.slogdet(xtvx)[1]
            + (n - p) * math.log(sigma2)
        )
        if best is None or crit < best[0]:
            best = (crit, theta, beta, sigma2)
    return best


def test_criterion_08_lmm_oracle_and_variance_recovery():
    """Mixed-model estimates match a theta-grid GLS oracle to 1e-4 on
    balanced data, and planted components (1237.7, 350.1) are recovered
    with a component-averaged ICC of 0.78 +- 0.02 over 100 seeds."""
    rng = np.random.default_rng(8)
    n_sub, per = 6, 10
    groups = np.repeat(np.arange(n_sub), per)
    X = np.column_stack([np.ones(n_sub * per), rng.normal(size=n_sub * per)])
    y = X @ np.array([2.0, -1.5]) + np.repeat(
        rng.normal(0, 2.0, n_sub), per
    ) + rng.normal(0, 1.0, n_sub * per)
    fit = fit_random_intercept_lmm(X, y, groups)

    coarse = _reml_oracle(X, y, groups, np.linspace(0.0, 200.0, 2001))
    span = 0.2
    fine = _reml_oracle(
        X, y, groups,
        np.linspace(max(coarse[1] - span, 0.0), coarse[1] + span, 4001),
    )
    _, theta_star, beta_star, sigma2_star = fine
    assert np.allclose(fit.coefficients, beta_star, rtol=1e-4, atol=1e-6)
    assert np.allclose(fit.residual_variance, sigma2_star, rtol=1e-4)
    assert np.allclose(fit.subject_variance, theta_star * sigma2_star,
                       rtol=1e-3, atol=1e-4)

    # planted-component recovery at 8-subject scale
    mags = np.repeat([0.05, 0.10, 0.15, 0.20, 0.25], 5)
    durs = np.tile([0.5, 1.0, 2.0, 3.0, 4.0], 5)
    Xg = np.column_stack([np.ones(25), mags, durs, mags * durs])
    beta = np.array([50.0, -100.0, -3.0, 10.0])
    sb, se = [], []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        rows_X, rows_y, rows_g = [], [], []
        for j in range(8):
            b = rng.normal(0.0, math.sqrt(1237.7))
            rows_X.append(Xg)
            rows_y.append(Xg @ beta + b + rng.normal(0.0, math.sqrt(350.1), 25))
            rows_g.append(np.full(25, j))
        fit = fit_random_intercept_lmm(
            np.vstack(rows_X), np.concatenate(rows_y), np.concatenate(rows_g)
        )
        sb.append(fit.subject_variance)
        se.append(fit.residual_variance)
    icc = icc_from_variances(float(np.mean(sb)), float(np.mean(se)))
    assert abs(icc - 0.78) < 0.02, f"component-averaged ICC {icc:.4f}"


def _centered_slope(rows, x_index, y_index=4):
    """Within-subject centered OLS slope: (estimate, p-value)."""
    subjects = sorted({r[0] for r in rows})
    x = np.array([r[x_index] for r in rows])
    y = np.array([r[y_index] for r in rows])
    for s in subjects:
        mask = np.array([r[0] == s for r in rows])
        y[mask] -= y[mask].mean()
    X = np.column_stack([np.ones_like(x), x])
    fit = linear_regression(X, y, names=("intercept", "slope"))
    est, _, p = fit.coefficient("slope")
    return est, p


def test_criterion_09_interaction_sign_pattern():
    """On planted interaction surfaces, the magnitude slope at the
    shortest duration is significantly positive and duration slopes at
    magnitudes >= 15 % are significantly negative (p < 0.05) in >= 95 of
    100 seeded datasets."""
    spec = interaction_surface_spec()
    hits = 0
    for seed in range(100):
        data = plant_response_surface(spec, seed=seed)
        rows = [r for r in data.subject_condition_means() if r[1] == "trapezoid"]

        ok = True
        short = [r for r in rows if r[3] == 0.5]
        est, p = _centered_slope(short, x_index=2)
        ok &= est > 0 and p < 0.05
        for mag in (0.15, 0.20, 0.25):
            sub = [r for r in rows if r[2] == mag]
            est, p = _centered_slope(sub, x_index=3)
            ok &= est < 0 and p < 0.05
        hits += bool(ok)
    assert hits >= 95, f"sign pattern detected in only {hits}/100"


def test_criterion_10_pipeline_determinism():
    """The reference synthetic pipeline produces byte-identical JSON
    outputs across repeated runs and across 1, 4, and 16 workers."""

    def artifacts(workers, tmp):
        cfg = RunConfig(
            n_subjects=2, n_repetitions=1, bootstrap_n=100, workers=workers
        )
        bundle = run_pipeline(cfg)
        import json

        return (
            json.dumps(bundle.report, sort_keys=True),
            bundle.wbam_dataset.to_json(),
            bundle.opus_dataset.to_json() if bundle.opus_dataset else "",
            bundle.svg,
        )

    ref = artifacts(1, None)
    assert artifacts(1, None) == ref  # rerun
    assert artifacts(4, None) == ref
    assert artifacts(16, None) == ref
