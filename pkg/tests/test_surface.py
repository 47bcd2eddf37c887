import numpy as np
import pytest

from slipstab.dataset import ConditionDataset, ConditionRecord
from slipstab.errors import ConfigError, DataError
from slipstab.surface import (
    ResponseSurface,
    bootstrap_optimum,
    find_optimum,
    fit_rbf,
    surface_grid,
)
from slipstab.synth import PlantedSurfaceSpec, plant_response_surface


def _grid_dataset(values_fn, mags=(0.05, 0.15, 0.25), durs=(0.5, 2.0, 4.0), reps=3):
    records = []
    for m in mags:
        for d in durs:
            for r in range(reps):
                records.append(
                    ConditionRecord(
                        subject_id="S00",
                        profile="trapezoid",
                        magnitude_fraction=m,
                        duration_multiple=d,
                        repetition_index=r,
                        value=values_fn(m, d, r),
                    )
                )
    return ConditionDataset(records=tuple(records))


def test_fit_requires_enough_cells():
    data = _grid_dataset(lambda m, d, r: 1.0, mags=(0.1,), durs=(1.0, 2.0))
    with pytest.raises(DataError):
        fit_rbf(data)


def test_unknown_kernel_rejected():
    data = _grid_dataset(lambda m, d, r: m + d)
    with pytest.raises(ConfigError):
        fit_rbf(data, kernel="sinc")


def test_value_shift_equivariance():
    data = _grid_dataset(lambda m, d, r: 10 * m + d + 0.1 * r)
    shifted = _grid_dataset(lambda m, d, r: 10 * m + d + 0.1 * r + 100.0)
    s1 = fit_rbf(data)
    s2 = fit_rbf(shifted)
    pts = np.array([[0.1, 1.0], [0.2, 3.0], [0.07, 3.7]])
    assert np.allclose(s2.evaluate(pts), s1.evaluate(pts) + 100.0, atol=1e-9)


def test_interpolation_at_cells_without_smoothing():
    data = _grid_dataset(lambda m, d, r: 5.0 * m - 2.0 * d)
    surface = fit_rbf(data, smoothing=0.0)
    for (m, d), values in data.cells().items():
        got = surface.evaluate(np.array([[m, d]]))[0]
        assert got == pytest.approx(values.mean(), abs=1e-8)


def test_variance_weighting_downweights_noisy_cells():
    # one cell has wildly dispersed repetitions around the same mean; with
    # smoothing, the fit should stay closer to the tight cells
    def values(m, d, r):
        base = m * 10 + d
        if (m, d) == (0.15, 2.0):
            return base + (r - 1) * 50.0  # huge spread, same mean
        return base + (r - 1) * 0.01

    surface = fit_rbf(_grid_dataset(values), smoothing=0.4)
    for (m, d), vals in _grid_dataset(values).cells().items():
        err = abs(surface.evaluate(np.array([[m, d]]))[0] - vals.mean())
        if (m, d) != (0.15, 2.0):
            assert err < 1.0


def test_flat_surface_reports_domain_center():
    data = _grid_dataset(lambda m, d, r: 7.5)
    surface = fit_rbf(data, smoothing=0.1)
    opt = find_optimum(surface)
    assert opt.flat_surface
    assert opt.point[0] == pytest.approx(0.15)
    assert opt.point[1] == pytest.approx(2.25)


def test_find_optimum_mode_validation():
    data = _grid_dataset(lambda m, d, r: m + d)
    surface = fit_rbf(data)
    with pytest.raises(ConfigError):
        find_optimum(surface, mode="best")


def test_optimum_max_mode_mirrors_min_mode():
    data = _grid_dataset(lambda m, d, r: (m - 0.15) ** 2 + 0.1 * (d - 2.0) ** 2)
    flipped = _grid_dataset(lambda m, d, r: -((m - 0.15) ** 2 + 0.1 * (d - 2.0) ** 2))
    lo = find_optimum(fit_rbf(data, smoothing=0.0), mode="min")
    hi = find_optimum(fit_rbf(flipped, smoothing=0.0), mode="max")
    assert lo.point == pytest.approx(hi.point, abs=1e-6)


def test_bootstrap_is_deterministic_given_seed():
    data = plant_response_surface(PlantedSurfaceSpec(), seed=0)
    a = bootstrap_optimum(data, n=200, seed=42)
    b = bootstrap_optimum(data, n=200, seed=42)
    c = bootstrap_optimum(data, n=200, seed=43)
    assert a.ci_magnitude == b.ci_magnitude
    assert a.ci_duration == b.ci_duration
    assert np.array_equal(a.replicate_optima, b.replicate_optima)
    assert a.ci_magnitude != c.ci_magnitude


def test_bootstrap_requires_minimum_replicates():
    data = plant_response_surface(PlantedSurfaceSpec(), seed=0)
    with pytest.raises(ConfigError):
        bootstrap_optimum(data, n=50)


def test_bootstrap_metadata_contract():
    data = plant_response_surface(PlantedSurfaceSpec(), seed=1)
    boot = bootstrap_optimum(data, n=150, seed=7)
    meta = boot.metadata()
    assert meta["n_resamples"] == 150
    assert meta["seed"] == 7
    assert meta["ci95_magnitude"][0] <= meta["ci95_magnitude"][1]
    assert boot.replicate_optima.shape == (150, 2)


def test_surface_grid_covers_domain():
    data = _grid_dataset(lambda m, d, r: m + d)
    surface = fit_rbf(data)
    mags, durs, values = surface_grid(surface, n_magnitude=50, n_duration=40)
    assert mags[0] == 0.05 and mags[-1] == 0.25
    assert durs[0] == 0.5 and durs[-1] == 4.0
    assert values.shape == (50, 40)
