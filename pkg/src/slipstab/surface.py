"""Variance-weighted RBF response surface, optimum search, and bootstrap.

The surface is fit on unit-square normalized coordinates by solving the
regularized kernel system (K + smoothing * W^-1) c = y - ybar, where W is
the per-cell weight matrix (inverse trial variance, normalized to mean 1)
and ybar the weighted mean. Centering on the weighted mean makes the fit
exactly equivariant under constant value shifts. Bootstrap resampling
redraws trials with replacement within each condition cell, refits, and
relocates the optimum; confidence intervals are percentile-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import ConditionDataset
from .errors import ConfigError, DataError, NumericalError

DEFAULT_SMOOTHING = 0.4
DEFAULT_EPSILON = 0.1
DEFAULT_KERNEL = "gaussian"
#: maps epsilon=0.1 to a length scale of half the unit-square diagonal
EPSILON_LENGTH_FACTOR = 5.0 * np.sqrt(2.0)
VARIANCE_FLOOR_FACTOR = 1e-6
OPT_GRID = 201


def _kernel(r2: np.ndarray, kind: str, length_scale: float) -> np.ndarray:
    if kind == "gaussian":
        return np.exp(-r2 / length_scale**2)
    if kind == "multiquadric":
        return np.sqrt(r2 / length_scale**2 + 1.0)
    if kind == "linear":
        return np.sqrt(r2)
    raise ConfigError(f"unknown RBF kernel {kind!r}")


def _cell_stats(data: ConditionDataset):
    cells = data.cells()
    if len(cells) < 3:
        raise DataError(f"need >= 3 distinct grid cells, got {len(cells)}")
    coords = np.array(list(cells.keys()))
    means = np.array([v.mean() for v in cells.values()])
    variances = np.array(
        [v.var(ddof=1) if len(v) > 1 else 0.0 for v in cells.values()]
    )
    return coords, means, variances, list(cells.values())


def _weights(variances: np.ndarray) -> np.ndarray:
    mean_var = variances.mean()
    floor = VARIANCE_FLOOR_FACTOR * mean_var if mean_var > 0 else 1.0
    w = 1.0 / np.maximum(variances, floor)
    return w / w.mean()


@dataclass(frozen=True)
class ResponseSurface:
    centers: np.ndarray  # (n, 2) normalized coordinates
    coefficients: np.ndarray  # (n,)
    weighted_mean: float
    bounds_lo: np.ndarray  # (2,) raw coordinates
    bounds_hi: np.ndarray  # (2,)
    kernel: str = DEFAULT_KERNEL
    smoothing: float = DEFAULT_SMOOTHING
    epsilon: float = DEFAULT_EPSILON

    @property
    def length_scale(self) -> float:
        return EPSILON_LENGTH_FACTOR * self.epsilon

    def _normalize(self, points: np.ndarray) -> np.ndarray:
        return (points - self.bounds_lo) / (self.bounds_hi - self.bounds_lo)

    def evaluate(self, points) -> np.ndarray:
        """Surface values at raw (magnitude, duration) points, shape (m, 2)."""
        u = self._normalize(np.atleast_2d(np.asarray(points, dtype=float)))
        r2 = ((u[:, None, :] - self.centers[None, :, :]) ** 2).sum(-1)
        k = _kernel(r2, self.kernel, self.length_scale)
        return k @ self.coefficients + self.weighted_mean

    def metadata(self) -> dict:
        return {
            "kernel": self.kernel,
            "smoothing": self.smoothing,
            "epsilon": self.epsilon,
            "length_scale": self.length_scale,
            "coordinate_bounds": {
                "magnitude": [float(self.bounds_lo[0]), float(self.bounds_hi[0])],
                "duration": [float(self.bounds_lo[1]), float(self.bounds_hi[1])],
            },
        }


@dataclass(frozen=True)
class OptimumEstimate:
    point: tuple[float, float]  # (magnitude_fraction, duration_multiple)
    value: float
    mode: str  # 'min' | 'max'
    flat_surface: bool = False


@dataclass(frozen=True)
class BootstrapResult:
    optimum: OptimumEstimate  # full-data estimate
    n_resamples: int
    seed: int
    ci_magnitude: tuple[float, float]  # 2.5 / 97.5 percentiles
    ci_duration: tuple[float, float]
    replicate_optima: np.ndarray  # (n, 2)

    def metadata(self) -> dict:
        return {
            "n_resamples": self.n_resamples,
            "seed": self.seed,
            "optimum": {
                "magnitude_fraction": self.optimum.point[0],
                "duration_multiple": self.optimum.point[1],
                "value": self.optimum.value,
                "mode": self.optimum.mode,
            },
            "ci95_magnitude": list(self.ci_magnitude),
            "ci95_duration": list(self.ci_duration),
        }


def _solve(K: np.ndarray, smoothing: float, weights: np.ndarray, y: np.ndarray):
    A = K + smoothing * np.diag(1.0 / weights)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1e14:
        raise NumericalError(
            f"RBF system is singular after regularization (condition number {cond:.3g})"
        )
    return np.linalg.solve(A, y)


def fit_rbf(
    data: ConditionDataset,
    smoothing: float = DEFAULT_SMOOTHING,
    epsilon: float = DEFAULT_EPSILON,
    kernel: str = DEFAULT_KERNEL,
) -> ResponseSurface:
    """Fit the variance-weighted surface over the trapezoid condition grid."""
    coords, means, variances, _ = _cell_stats(data)
    lo = coords.min(0)
    hi = coords.max(0)
    if np.any(hi <= lo):
        raise DataError("degenerate condition grid: zero extent along an axis")
    centers = (coords - lo) / (hi - lo)
    w = _weights(variances)
    ybar = float(np.average(means, weights=w))
    r2 = ((centers[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    K = _kernel(r2, kernel, EPSILON_LENGTH_FACTOR * epsilon)
    c = _solve(K, smoothing, w, means - ybar)
    return ResponseSurface(
        centers=centers,
        coefficients=c,
        weighted_mean=ybar,
        bounds_lo=lo,
        bounds_hi=hi,
        kernel=kernel,
        smoothing=smoothing,
        epsilon=epsilon,
    )


_LOCAL_OFFSETS = np.stack(
    np.meshgrid(np.linspace(-1, 1, 9), np.linspace(-1, 1, 9), indexing="ij"), -1
).reshape(-1, 2)


def _argopt_batch(
    centers: np.ndarray,
    coeff_batch: np.ndarray,  # (n_centers, n_surfaces)
    kernel: str,
    length_scale: float,
    mode: str,
    grid: int = OPT_GRID,
    refinements: int = 3,
) -> np.ndarray:
    """Normalized argmin/argmax per surface: dense grid plus local descent."""
    sign = 1.0 if mode == "min" else -1.0
    g = np.linspace(0.0, 1.0, grid)
    gu = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    r2 = ((gu[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    values = sign * (_kernel(r2, kernel, length_scale) @ coeff_batch)
    u = gu[values.argmin(0)]
    step = 1.0 / (grid - 1)
    for _ in range(refinements):
        cand = np.clip(u[:, None, :] + _LOCAL_OFFSETS[None, :, :] * step, 0.0, 1.0)
        r2 = ((cand[:, :, None, :] - centers[None, None, :, :]) ** 2).sum(-1)
        values = sign * np.einsum(
            "spc,cs->sp", _kernel(r2, kernel, length_scale), coeff_batch
        )
        u = np.take_along_axis(cand, values.argmin(1)[:, None, None], 1)[:, 0, :]
        step /= 4.0
    return u


def find_optimum(
    surface: ResponseSurface,
    bounds: tuple[tuple[float, float], tuple[float, float]] | None = None,
    mode: str = "min",
) -> OptimumEstimate:
    """Deterministic surface optimum over the fitted domain."""
    if mode not in ("min", "max"):
        raise ConfigError(f"mode must be 'min' or 'max', got {mode!r}")
    lo, hi = surface.bounds_lo, surface.bounds_hi
    if bounds is not None:
        lo = np.maximum(lo, [bounds[0][0], bounds[1][0]])
        hi = np.minimum(hi, [bounds[0][1], bounds[1][1]])
    g = np.linspace(0.0, 1.0, OPT_GRID)
    probe = surface.bounds_lo + np.stack(
        np.meshgrid(g, g, indexing="ij"), -1
    ).reshape(-1, 2) * (surface.bounds_hi - surface.bounds_lo)
    probe_vals = surface.evaluate(probe)
    spread = float(probe_vals.max() - probe_vals.min())
    scale = max(abs(float(probe_vals.max())), abs(float(probe_vals.min())), 1.0)
    if spread <= 1e-12 * scale:
        center = (lo + hi) / 2.0
        return OptimumEstimate(
            point=(float(center[0]), float(center[1])),
            value=float(surface.evaluate(center[None, :])[0]),
            mode=mode,
            flat_surface=True,
        )
    u = _argopt_batch(
        surface.centers,
        surface.coefficients[:, None],
        surface.kernel,
        surface.length_scale,
        mode,
    )[0]
    point = surface.bounds_lo + u * (surface.bounds_hi - surface.bounds_lo)
    point = np.clip(point, lo, hi)
    value = float(surface.evaluate(point[None, :])[0])
    return OptimumEstimate(point=(float(point[0]), float(point[1])), value=value, mode=mode)


def bootstrap_optimum(
    data: ConditionDataset,
    n: int = 1000,
    seed: int = 0,
    mode: str = "min",
    smoothing: float = DEFAULT_SMOOTHING,
    epsilon: float = DEFAULT_EPSILON,
    kernel: str = DEFAULT_KERNEL,
) -> BootstrapResult:
    """Percentile bootstrap of the optimum location.

    Trials are resampled with replacement within each condition cell;
    replicate draws come from per-replicate generators derived from
    (seed, replicate), so results do not depend on evaluation order or
    worker count.
    """
    if n < 100:
        raise ConfigError(f"bootstrap needs n >= 100 replicates, got {n}")
    surface = fit_rbf(data, smoothing=smoothing, epsilon=epsilon, kernel=kernel)
    optimum = find_optimum(surface, mode=mode)

    coords, _, _, cell_values = _cell_stats(data)
    n_cells = len(cell_values)
    length_scale = surface.length_scale

    boot_means = np.empty((n, n_cells))
    boot_vars = np.empty((n, n_cells))
    for r in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([seed, r]))
        for j, vals in enumerate(cell_values):
            draw = vals[rng.integers(0, len(vals), len(vals))]
            boot_means[r, j] = draw.mean()
            boot_vars[r, j] = draw.var(ddof=1) if len(draw) > 1 else 0.0

    mean_var = boot_vars.mean(1, keepdims=True)
    floor = np.where(mean_var > 0, VARIANCE_FLOOR_FACTOR * mean_var, 1.0)
    w = 1.0 / np.maximum(boot_vars, floor)
    w /= w.mean(1, keepdims=True)
    ybar = (boot_means * w).sum(1) / w.sum(1)

    r2 = ((surface.centers[:, None, :] - surface.centers[None, :, :]) ** 2).sum(-1)
    K = _kernel(r2, kernel, length_scale)
    A = np.repeat(K[None, :, :], n, axis=0)
    idx = np.arange(n_cells)
    A[:, idx, idx] += smoothing / w
    try:
        coeffs = np.linalg.solve(A, (boot_means - ybar[:, None])[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError as exc:
        raise NumericalError("bootstrap refit produced a singular system") from exc

    u = _argopt_batch(
        surface.centers, coeffs.T, kernel, length_scale, mode, grid=121
    )
    optima = surface.bounds_lo + u * (surface.bounds_hi - surface.bounds_lo)
    ci_m = np.percentile(optima[:, 0], [2.5, 97.5])
    ci_d = np.percentile(optima[:, 1], [2.5, 97.5])
    return BootstrapResult(
        optimum=optimum,
        n_resamples=n,
        seed=seed,
        ci_magnitude=(float(ci_m[0]), float(ci_m[1])),
        ci_duration=(float(ci_d[0]), float(ci_d[1])),
        replicate_optima=optima,
    )


def surface_grid(
    surface: ResponseSurface, n_magnitude: int = 200, n_duration: int = 200
):
    """Dense evaluation grid: (magnitudes, durations, values[n_mag, n_dur])."""
    mags = np.linspace(surface.bounds_lo[0], surface.bounds_hi[0], n_magnitude)
    durs = np.linspace(surface.bounds_lo[1], surface.bounds_hi[1], n_duration)
    pts = np.stack(np.meshgrid(mags, durs, indexing="ij"), -1).reshape(-1, 2)
    values = surface.evaluate(pts).reshape(n_magnitude, n_duration)
    return mags, durs, values
