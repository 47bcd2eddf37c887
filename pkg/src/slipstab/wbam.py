"""Normalized sagittal whole-body angular momentum and the range metric.

Per sample, the momentum sums each segment's transfer term (COM-relative
position crossed with COM-relative linear momentum) and its spin term
(segment moment times sagittal angular velocity), then divides by
mass x average walking speed x height. The sign convention is positive
for forward (anterior-over-toes) rotation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .bodymodel import SEGMENT_IDS, SegmentInertialSet, SubjectAnthropometry
from .errors import ConfigError, DataError
from .signal import GaitEvents, TimeSeries

SIGN_CONVENTION = "positive = forward (anterior-over-toes) rotation"

DEFAULT_BASELINE_STRIDES = 5


@dataclass(frozen=True)
class SegmentStateSeries:
    """Per-segment planar COM kinematics, one row per segment (canonical segment order)."""

    sample_rate: float  # Hz
    pos_x: np.ndarray  # (n_segments, n) anterior position, m
    pos_z: np.ndarray  # (n_segments, n) vertical position, m
    vel_x: np.ndarray  # (n_segments, n) m/s
    vel_z: np.ndarray  # (n_segments, n) m/s
    omega: np.ndarray  # (n_segments, n) sagittal angular velocity, rad/s
    start_time: float = 0.0

    def __post_init__(self):
        arrays = (self.pos_x, self.pos_z, self.vel_x, self.vel_z, self.omega)
        shapes = {a.shape for a in arrays}
        if len(shapes) != 1:
            raise DataError(f"segment state arrays disagree in shape: {shapes}")
        shape = shapes.pop()
        if shape[0] != len(SEGMENT_IDS):
            raise DataError(
                f"expected {len(SEGMENT_IDS)} segments, got {shape[0]}"
            )

    @property
    def n_samples(self) -> int:
        return self.pos_x.shape[1]


@dataclass(frozen=True)
class StridePartition:
    """Baseline, perturbed, and recovery stride intervals, [start, end) in s."""

    baseline_strides: tuple[tuple[float, float], ...]
    perturbed_stride: tuple[float, float]
    recovery_stride: tuple[float, float]
    perturbation_onset: float

    def __post_init__(self):
        intervals = [*self.baseline_strides, self.perturbed_stride, self.recovery_stride]
        for a, b in zip(intervals, intervals[1:]):
            if a[1] > b[0]:
                raise DataError(f"stride intervals overlap or are unordered: {a}, {b}")
        lo, hi = self.perturbed_stride
        if not lo <= self.perturbation_onset < hi:
            raise DataError(
                f"perturbation onset {self.perturbation_onset} outside perturbed "
                f"stride {self.perturbed_stride}"
            )


@dataclass(frozen=True)
class WbamRangeResult:
    wbam_series: TimeSeries  # dimensionless
    perturbed_range: float
    baseline_mean_range: float
    percent_change: float
    sign_convention: str = SIGN_CONVENTION


def compute_wbam_series(
    states: SegmentStateSeries,
    inertials: SegmentInertialSet,
    anthro: SubjectAnthropometry,
) -> TimeSeries:
    """Normalized sagittal WBAM, one value per sample."""
    denom = anthro.body_mass * anthro.walking_speed * anthro.height
    if denom == 0:
        raise ConfigError("normalization m*v*h is zero")
    m = inertials.masses()[:, None]
    total = m.sum()
    com_x = (m * states.pos_x).sum(0) / total
    com_z = (m * states.pos_z).sum(0) / total
    com_vx = (m * states.vel_x).sum(0) / total
    com_vz = (m * states.vel_z).sum(0) / total
    rx = states.pos_x - com_x
    rz = states.pos_z - com_z
    dvx = states.vel_x - com_vx
    dvz = states.vel_z - com_vz
    # moment about the mediolateral axis; z*vx - x*vz gives positive
    # values for forward rotation with x anterior and z vertical
    transfer = (m * (rz * dvx - rx * dvz)).sum(0)
    spin = (inertials.moments()[:, None] * states.omega).sum(0)
    return TimeSeries(
        sample_rate=states.sample_rate,
        samples=(transfer + spin) / denom,
        start_time=states.start_time,
    )


def partition_strides(
    events: GaitEvents,
    onset: float,
    n_baseline: int = DEFAULT_BASELINE_STRIDES,
    foot: str = "left",
) -> StridePartition:
    """Heel-strike-to-heel-strike partition around the perturbation onset.

    The perturbed stride is the interval of the given foot containing the
    onset (closed on the left); the recovery stride follows it; baseline
    strides are the ``n_baseline`` strides ending at the perturbed stride.
    """
    strikes = events.foot(foot).heel_strikes
    if len(strikes) < 3:
        raise DataError("not enough heel strikes to partition strides")
    idx = None
    for i, (a, b) in enumerate(zip(strikes, strikes[1:])):
        if a <= onset < b:
            idx = i
            break
    if idx is None:
        raise DataError(f"perturbation onset {onset} s outside recorded strides")
    if idx + 2 >= len(strikes):
        raise DataError("no complete recovery stride after perturbation onset")
    n_avail = min(n_baseline, idx)
    baseline = tuple(
        (strikes[i], strikes[i + 1]) for i in range(idx - n_avail, idx)
    )
    return StridePartition(
        baseline_strides=baseline,
        perturbed_stride=(strikes[idx], strikes[idx + 1]),
        recovery_stride=(strikes[idx + 1], strikes[idx + 2]),
        perturbation_onset=onset,
    )


def _interval_range(series: TimeSeries, lo: float, hi: float) -> float:
    t = series.times
    mask = (t >= lo) & (t < hi)
    if not mask.any():
        raise DataError(f"stride interval [{lo}, {hi}) outside series span")
    window = series.samples[mask]
    return float(window.max() - window.min())


def wbam_range_metric(wbam: TimeSeries, partition: StridePartition) -> WbamRangeResult:
    """Range over perturbed + recovery strides vs the mean baseline range."""
    if not partition.baseline_strides:
        raise DataError("no baseline strides available for normalization")
    perturbed = _interval_range(
        wbam, partition.perturbed_stride[0], partition.recovery_stride[1]
    )
    baseline_ranges = [
        _interval_range(wbam, lo, hi) for lo, hi in partition.baseline_strides
    ]
    baseline_mean = float(np.mean(baseline_ranges))
    if baseline_mean <= 0:
        raise DataError("degenerate baseline: zero mean WBAM range")
    return WbamRangeResult(
        wbam_series=wbam,
        perturbed_range=perturbed,
        baseline_mean_range=baseline_mean,
        percent_change=(perturbed / baseline_mean - 1.0) * 100.0,
    )
