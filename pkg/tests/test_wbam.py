import numpy as np
import pytest

from slipstab.bodymodel import SEGMENT_IDS, SegmentInertia, SegmentInertialSet, SubjectAnthropometry
from slipstab.errors import DataError
from slipstab.signal import FootEvents, GaitEvents, TimeSeries
from slipstab.wbam import (
    SegmentStateSeries,
    StridePartition,
    compute_wbam_series,
    partition_strides,
    wbam_range_metric,
)


def _uniform_inertials(mass=1.0, moment=0.0):
    return SegmentInertialSet(
        {s: SegmentInertia(mass=mass, moment_sagittal=moment) for s in SEGMENT_IDS}
    )


def _states(pos_x, pos_z, vel_x, vel_z, omega, rate=100.0):
    return SegmentStateSeries(
        sample_rate=rate, pos_x=pos_x, pos_z=pos_z, vel_x=vel_x, vel_z=vel_z, omega=omega
    )


def test_two_point_mass_hand_computation():
    """Two moving point masses (others at rest at the origin): the momentum
    reduces to a hand-computable sum of m * (rz dvx - rx dvz) terms."""
    n = 1
    k = len(SEGMENT_IDS)
    pos_x = np.zeros((k, n))
    pos_z = np.zeros((k, n))
    vel_x = np.zeros((k, n))
    vel_z = np.zeros((k, n))
    omega = np.zeros((k, n))
    # segment 0 at (1, 1) moving +x; segment 1 at (-1, -1) moving -x
    pos_x[0], pos_z[0], vel_x[0] = 1.0, 1.0, 2.0
    pos_x[1], pos_z[1], vel_x[1] = -1.0, -1.0, -2.0
    inertials = _uniform_inertials(mass=1.0)
    anthro = SubjectAnthropometry(body_mass=float(k), height=1.0, walking_speed=1.0)
    got = compute_wbam_series(_states(pos_x, pos_z, vel_x, vel_z, omega), inertials, anthro)

    # COM is at the origin with zero velocity; each mass contributes
    # m * rz * vx = 1*1*2 and 1*(-1)*(-2)
    assert got.samples[0] == pytest.approx((2.0 + 2.0) / k)


def test_spin_term_adds_segment_moments():
    k = len(SEGMENT_IDS)
    zeros = np.zeros((k, 2))
    omega = np.full((k, 2), 3.0)
    inertials = _uniform_inertials(mass=1.0, moment=0.5)
    anthro = SubjectAnthropometry(body_mass=float(k), height=2.0, walking_speed=1.25)
    got = compute_wbam_series(_states(zeros, zeros, zeros, zeros, omega), inertials, anthro)
    assert np.allclose(got.samples, k * 0.5 * 3.0 / (k * 1.25 * 2.0))


def test_state_series_shape_validation():
    k = len(SEGMENT_IDS)
    with pytest.raises(DataError):
        _states(np.zeros((k, 5)), np.zeros((k, 4)), np.zeros((k, 5)),
                np.zeros((k, 5)), np.zeros((k, 5)))
    with pytest.raises(DataError):
        _states(*[np.zeros((3, 5))] * 5)


def _events(strikes):
    fe = FootEvents(heel_strikes=tuple(strikes), toe_offs=())
    return GaitEvents(left=fe, right=fe)


def test_partition_strides_selects_onset_stride():
    events = _events([0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    part = partition_strides(events, onset=3.2, n_baseline=2)
    assert part.perturbed_stride == (3.0, 4.0)
    assert part.recovery_stride == (4.0, 5.0)
    assert part.baseline_strides == ((1.0, 2.0), (2.0, 3.0))


def test_partition_strides_errors():
    events = _events([0.0, 1.0, 2.0])
    with pytest.raises(DataError):
        partition_strides(events, onset=5.0)  # outside recorded strides
    with pytest.raises(DataError):
        partition_strides(events, onset=1.5)  # no recovery stride after
    with pytest.raises(DataError):
        partition_strides(_events([0.0, 1.0]), onset=0.5)


def test_range_metric_arithmetic():
    rate = 100.0
    t = np.arange(800) / rate
    # baseline oscillation amplitude 1, doubled during [4, 6)
    samples = np.sin(2 * np.pi * t)
    samples[(t >= 4.0) & (t < 6.0)] *= 2.0
    series = TimeSeries(sample_rate=rate, samples=samples)
    part = StridePartition(
        baseline_strides=((1.0, 2.0), (2.0, 3.0), (3.0, 4.0)),
        perturbed_stride=(4.0, 5.0),
        recovery_stride=(5.0, 6.0),
        perturbation_onset=4.1,
    )
    res = wbam_range_metric(series, part)
    assert res.baseline_mean_range == pytest.approx(2.0, rel=1e-3)
    assert res.perturbed_range == pytest.approx(4.0, rel=1e-3)
    assert res.percent_change == pytest.approx(100.0, rel=1e-2)


def test_range_metric_zero_change_for_stationary_signal():
    rate = 100.0
    t = np.arange(800) / rate
    series = TimeSeries(sample_rate=rate, samples=np.sin(2 * np.pi * t))
    part = StridePartition(
        baseline_strides=((1.0, 2.0), (2.0, 3.0)),
        perturbed_stride=(4.0, 5.0),
        recovery_stride=(5.0, 6.0),
        perturbation_onset=4.0,
    )
    res = wbam_range_metric(series, part)
    assert abs(res.percent_change) < 0.5


def test_partition_validation_rejects_onset_outside_stride():
    with pytest.raises(DataError):
        StridePartition(
            baseline_strides=((0.0, 1.0),),
            perturbed_stride=(1.0, 2.0),
            recovery_stride=(2.0, 3.0),
            perturbation_onset=2.5,
        )
