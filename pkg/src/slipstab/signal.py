"""Filtering, differentiation, and gait-event extraction.

Ground reaction forces and kinematics share the same zero-phase
Butterworth low-pass (forward-backward 4th order, 6 Hz cutoff by
default). Heel strikes and toe offs are detected from vertical GRF by
debounced threshold crossings.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import butter, filtfilt

from .errors import ConfigError, DataError

DEFAULT_EVENT_THRESHOLD_N = 20.0
DEFAULT_DEBOUNCE_S = 0.050


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled scalar series."""

    sample_rate: float  # Hz
    samples: np.ndarray
    start_time: float = 0.0  # s

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float))
        if np.isnan(self.samples).any():
            raise DataError("time series contains NaN after validation")

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(len(self.samples)) / self.sample_rate

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class FootEvents:
    heel_strikes: tuple[float, ...]  # s
    toe_offs: tuple[float, ...]  # s

    def __post_init__(self):
        for seq in (self.heel_strikes, self.toe_offs):
            if any(b <= a for a, b in zip(seq, seq[1:])):
                raise DataError("gait events must be strictly increasing in time")
        if self.heel_strikes and self.toe_offs:
            merged = sorted(
                [(t, "hs") for t in self.heel_strikes]
                + [(t, "to") for t in self.toe_offs]
            )
            kinds = [k for _, k in merged]
            if any(a == b for a, b in zip(kinds, kinds[1:])):
                raise DataError("heel strikes and toe offs must alternate per foot")


@dataclass(frozen=True)
class GaitEvents:
    left: FootEvents
    right: FootEvents

    def foot(self, side: str) -> FootEvents:
        if side not in ("left", "right"):
            raise ConfigError(f"unknown foot {side!r}")
        return self.left if side == "left" else self.right


def butterworth_lowpass(series: TimeSeries, cutoff: float = 6.0, order: int = 4) -> TimeSeries:
    """Zero-phase low-pass filter (forward-backward Butterworth).

    Reflective padding of three times the filter order suppresses edge
    transients; DC gain is preserved.
    """
    nyquist = series.sample_rate / 2
    if cutoff >= nyquist:
        raise ConfigError(f"cutoff {cutoff} Hz >= Nyquist {nyquist} Hz")
    if order < 2 or order % 2:
        raise ConfigError(f"order must be even and >= 2, got {order}")
    b, a = butter(order, cutoff, fs=series.sample_rate)
    padlen = min(3 * order, len(series) - 1)
    out = filtfilt(b, a, series.samples, padtype="even", padlen=padlen)
    return replace(series, samples=out)


def differentiate(series: TimeSeries) -> TimeSeries:
    """Central differences in the interior, one-sided at the boundaries."""
    if len(series) < 3:
        raise DataError(f"need at least 3 samples to differentiate, got {len(series)}")
    out = np.gradient(series.samples, 1.0 / series.sample_rate)
    return replace(series, samples=out)


def _contact_runs(above: np.ndarray):
    """(start, end) index pairs of contiguous True runs, end exclusive."""
    padded = np.concatenate([[False], above, [False]])
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return list(zip(edges[::2], edges[1::2]))


def _foot_events(series: TimeSeries, threshold: float, debounce: float) -> FootEvents:
    above = series.samples >= threshold
    runs = _contact_runs(above)
    min_samples = max(int(round(debounce * series.sample_rate)), 1)
    # close sub-debounce airborne gaps, then drop sub-debounce contacts
    merged: list[list[int]] = []
    for start, end in runs:
        if merged and start - merged[-1][1] < min_samples:
            merged[-1][1] = end
        else:
            merged.append([start, end])
    merged = [(s, e) for s, e in merged if e - s >= min_samples]
    t = series.times
    hs = tuple(t[s] for s, _ in merged if s > 0)  # contact at sample 0 has no strike
    to = tuple(t[e] for _, e in merged if e < len(t))
    return FootEvents(heel_strikes=hs, toe_offs=to)


def detect_gait_events(
    left_grf: TimeSeries,
    right_grf: TimeSeries,
    threshold: float = DEFAULT_EVENT_THRESHOLD_N,
    debounce: float = DEFAULT_DEBOUNCE_S,
) -> GaitEvents:
    """Detect heel strikes (upward crossings) and toe offs (downward).

    An empty signal yields empty event lists; crossings closer together
    than the debounce window are treated as noise and dropped.
    """
    if threshold <= 0:
        raise ConfigError(f"threshold must be positive, got {threshold}")
    return GaitEvents(
        left=_foot_events(left_grf, threshold, debounce),
        right=_foot_events(right_grf, threshold, debounce),
    )


def estimate_gait_phase(
    events: GaitEvents, t: float, foot: str = "left", max_history: int = 5
) -> float:
    """Stride phase in [0, 1) at time ``t``.

    Phase is elapsed time since the most recent heel strike divided by the
    average stride period over up to ``max_history`` preceding strides.
    """
    strikes = [s for s in events.foot(foot).heel_strikes if s <= t]
    if len(strikes) < 2:
        raise DataError(
            f"gait phase unavailable at t={t}: need at least two heel strikes"
        )
    periods = np.diff(strikes[-(max_history + 1):])
    avg_period = float(periods.mean())
    phase = (t - strikes[-1]) / avg_period
    return min(max(phase, 0.0), np.nextafter(1.0, 0.0))
