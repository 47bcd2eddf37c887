"""Assistance torque generation: trapezoidal profile and spline baseline.

The trapezoid ramps linearly over the first and last fifths of its
duration with a plateau at the scaling torque in between. The baseline
profile is a monotone-cubic spline through control nodes placed by eight
shape parameters and is played back by stride phase. Scheduling applies
the fixed 10 ms onset latency and the actuator saturation limit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import ConfigError, DataError
from .signal import GaitEvents, TimeSeries, estimate_gait_phase

ONSET_DELAY_S = 0.010
ACTUATOR_SATURATION_NM = 18.0
DEFAULT_PEAK_BIO_MOMENT_NM_PER_KG = 1.1
DEFAULT_PERTURBATION_LENGTH_S = 0.3

MAGNITUDE_GRID = (0.05, 0.10, 0.15, 0.20, 0.25)
DURATION_GRID = (0.5, 1.0, 2.0, 3.0, 4.0)


class ProfileType(enum.Enum):
    TRAPEZOID = "trapezoid"
    SPLINE_BASELINE = "spline_baseline"
    NONE = "none"


@dataclass(frozen=True)
class TrapezoidProfile:
    t_max: float  # Nm
    duration: float  # s

    def __post_init__(self):
        if self.t_max < 0:
            raise ConfigError(f"t_max must be non-negative, got {self.t_max}")
        if self.duration <= 0:
            raise ConfigError(f"duration must be positive, got {self.duration}")


@dataclass(frozen=True)
class AssistanceCondition:
    profile: ProfileType
    magnitude_fraction: float = 0.0  # of peak biological hip extension moment
    duration_multiple: float = 0.0  # of perturbation length

    def __post_init__(self):
        if self.profile is ProfileType.TRAPEZOID:
            if not 0.0 <= self.magnitude_fraction <= 0.30:
                raise ConfigError(
                    f"magnitude_fraction {self.magnitude_fraction} outside [0, 0.30]"
                )
            if not 0.0 < self.duration_multiple <= 6.0:
                raise ConfigError(
                    f"duration_multiple {self.duration_multiple} outside (0, 6]"
                )

    @property
    def label(self) -> str:
        if self.profile is ProfileType.TRAPEZOID:
            return f"trapezoid_m{self.magnitude_fraction:g}_d{self.duration_multiple:g}"
        return self.profile.value


@dataclass(frozen=True)
class SplineBaselineParams:
    """Eight-parameter baseline profile shape.

    The shipped defaults are placeholders chosen to produce a plausible
    early-stance burst; they are not authoritative values and are meant to
    be replaced from configuration.
    """

    onset_phase: float = 0.0
    peak_phase: float = 0.12
    offset_phase: float = 0.35
    peak_torque_fraction: float = 0.20
    rise_node_fraction: float = 0.5  # phase position of the rise shape node
    rise_level_fraction: float = 0.5  # torque level at the rise shape node
    fall_node_fraction: float = 0.5
    fall_level_fraction: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.onset_phase < self.peak_phase < self.offset_phase <= 1.0:
            raise ConfigError(
                "spline phases must satisfy 0 <= onset < peak < offset <= 1, got "
                f"({self.onset_phase}, {self.peak_phase}, {self.offset_phase})"
            )
        if self.peak_torque_fraction < 0:
            raise ConfigError("peak_torque_fraction must be non-negative")
        for name in ("rise_node_fraction", "rise_level_fraction",
                     "fall_node_fraction", "fall_level_fraction"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name}={v} outside (0, 1)")


@dataclass(frozen=True)
class TorqueCommandSeries:
    left: TimeSeries  # Nm
    right: TimeSeries  # Nm
    onset_delay: float = ONSET_DELAY_S
    saturation: float = ACTUATOR_SATURATION_NM


def trapezoid_torque(t: float | np.ndarray, profile: TrapezoidProfile):
    """Trapezoidal torque at time ``t`` since assistance onset.

    Linear rise on [0, 0.2 D], plateau at ``t_max`` on (0.2 D, 0.8 D),
    linear fall on [0.8 D, D], zero elsewhere.
    """
    t = np.asarray(t, dtype=float)
    d, tm = profile.duration, profile.t_max
    rise = tm * (t / (0.2 * d))
    fall = tm * (1.0 - (t - 0.8 * d) / (0.2 * d))
    out = np.where(t <= 0.2 * d, rise, np.where(t < 0.8 * d, tm, fall))
    out = np.where((t < 0) | (t > d), 0.0, out)
    return out if out.ndim else float(out)


def spline_nodes(params: SplineBaselineParams, peak_torque: float) -> tuple[np.ndarray, np.ndarray]:
    """Control nodes (phase, torque) for the baseline profile."""
    rise_phase = params.onset_phase + params.rise_node_fraction * (
        params.peak_phase - params.onset_phase
    )
    fall_phase = params.peak_phase + params.fall_node_fraction * (
        params.offset_phase - params.peak_phase
    )
    phases = np.array(
        [params.onset_phase, rise_phase, params.peak_phase, fall_phase, params.offset_phase]
    )
    torques = peak_torque * np.array(
        [0.0, params.rise_level_fraction, 1.0, params.fall_level_fraction, 0.0]
    )
    if np.any(np.diff(phases) <= 0):
        raise ConfigError(f"spline node phases are not strictly increasing: {phases}")
    return phases, torques


def spline_torque(
    phase: float | np.ndarray, params: SplineBaselineParams, peak_bio_torque: float
):
    """Baseline torque at the given stride phase.

    Monotone cubic (PCHIP) segments through the control nodes: the profile
    peaks exactly at ``peak_torque_fraction * peak_bio_torque`` and is zero
    outside [onset_phase, offset_phase].
    """
    phase = np.asarray(phase, dtype=float)
    peak = params.peak_torque_fraction * peak_bio_torque
    phases, torques = spline_nodes(params, peak)
    interp = PchipInterpolator(phases, torques, extrapolate=False)
    out = interp(np.clip(phase, phases[0], phases[-1]))
    out = np.where((phase < params.onset_phase) | (phase > params.offset_phase), 0.0, out)
    out = np.nan_to_num(out)
    return out if out.ndim else float(out)


def schedule_assistance(
    onset: float,
    condition: AssistanceCondition,
    perturbation_length: float = DEFAULT_PERTURBATION_LENGTH_S,
    peak_bio_moment: float = DEFAULT_PEAK_BIO_MOMENT_NM_PER_KG,  # Nm/kg
    body_mass: float = 70.0,
    rate: float = 100.0,
    duration_s: float = 15.0,
    perturbed_side: str = "left",
    gait_events: GaitEvents | None = None,
    spline_params: SplineBaselineParams | None = None,
) -> TorqueCommandSeries:
    """Commanded torque series for one trial.

    Trapezoid assistance scales ``magnitude_fraction`` by the subject's
    peak biological hip extension moment (Nm/kg x body mass), runs for
    ``duration_multiple`` perturbation lengths, and starts 10 ms after the
    perturbation onset. Commands are clamped to the actuator limit.
    """
    if perturbation_length <= 0:
        raise ConfigError(f"perturbation_length must be positive, got {perturbation_length}")
    if rate <= 0:
        raise ConfigError(f"rate must be positive, got {rate}")
    n = int(round(duration_s * rate))
    t = np.arange(n) / rate
    zeros = np.zeros(n)
    peak_torque = peak_bio_moment * body_mass

    if condition.profile is ProfileType.NONE:
        cmd = zeros
    elif condition.profile is ProfileType.TRAPEZOID:
        profile = TrapezoidProfile(
            t_max=condition.magnitude_fraction * peak_torque,
            duration=condition.duration_multiple * perturbation_length,
        )
        cmd = trapezoid_torque(t - (onset + ONSET_DELAY_S), profile)
    elif condition.profile is ProfileType.SPLINE_BASELINE:
        if gait_events is None:
            raise ConfigError("spline baseline playback requires gait events")
        params = spline_params or SplineBaselineParams()
        cmd = np.zeros(n)
        for i, ti in enumerate(t):
            if ti < onset + ONSET_DELAY_S:
                continue
            try:
                phase = estimate_gait_phase(gait_events, ti, foot=perturbed_side)
            except DataError:
                continue
            cmd[i] = spline_torque(phase, params, peak_torque)
    else:
        raise ConfigError(f"unknown profile {condition.profile!r}")

    cmd = np.clip(cmd, -ACTUATOR_SATURATION_NM, ACTUATOR_SATURATION_NM)
    assisted = TimeSeries(sample_rate=rate, samples=cmd)
    idle = TimeSeries(sample_rate=rate, samples=zeros)
    left, right = (assisted, idle) if perturbed_side == "left" else (idle, assisted)
    return TorqueCommandSeries(left=left, right=right)
