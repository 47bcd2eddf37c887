"""Synthetic trials with closed-form kinematics and planted ground truth.

The walker generator prescribes sinusoidal segment trajectories with an
exact contact schedule, a trapezoidal belt-speed excursion, and a smooth
kinematic slip response, so every downstream quantity has an analytic
oracle. The planted-surface generator produces condition datasets with a
known quadratic optimum, subject offsets, and trial noise for validating
the surface and statistics machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .bodymodel import (
    SEGMENT_IDS,
    SegmentInertia,
    SegmentInertialSet,
    SubjectAnthropometry,
    attach_exoskeleton_mass,
    estimate_inertial_params,
)
from .controller import AssistanceCondition, ProfileType
from .dataset import ConditionDataset, ConditionRecord
from .errors import ConfigError
from .trialio import Trial
from .wbam import SegmentStateSeries

TRIAL_DURATION_S = 15.0
STANCE_FRACTION = 0.62
FIRST_STRIKE_S = 0.05
GRF_STANCE_N = 700.0

#: nominal segment COM height as a fraction of stature
_Z0 = {
    "trunk": 0.65, "pelvis": 0.55,
    "upper_arm_l": 0.72, "upper_arm_r": 0.72,
    "forearm_l": 0.55, "forearm_r": 0.55,
    "hand_l": 0.45, "hand_r": 0.45,
    "thigh_l": 0.45, "thigh_r": 0.45,
    "shank_l": 0.25, "shank_r": 0.25,
    "foot_l": 0.05, "foot_r": 0.05,
}
#: anteroposterior swing amplitude, m (left; right is half a stride out of phase)
_AMP_X = {
    "trunk": 0.010, "pelvis": 0.012,
    "upper_arm_l": 0.060, "upper_arm_r": 0.060,
    "forearm_l": 0.080, "forearm_r": 0.080,
    "hand_l": 0.100, "hand_r": 0.100,
    "thigh_l": 0.120, "thigh_r": 0.120,
    "shank_l": 0.180, "shank_r": 0.180,
    "foot_l": 0.250, "foot_r": 0.250,
}
#: sagittal angular excursion amplitude, rad
_AMP_THETA = {
    "trunk": 0.05, "pelvis": 0.04,
    "upper_arm_l": 0.30, "upper_arm_r": 0.30,
    "forearm_l": 0.40, "forearm_r": 0.40,
    "hand_l": 0.40, "hand_r": 0.40,
    "thigh_l": 0.45, "thigh_r": 0.45,
    "shank_l": 0.60, "shank_r": 0.60,
    "foot_l": 0.50, "foot_r": 0.50,
}
#: share of the slip response displacement reaching each segment
_SLIP_GAIN = {
    "trunk": 1.0, "pelvis": 0.8,
    "upper_arm_l": 0.3, "upper_arm_r": 0.3,
    "forearm_l": 0.3, "forearm_r": 0.3,
    "hand_l": 0.3, "hand_r": 0.3,
    "thigh_l": 0.6, "thigh_r": 0.3,
    "shank_l": 0.8, "shank_r": 0.3,
    "foot_l": 1.0, "foot_r": 0.3,
}
_AMP_Z = 0.005  # vertical bounce amplitude, m (twice per stride)


@dataclass(frozen=True)
class Perturbation:
    onset: float  # s
    length: float = 0.3  # s
    slip_excursion: float = 0.8  # m/s peak belt-speed change
    response_amplitude: float = 0.08  # m peak trunk displacement of the response
    response_span_strides: float = 1.5  # response bump width, in strides


@dataclass(frozen=True)
class WalkerScenario:
    """Closed-form walking trial description; a pure function of its fields."""

    stride_period: float = 1.1  # s
    walking_speed: float = 1.25  # m/s
    rate: float = 100.0  # Hz
    duration: float = TRIAL_DURATION_S  # s
    seed: int = 0
    anthro: SubjectAnthropometry = field(
        default_factory=lambda: SubjectAnthropometry(body_mass=66.4, height=1.748)
    )
    exo_mass: float = 4.5  # kg; 0 models the no-exoskeleton condition
    perturbation: Perturbation | None = None
    perturbed_side: str = "left"
    amplitude_scale: float = 1.0  # scales the slip response displacement

    def __post_init__(self):
        if self.rate < 100:
            raise ConfigError(f"rate must be >= 100 Hz, got {self.rate}")
        if self.perturbation is not None:
            p = self.perturbation
            if not 0 < p.onset < self.duration:
                raise ConfigError(f"perturbation onset {p.onset} outside trial")
            if p.length <= 0:
                raise ConfigError("perturbation length must be positive")

    def inertials(self) -> SegmentInertialSet:
        base = estimate_inertial_params(self.anthro)
        return attach_exoskeleton_mass(base, self.exo_mass)


def planted_contact_schedule(scenario: WalkerScenario) -> dict[str, dict[str, list[float]]]:
    """Exact heel-strike and toe-off times per foot."""
    T = scenario.stride_period
    out = {}
    for side, offset in (("left", 0.0), ("right", 0.5 * T)):
        hs, to = [], []
        k = 0
        while True:
            strike = FIRST_STRIKE_S + offset + k * T
            if strike >= scenario.duration:
                break
            hs.append(strike)
            off = strike + STANCE_FRACTION * T
            if off < scenario.duration:
                to.append(off)
            k += 1
        out[side] = {"heel_strikes": hs, "toe_offs": to}
    return out


def early_stance_onset(scenario: WalkerScenario, stride_index: int) -> float:
    """Perturbation onset in early single stance of the perturbed leg."""
    schedule = planted_contact_schedule(scenario)[scenario.perturbed_side]
    strike = schedule["heel_strikes"][stride_index]
    return strike + 0.15 * scenario.stride_period


def _bump(t: np.ndarray, start: float, span: float):
    """C1 window sin^2(pi s) on s in [0, 1] and its time derivative."""
    s = (t - start) / span
    inside = (s > 0) & (s < 1)
    w = np.where(inside, np.sin(np.pi * s) ** 2, 0.0)
    dw = np.where(inside, np.pi * np.sin(2 * np.pi * s) / span, 0.0)
    return w, dw


def _segment_kinematics(scenario: WalkerScenario, t: np.ndarray):
    """Closed-form positions, exact velocities, and angular rates (n_segments, n)."""
    h = scenario.anthro.height
    w_stride = 2 * np.pi / scenario.stride_period
    n = len(t)
    pos_x = np.empty((len(SEGMENT_IDS), n))
    pos_z = np.empty_like(pos_x)
    vel_x = np.empty_like(pos_x)
    vel_z = np.empty_like(pos_x)
    theta = np.empty_like(pos_x)
    omega = np.empty_like(pos_x)

    if scenario.perturbation is not None:
        p = scenario.perturbation
        span = p.response_span_strides * scenario.stride_period
        w, dw = _bump(t, p.onset, span)
        amp = p.response_amplitude * scenario.amplitude_scale
    else:
        w = dw = np.zeros(n)
        amp = 0.0

    for i, seg in enumerate(SEGMENT_IDS):
        right = seg.endswith("_r")
        leg_phase = np.pi if right else 0.0
        if seg.startswith(("upper_arm", "forearm", "hand")):
            leg_phase += np.pi  # arms swing opposite the ipsilateral leg
        ax = _AMP_X[seg]
        phase = w_stride * t + leg_phase
        slip = _SLIP_GAIN[seg] * amp
        if scenario.perturbed_side == "right" and seg[-2:] in ("_l", "_r"):
            # mirror leg-specific gains when the right leg is perturbed
            slip = _SLIP_GAIN[seg[:-2] + ("_l" if right else "_r")] * amp
        pos_x[i] = ax * np.sin(phase) + slip * w
        vel_x[i] = ax * w_stride * np.cos(phase) + slip * dw
        zphase = 2 * w_stride * t + (0.0 if seg in ("trunk", "pelvis") else leg_phase)
        pos_z[i] = _Z0[seg] * h + _AMP_Z * np.sin(zphase)
        vel_z[i] = _AMP_Z * 2 * w_stride * np.cos(zphase)
        ath = _AMP_THETA[seg]
        theta[i] = ath * np.sin(phase + 0.5)
        omega[i] = ath * w_stride * np.cos(phase + 0.5)
    return pos_x, pos_z, vel_x, vel_z, theta, omega


def _belt_speed(scenario: WalkerScenario, t: np.ndarray) -> np.ndarray:
    """Belt speed with a trapezoidal slip excursion (20/60/20 shape)."""
    base = np.full_like(t, scenario.walking_speed)
    p = scenario.perturbation
    if p is None:
        return base
    x = (t - p.onset) / p.length
    ramp_up = x / 0.2
    ramp_down = (1.0 - x) / 0.2
    shape = np.clip(np.minimum(ramp_up, ramp_down), 0.0, 1.0)
    return base + p.slip_excursion * shape


def generate_trial(
    scenario: WalkerScenario,
    condition: AssistanceCondition | None = None,
    trial_id: str = "synth-000",
    subject_id: str = "S00",
    repetition_index: int = 0,
    opus_score: int | None = None,
) -> Trial:
    """Deterministic synthetic trial for the given scenario."""
    n = int(round(scenario.duration * scenario.rate))
    t = np.arange(n) / scenario.rate
    pos_x, pos_z, _, _, theta, _ = _segment_kinematics(scenario, t)

    schedule = planted_contact_schedule(scenario)
    grf = {}
    for side in ("left", "right"):
        stance = np.zeros(n, dtype=bool)
        for hs in schedule[side]["heel_strikes"]:
            stance |= (t >= hs) & (t < hs + STANCE_FRACTION * scenario.stride_period)
        first = schedule[side]["heel_strikes"][0]
        stance |= t < first - (1 - STANCE_FRACTION) * scenario.stride_period
        grf[side] = np.where(stance, GRF_STANCE_N, 0.0)

    belt = _belt_speed(scenario, t)
    pert = scenario.perturbation
    if condition is None:
        condition = AssistanceCondition(profile=ProfileType.NONE)
    return Trial(
        trial_id=trial_id,
        subject_id=subject_id,
        condition=condition,
        onset=pert.onset if pert else 0.0,
        perturbation_length=pert.length if pert else scenario.duration,
        perturbed_side=scenario.perturbed_side,
        sample_rate=scenario.rate,
        pos_x=pos_x,
        pos_z=pos_z,
        theta=theta,
        grf_left=grf["left"],
        grf_right=grf["right"],
        belt_left=belt if scenario.perturbed_side == "left" else np.full(n, scenario.walking_speed),
        belt_right=belt if scenario.perturbed_side == "right" else np.full(n, scenario.walking_speed),
        exo_worn=scenario.exo_mass > 0,
        repetition_index=repetition_index,
        opus_score=opus_score,
    )


def exact_states(scenario: WalkerScenario, t: np.ndarray) -> SegmentStateSeries:
    """Segment states with analytic velocities and angular rates."""
    pos_x, pos_z, vel_x, vel_z, _, omega = _segment_kinematics(scenario, t)
    return SegmentStateSeries(
        sample_rate=scenario.rate,
        pos_x=pos_x, pos_z=pos_z, vel_x=vel_x, vel_z=vel_z, omega=omega,
        start_time=float(t[0]) if len(t) else 0.0,
    )


def analytic_wbam_oracle(scenario: WalkerScenario, t) -> np.ndarray:
    """Normalized sagittal WBAM from closed forms and exact derivatives."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    pos_x, pos_z, vel_x, vel_z, _, omega = _segment_kinematics(scenario, t)
    inertials = scenario.inertials()
    m = inertials.masses()[:, None]
    total = m.sum()
    cx = (m * pos_x).sum(0) / total
    cz = (m * pos_z).sum(0) / total
    cvx = (m * vel_x).sum(0) / total
    cvz = (m * vel_z).sum(0) / total
    transfer = (m * ((pos_z - cz) * (vel_x - cvx) - (pos_x - cx) * (vel_z - cvz))).sum(0)
    spin = (inertials.moments()[:, None] * omega).sum(0)
    a = scenario.anthro
    return (transfer + spin) / (a.body_mass * a.walking_speed * a.height)


def rotating_rod_trial(
    rod_mass: float = 10.0,
    rod_length: float = 1.6,
    angular_rate: float = 2.0,  # rad/s
    rate: float = 100.0,
    duration: float = 5.0,
    walking_speed: float = 1.25,
):
    """Uniform rod spinning about its fixed midpoint, cut into one slice per model segment.

    By the parallel-axis decomposition the slice model carries exactly
    m L^2 / 12 about the rod center, so the planted normalized WBAM is
    (m L^2 / 12) * omega / (m v h). Returns (trial, inertials, anthro,
    expected normalized WBAM).
    """
    n = int(round(duration * rate))
    t = np.arange(n) / rate
    n_seg = len(SEGMENT_IDS)
    slice_len = rod_length / n_seg
    offsets = (np.arange(n_seg) + 0.5) * slice_len - rod_length / 2
    center_z = rod_length  # keep the rod above the floor

    # forward-positive rotation: the angle grows as the top of the rod
    # pitches anteriorly (z toward x), matching the momentum convention
    ang = angular_rate * t
    pos_x = offsets[:, None] * np.sin(ang)[None, :]
    pos_z = center_z + offsets[:, None] * np.cos(ang)[None, :]
    theta = np.tile(ang, (n_seg, 1))

    slice_mass = rod_mass / n_seg
    slice_moment = slice_mass * slice_len**2 / 12
    inertials = SegmentInertialSet(
        {seg: SegmentInertia(mass=slice_mass, moment_sagittal=slice_moment)
         for seg in SEGMENT_IDS}
    )
    anthro = SubjectAnthropometry(
        body_mass=rod_mass, height=rod_length, walking_speed=walking_speed
    )
    expected = (rod_mass * rod_length**2 / 12) * angular_rate / (
        rod_mass * walking_speed * rod_length
    )
    trial = Trial(
        trial_id="rod",
        subject_id="rod",
        condition=AssistanceCondition(profile=ProfileType.NONE),
        onset=0.0,
        perturbation_length=duration,
        perturbed_side="left",
        sample_rate=rate,
        pos_x=pos_x,
        pos_z=pos_z,
        theta=theta,
        grf_left=np.zeros(n),
        grf_right=np.zeros(n),
        belt_left=np.full(n, walking_speed),
        belt_right=np.full(n, walking_speed),
        exo_worn=False,
    )
    return trial, inertials, anthro, expected


@dataclass(frozen=True)
class PlantedSurfaceSpec:
    """Quadratic response surface with subject offsets and trial noise."""

    optimum: tuple[float, float] = (0.159, 3.64)
    curvature: tuple[float, float] = (120.0, 6.0)  # quadratic coefficients
    interaction: float = 0.0  # cross-term coefficient
    noise_sd: float = math.sqrt(350.1)
    subject_offset_sd: float = math.sqrt(1237.7)
    n_subjects: int = 8
    n_repetitions: int = 4
    value_at_optimum: float = -25.0
    magnitude_grid: tuple[float, ...] = (0.05, 0.10, 0.15, 0.20, 0.25)
    duration_grid: tuple[float, ...] = (0.5, 1.0, 2.0, 3.0, 4.0)
    special_levels: dict = field(
        default_factory=lambda: {"no_exo": 0.0, "none": 5.0, "spline_baseline": 10.0}
    )

    def __post_init__(self):
        c_m, c_d = self.curvature
        if c_m <= 0 or c_d <= 0 or c_m * c_d <= (self.interaction / 2) ** 2:
            raise ConfigError(
                f"curvature {self.curvature} with interaction {self.interaction} "
                "is not positive definite"
            )
        if self.n_subjects < 1 or self.n_repetitions < 1:
            raise ConfigError("subject and repetition counts must be >= 1")

    def mean_value(self, magnitude: float, duration: float) -> float:
        dm = magnitude - self.optimum[0]
        dd = duration - self.optimum[1]
        c_m, c_d = self.curvature
        return (
            self.value_at_optimum
            + c_m * dm * dm + c_d * dd * dd + self.interaction * dm * dd
        )


def interaction_surface_spec(**overrides) -> PlantedSurfaceSpec:
    """Preset with a strong magnitude x duration interaction.

    Produces near-zero duration slopes at low magnitudes, negative slopes
    at magnitudes >= 15%, and a positive magnitude slope at the shortest
    duration, mimicking the qualitative sign pattern of interest.
    """
    defaults = dict(curvature=(1000.0, 3.0), interaction=-84.75)
    defaults.update(overrides)
    return PlantedSurfaceSpec(**defaults)


def plant_response_surface(spec: PlantedSurfaceSpec, seed: int = 0) -> ConditionDataset:
    """Trial-level dataset over the full 28-condition grid."""
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    records = []
    offsets = rng.normal(0.0, spec.subject_offset_sd, spec.n_subjects)
    for s in range(spec.n_subjects):
        subject = f"S{s:02d}"
        for mag in spec.magnitude_grid:
            for dur in spec.duration_grid:
                mean = spec.mean_value(mag, dur)
                noise = rng.normal(0.0, spec.noise_sd, spec.n_repetitions)
                for rep in range(spec.n_repetitions):
                    records.append(ConditionRecord(
                        subject_id=subject, profile="trapezoid",
                        magnitude_fraction=mag, duration_multiple=dur,
                        repetition_index=rep,
                        value=mean + offsets[s] + noise[rep],
                    ))
        for profile, level in spec.special_levels.items():
            noise = rng.normal(0.0, spec.noise_sd, spec.n_repetitions)
            for rep in range(spec.n_repetitions):
                records.append(ConditionRecord(
                    subject_id=subject, profile=profile,
                    magnitude_fraction=0.0, duration_multiple=0.0,
                    repetition_index=rep,
                    value=level + offsets[s] + noise[rep],
                ))
    return ConditionDataset(records=tuple(records))
