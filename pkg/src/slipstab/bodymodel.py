"""Segment inertial parameters and whole-body center-of-mass state.

The segmented body model (trunk with head folded in, pelvis, and left/right
upper arms, forearms, hands, thighs, shanks, feet) is scaled from subject
mass and height through a proportional parameter table. The default table
ships with the package (``data/segment_parameters.csv``) and follows
widely used anthropometric proportion tables; it can be replaced by any CSV
with the same columns.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .errors import ConfigError

SEGMENT_IDS = (
    "trunk",
    "pelvis",
    "upper_arm_l",
    "upper_arm_r",
    "forearm_l",
    "forearm_r",
    "hand_l",
    "hand_r",
    "thigh_l",
    "thigh_r",
    "shank_l",
    "shank_r",
    "foot_l",
    "foot_r",
)

#: Segments that carry a share of the exoskeleton mass.
EXO_HOST_SEGMENTS = ("thigh_l", "thigh_r", "trunk")


class Sex(enum.Enum):
    FEMALE = "female"
    MALE = "male"
    UNSPECIFIED = "unspecified"


@dataclass(frozen=True)
class SubjectAnthropometry:
    """Subject mass, stature and average treadmill speed."""

    body_mass: float  # kg
    height: float  # m
    sex: Sex = Sex.UNSPECIFIED
    walking_speed: float = 1.25  # m/s

    def __post_init__(self):
        if self.body_mass <= 0:
            raise ConfigError(f"body_mass must be positive, got {self.body_mass}")
        if self.height <= 0:
            raise ConfigError(f"height must be positive, got {self.height}")
        if self.walking_speed <= 0:
            raise ConfigError(
                f"walking_speed must be positive, got {self.walking_speed}"
            )


@dataclass(frozen=True)
class SegmentParameters:
    mass_fraction: float
    com_fraction: float  # COM location from proximal end, fraction of length
    gyration_fraction: float  # sagittal gyration radius, fraction of length
    length_fraction: float  # segment length, fraction of stature


@dataclass(frozen=True)
class SegmentParameterTable:
    """Per-segment proportional parameters for the segmented body model."""

    segments: dict[str, SegmentParameters]

    def __post_init__(self):
        missing = [s for s in SEGMENT_IDS if s not in self.segments]
        if missing:
            raise ConfigError(f"parameter table missing segments: {missing}")
        total = sum(p.mass_fraction for p in self.segments.values())
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"segment mass fractions sum to {total!r}, expected 1.0")
        for name, p in self.segments.items():
            for attr in ("mass_fraction", "com_fraction", "gyration_fraction", "length_fraction"):
                v = getattr(p, attr)
                if not 0.0 < v < 1.0:
                    raise ConfigError(f"{name}.{attr}={v} outside (0, 1)")

    @classmethod
    def from_csv(cls, path) -> "SegmentParameterTable":
        segments = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                segments[row["segment_id"]] = SegmentParameters(
                    mass_fraction=float(row["mass_fraction"]),
                    com_fraction=float(row["com_fraction"]),
                    gyration_fraction=float(row["gyration_fraction"]),
                    length_fraction=float(row["length_fraction"]),
                )
        return cls(segments)

    @classmethod
    def default(cls) -> "SegmentParameterTable":
        ref = resources.files("slipstab") / "data" / "segment_parameters.csv"
        with resources.as_file(ref) as path:
            return cls.from_csv(path)


@dataclass(frozen=True)
class SegmentInertia:
    mass: float  # kg, including any attached exoskeleton share
    moment_sagittal: float  # kg m^2 about the segment COM, mediolateral axis
    added_mass: float = 0.0  # kg, exoskeleton contribution included in `mass`


@dataclass(frozen=True)
class SegmentInertialSet:
    """Per-segment mass and sagittal moment of inertia."""

    segments: dict[str, SegmentInertia]

    @property
    def total_mass(self) -> float:
        return sum(s.mass for s in self.segments.values())

    @property
    def total_added_mass(self) -> float:
        return sum(s.added_mass for s in self.segments.values())

    def masses(self, order=SEGMENT_IDS) -> np.ndarray:
        return np.array([self.segments[s].mass for s in order])

    def moments(self, order=SEGMENT_IDS) -> np.ndarray:
        return np.array([self.segments[s].moment_sagittal for s in order])


@dataclass(frozen=True)
class ComState:
    """Planar COM position (anterior x, vertical z) and velocity."""

    position: tuple[float, float]  # m
    velocity: tuple[float, float]  # m/s

    def __post_init__(self):
        vals = (*self.position, *self.velocity)
        if not all(np.isfinite(vals)):
            raise ConfigError(f"non-finite COM state: {self}")


def estimate_inertial_params(
    anthro: SubjectAnthropometry, table: SegmentParameterTable | None = None
) -> SegmentInertialSet:
    """Scale the parameter table by subject mass and height.

    Segment mass is ``mass_fraction * body_mass``; the sagittal moment of
    inertia about the segment COM is ``mass * (gyration_fraction * length)^2``
    with ``length = length_fraction * height``.
    """
    if table is None:
        table = SegmentParameterTable.default()
    segments = {}
    for name in SEGMENT_IDS:
        p = table.segments[name]
        mass = p.mass_fraction * anthro.body_mass
        length = p.length_fraction * anthro.height
        moment = mass * (p.gyration_fraction * length) ** 2
        segments[name] = SegmentInertia(mass=mass, moment_sagittal=moment)
    return SegmentInertialSet(segments)


def attach_exoskeleton_mass(
    inertials: SegmentInertialSet, exo_mass: float
) -> SegmentInertialSet:
    """Distribute the device mass evenly over both thighs and the trunk.

    The added mass is lumped at each host segment's COM: the gyration
    radius is kept, so the segment moment scales with the mass ratio.
    """
    if exo_mass < 0:
        raise ConfigError(f"exo_mass must be non-negative, got {exo_mass}")
    if exo_mass == 0:
        return inertials
    share = exo_mass / len(EXO_HOST_SEGMENTS)
    segments = dict(inertials.segments)
    for name in EXO_HOST_SEGMENTS:
        seg = segments[name]
        new_mass = seg.mass + share
        segments[name] = SegmentInertia(
            mass=new_mass,
            moment_sagittal=seg.moment_sagittal * new_mass / seg.mass,
            added_mass=seg.added_mass + share,
        )
    return SegmentInertialSet(segments)


def whole_body_com(
    inertials: SegmentInertialSet, states: list[ComState]
) -> ComState:
    """Mass-weighted average of per-segment COM states (canonical segment order)."""
    if len(states) != len(SEGMENT_IDS):
        raise ConfigError(
            f"expected {len(SEGMENT_IDS)} segment states, got {len(states)}"
        )
    m = inertials.masses()
    pos = np.array([s.position for s in states])
    vel = np.array([s.velocity for s in states])
    total = m.sum()
    p = m @ pos / total
    v = m @ vel / total
    return ComState(position=tuple(p), velocity=tuple(v))
