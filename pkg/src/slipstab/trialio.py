"""Trial data model, on-disk format, and dataset assembly.

One directory per trial holds ``manifest.json``, ``kinematics.csv``
(time plus per-segment COM x, z and sagittal angle), and ``grf.csv``
(vertical GRF and belt speed per side). Synthetic and recorded trials
share the format. Assembly aggregates per-trial outcomes into a
ConditionDataset and keeps an explicit exclusion log.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bodymodel import SEGMENT_IDS, SubjectAnthropometry, Sex
from .controller import AssistanceCondition, ProfileType
from .dataset import ConditionDataset, ConditionRecord
from .errors import DataError
from .signal import TimeSeries

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MAX_NAN_RUN = 3
DEFAULT_RESAMPLE_RATE = 100.0


@dataclass(frozen=True)
class Trial:
    trial_id: str
    subject_id: str
    condition: AssistanceCondition
    onset: float  # s, perturbation onset
    perturbation_length: float  # s
    perturbed_side: str  # 'left' | 'right'
    sample_rate: float  # Hz
    pos_x: np.ndarray  # (n_segments, n) m
    pos_z: np.ndarray  # (n_segments, n) m
    theta: np.ndarray  # (n_segments, n) rad, sagittal segment angle
    grf_left: np.ndarray  # (n,) N
    grf_right: np.ndarray  # (n,) N
    belt_left: np.ndarray  # (n,) m/s
    belt_right: np.ndarray  # (n,) m/s
    exo_worn: bool = True
    repetition_index: int = 0
    opus_score: int | None = None

    def __post_init__(self):
        n = self.pos_x.shape[1]
        for name in ("pos_z", "theta"):
            if getattr(self, name).shape != (len(SEGMENT_IDS), n):
                raise DataError(f"{name} misaligned with pos_x in trial {self.trial_id}")
        for name in ("grf_left", "grf_right", "belt_left", "belt_right"):
            if len(getattr(self, name)) != n:
                raise DataError(f"{name} misaligned with kinematics in trial {self.trial_id}")
        span = n / self.sample_rate
        if not (0 <= self.onset and self.onset + self.perturbation_length <= span):
            raise DataError(
                f"perturbation [{self.onset}, {self.onset + self.perturbation_length}] "
                f"outside trial span {span} s in trial {self.trial_id}"
            )
        if self.perturbed_side not in ("left", "right"):
            raise DataError(f"bad perturbed_side {self.perturbed_side!r}")
        if self.opus_score is not None and self.opus_score not in (1, 2, 3, 4, 5):
            raise DataError(f"OPUS score must be 1..5, got {self.opus_score}")

    @property
    def duration(self) -> float:
        return self.pos_x.shape[1] / self.sample_rate

    def grf_series(self, side: str) -> TimeSeries:
        data = self.grf_left if side == "left" else self.grf_right
        return TimeSeries(sample_rate=self.sample_rate, samples=data)


def _condition_to_dict(c: AssistanceCondition) -> dict:
    return {
        "profile": c.profile.value,
        "magnitude_fraction": c.magnitude_fraction,
        "duration_multiple": c.duration_multiple,
    }


def _condition_from_dict(d: dict) -> AssistanceCondition:
    return AssistanceCondition(
        profile=ProfileType(d["profile"]),
        magnitude_fraction=d["magnitude_fraction"],
        duration_multiple=d["duration_multiple"],
    )


def write_trial(trial: Trial, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "trial_id": trial.trial_id,
        "subject_id": trial.subject_id,
        "condition": _condition_to_dict(trial.condition),
        "perturbation": {
            "onset_s": trial.onset,
            "length_s": trial.perturbation_length,
            "side": trial.perturbed_side,
        },
        "sample_rate_hz": trial.sample_rate,
        "exo_worn": trial.exo_worn,
        "repetition_index": trial.repetition_index,
        "opus_score": trial.opus_score,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))

    n = trial.pos_x.shape[1]
    times = np.arange(n) / trial.sample_rate
    with open(directory / "kinematics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["time_s"]
        for seg in SEGMENT_IDS:
            header += [f"{seg}_x_m", f"{seg}_z_m", f"{seg}_theta_rad"]
        writer.writerow(header)
        for j in range(n):
            row = [repr(float(times[j]))]
            for i in range(len(SEGMENT_IDS)):
                row += [
                    repr(float(trial.pos_x[i, j])),
                    repr(float(trial.pos_z[i, j])),
                    repr(float(trial.theta[i, j])),
                ]
            writer.writerow(row)

    with open(directory / "grf.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["time_s", "fz_left_N", "fz_right_N", "belt_speed_left_mps", "belt_speed_right_mps"]
        )
        for j in range(n):
            writer.writerow(
                [repr(float(times[j])),
                 repr(float(trial.grf_left[j])), repr(float(trial.grf_right[j])),
                 repr(float(trial.belt_left[j])), repr(float(trial.belt_right[j]))]
            )
    return directory


def _bridge_nan_gaps(name: str, values: np.ndarray) -> np.ndarray:
    """Linearly interpolate NaN runs of up to MAX_NAN_RUN samples."""
    isnan = np.isnan(values)
    if not isnan.any():
        return values
    padded = np.concatenate([[False], isnan, [False]])
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    for start, end in zip(edges[::2], edges[1::2]):
        if end - start > MAX_NAN_RUN:
            raise DataError(
                f"channel {name}: NaN run of {end - start} samples exceeds "
                f"{MAX_NAN_RUN}-sample gap policy"
            )
        if start == 0 or end == len(values):
            raise DataError(f"channel {name}: NaN run touches series boundary")
    good = ~isnan
    out = values.copy()
    out[isnan] = np.interp(np.flatnonzero(isnan), np.flatnonzero(good), values[good])
    log.warning("channel %s: bridged %d NaN sample(s) by linear interpolation",
                name, int(isnan.sum()))
    return out


def _read_csv_columns(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) if x else np.nan for x in row] for row in reader]
    data = np.array(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != len(header):
        raise DataError(f"{path.name}: ragged or empty table")
    return {name: data[:, i] for i, name in enumerate(header)}


def _resample(values: np.ndarray, t_src: np.ndarray, t_dst: np.ndarray) -> np.ndarray:
    return np.interp(t_dst, t_src, values)


def load_trial(directory, resample_rate: float | None = None) -> Trial:
    """Load and validate one trial directory.

    Kinematic and GRF channels are time-aligned; short NaN gaps are
    bridged with a warning; a rate mismatch is resolved by linear
    resampling to ``resample_rate`` (default: the manifest rate).
    """
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
    except FileNotFoundError as exc:
        raise DataError(f"missing manifest.json in {directory}") from exc
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise DataError(
            f"schema version {manifest.get('schema_version')} != {SCHEMA_VERSION} "
            f"in {directory}"
        )

    kin = _read_csv_columns(directory / "kinematics.csv")
    grf = _read_csv_columns(directory / "grf.csv")
    t_kin = kin.pop("time_s")
    t_grf = grf.pop("time_s")
    for name in list(kin):
        kin[name] = _bridge_nan_gaps(name, kin[name])
    for name in list(grf):
        grf[name] = _bridge_nan_gaps(name, grf[name])

    rate = float(manifest["sample_rate_hz"])
    if resample_rate and abs(resample_rate - rate) > 1e-9:
        log.info("resampling %s from %g to %g Hz", directory.name, rate, resample_rate)
        rate = resample_rate
    n = int(round(t_kin[-1] * rate)) + 1
    t_dst = np.arange(n) / rate
    if abs(t_kin[0] - t_grf[0]) > 0.5 / rate:
        raise DataError(f"kinematics and GRF clocks misaligned in {directory}")

    pos_x = np.array([_resample(kin[f"{s}_x_m"], t_kin, t_dst) for s in SEGMENT_IDS])
    pos_z = np.array([_resample(kin[f"{s}_z_m"], t_kin, t_dst) for s in SEGMENT_IDS])
    theta = np.array([_resample(kin[f"{s}_theta_rad"], t_kin, t_dst) for s in SEGMENT_IDS])

    pert = manifest["perturbation"]
    return Trial(
        trial_id=manifest["trial_id"],
        subject_id=manifest["subject_id"],
        condition=_condition_from_dict(manifest["condition"]),
        onset=float(pert["onset_s"]),
        perturbation_length=float(pert["length_s"]),
        perturbed_side=pert["side"],
        sample_rate=rate,
        pos_x=pos_x,
        pos_z=pos_z,
        theta=theta,
        grf_left=_resample(grf["fz_left_N"], t_grf, t_dst),
        grf_right=_resample(grf["fz_right_N"], t_grf, t_dst),
        belt_left=_resample(grf["belt_speed_left_mps"], t_grf, t_dst),
        belt_right=_resample(grf["belt_speed_right_mps"], t_grf, t_dst),
        exo_worn=bool(manifest.get("exo_worn", True)),
        repetition_index=int(manifest.get("repetition_index", 0)),
        opus_score=manifest.get("opus_score"),
    )


@dataclass(frozen=True)
class SessionManifest:
    subject_id: str
    anthropometry: SubjectAnthropometry
    session_index: int  # 1..4
    trial_dirs: tuple[str, ...]  # relative paths, randomized presentation order

    def to_dict(self) -> dict:
        a = self.anthropometry
        return {
            "schema_version": SCHEMA_VERSION,
            "subject_id": self.subject_id,
            "anthropometry": {
                "body_mass_kg": a.body_mass,
                "height_m": a.height,
                "sex": a.sex.value,
                "walking_speed_mps": a.walking_speed,
            },
            "session_index": self.session_index,
            "trials": list(self.trial_dirs),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionManifest":
        a = d["anthropometry"]
        return cls(
            subject_id=d["subject_id"],
            anthropometry=SubjectAnthropometry(
                body_mass=a["body_mass_kg"],
                height=a["height_m"],
                sex=Sex(a.get("sex", "unspecified")),
                walking_speed=a.get("walking_speed_mps", 1.25),
            ),
            session_index=d["session_index"],
            trial_dirs=tuple(d["trials"]),
        )


@dataclass(frozen=True)
class TrialOutcome:
    """Scalar outcome of one processed trial, or its exclusion."""

    subject_id: str
    profile: str
    magnitude_fraction: float
    duration_multiple: float
    repetition_index: int
    value: float | None
    trial_id: str = ""
    excluded: bool = False
    exclusion_reason: str = ""


def assemble_dataset(
    outcomes, outcome_name: str = "wbam_percent_change"
) -> tuple[ConditionDataset, list[dict]]:
    """Aggregate trial outcomes into a ConditionDataset plus exclusion log.

    Every excluded trial appears exactly once in the log; a condition
    whose repetitions are all excluded raises a DataError listing them.
    """
    records = []
    exclusions = []
    per_condition: dict[tuple, list[TrialOutcome]] = {}
    for o in outcomes:
        key = (o.subject_id, o.profile, o.magnitude_fraction, o.duration_multiple)
        per_condition.setdefault(key, []).append(o)
        if o.excluded:
            exclusions.append(
                {"trial_id": o.trial_id, "subject_id": o.subject_id,
                 "reason": o.exclusion_reason}
            )
        else:
            records.append(
                ConditionRecord(
                    subject_id=o.subject_id,
                    profile=o.profile,
                    magnitude_fraction=o.magnitude_fraction,
                    duration_multiple=o.duration_multiple,
                    repetition_index=o.repetition_index,
                    value=o.value,
                )
            )
    for key, group in per_condition.items():
        if all(o.excluded for o in group):
            raise DataError(
                f"condition {key} has zero valid repetitions; excluded trials: "
                f"{[o.trial_id for o in group]}"
            )
    return ConditionDataset(records=tuple(records), outcome=outcome_name), exclusions
