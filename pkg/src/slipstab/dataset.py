"""Per-trial outcome records across subjects, conditions, and repetitions.

One record per trial keeps the data at full granularity: the response
surface pools trials per (magnitude, duration) cell, the mixed model uses
per-subject condition means, and the repetition ANOVA averages per
session. The no-exoskeleton, no-assistance, and spline-baseline
conditions have no grid coordinates and are carried by profile label.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DataError

#: profile labels usable in a record
PROFILES = ("trapezoid", "spline_baseline", "none", "no_exo")


@dataclass(frozen=True)
class ConditionRecord:
    subject_id: str
    profile: str  # one of PROFILES
    magnitude_fraction: float  # 0 for non-trapezoid profiles
    duration_multiple: float  # 0 for non-trapezoid profiles
    repetition_index: int
    value: float  # WBAM percent change or OPUS score

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise DataError(f"unknown profile {self.profile!r}")

    @property
    def cell(self) -> tuple[float, float]:
        return (self.magnitude_fraction, self.duration_multiple)


@dataclass(frozen=True)
class ConditionDataset:
    records: tuple[ConditionRecord, ...]
    outcome: str = "wbam_percent_change"

    def __post_init__(self):
        if not self.records:
            raise DataError("empty condition dataset")

    def grid_records(self) -> list[ConditionRecord]:
        return [r for r in self.records if r.profile == "trapezoid"]

    def cells(self) -> dict[tuple[float, float], np.ndarray]:
        """Trial values per (magnitude, duration) cell, subjects pooled."""
        out: dict[tuple[float, float], list[float]] = {}
        for r in self.grid_records():
            out.setdefault(r.cell, []).append(r.value)
        return {cell: np.array(vals) for cell, vals in sorted(out.items())}

    def subject_condition_means(self) -> list[tuple[str, str, float, float, float, float]]:
        """(subject, profile, magnitude, duration, mean, sample variance) rows."""
        groups: dict[tuple, list[float]] = {}
        for r in self.records:
            key = (r.subject_id, r.profile, r.magnitude_fraction, r.duration_multiple)
            groups.setdefault(key, []).append(r.value)
        rows = []
        for key, vals in sorted(groups.items()):
            arr = np.array(vals)
            var = float(arr.var(ddof=1)) if len(arr) > 1 else 0.0
            rows.append((*key, float(arr.mean()), var))
        return rows

    def repetition_table(self) -> tuple[list[str], np.ndarray]:
        """Subjects x repetitions table of mean values over the parameter set."""
        subjects = sorted({r.subject_id for r in self.records})
        reps = sorted({r.repetition_index for r in self.records})
        table = np.full((len(subjects), len(reps)), np.nan)
        for i, s in enumerate(subjects):
            for j, rep in enumerate(reps):
                vals = [
                    r.value
                    for r in self.grid_records()
                    if r.subject_id == s and r.repetition_index == rep
                ]
                if vals:
                    table[i, j] = float(np.mean(vals))
        if np.isnan(table).any():
            raise DataError("incomplete subject x repetition table")
        return subjects, table

    def profile_values(self, profile: str) -> dict[str, float]:
        """Per-subject mean value for one non-grid profile."""
        groups: dict[str, list[float]] = {}
        for r in self.records:
            if r.profile == profile:
                groups.setdefault(r.subject_id, []).append(r.value)
        return {s: float(np.mean(v)) for s, v in sorted(groups.items())}

    def to_json(self) -> str:
        payload = {
            "outcome": self.outcome,
            "records": [asdict(r) for r in self.records],
        }
        return json.dumps(payload, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ConditionDataset":
        payload = json.loads(text)
        records = tuple(ConditionRecord(**r) for r in payload["records"])
        return cls(records=records, outcome=payload.get("outcome", "wbam_percent_change"))
