"""End-to-end pipeline: trials -> WBAM metric -> dataset -> surface -> stats.

A run is fully described by a RunConfig (YAML file plus environment
overrides). Trial-level work fans out to a bounded thread pool with
results collected in submission order, and every random draw comes from a
generator keyed on (seed, trial index), so outputs are byte-identical
across reruns and worker counts. All artifacts carry the config hash and
seed for provenance.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .bodymodel import SubjectAnthropometry, attach_exoskeleton_mass, estimate_inertial_params
from .contour import emit_contour_svg
from .controller import (
    DURATION_GRID,
    MAGNITUDE_GRID,
    AssistanceCondition,
    ProfileType,
)
from .dataset import ConditionDataset
from .errors import ConfigError, DataError, SlipstabError
from .signal import butterworth_lowpass, detect_gait_events, differentiate, TimeSeries
from .stats import (
    bonferroni_pairwise,
    icc_from_variances,
    outcome_mixed_model,
    repetition_anova,
)
from .surface import bootstrap_optimum, fit_rbf, find_optimum, surface_grid
from .synth import Perturbation, WalkerScenario, early_stance_onset, generate_trial
from .trialio import Trial, TrialOutcome, assemble_dataset, load_trial
from .wbam import (
    SegmentStateSeries,
    compute_wbam_series,
    partition_strides,
    wbam_range_metric,
)

_ENV_OVERRIDES = {
    "SLIPSTAB_DATA_DIR": ("data_dir", str),
    "SLIPSTAB_OUT_DIR": ("out_dir", str),
    "SLIPSTAB_SEED": ("seed", int),
}

#: slip-response amplitude scale per special (non-grid) profile
_SPECIAL_AMPLITUDE = {"no_exo": 1.9, "none": 1.8, "spline_baseline": 1.5}


@dataclass(frozen=True)
class RunConfig:
    mode: str = "synth"  # 'synth' | 'ingest'
    data_dir: str | None = None  # ingest: root of session manifests
    out_dir: str = "out"
    seed: int = 0
    workers: int = 1
    outcome: str = "wbam"  # 'wbam' | 'opus'
    sample_rate: float = 100.0
    filter_cutoff_hz: float = 6.0
    filter_order: int = 4
    rbf_smoothing: float = 0.4
    rbf_epsilon: float = 0.1
    rbf_kernel: str = "gaussian"
    bootstrap_n: int = 1000
    magnitude_grid: tuple[float, ...] = MAGNITUDE_GRID
    duration_grid: tuple[float, ...] = DURATION_GRID
    include_special_conditions: bool = True
    n_subjects: int = 2
    n_repetitions: int = 2
    trial_duration_s: float = 15.0
    perturbation_stride: int = 6  # stride index carrying the slip
    planted_optimum: tuple[float, float] = (0.159, 3.64)
    planted_curvature: tuple[float, float] = (120.0, 6.0)
    amplitude_noise_sd: float = 0.02  # trial-level jitter of the response scale
    subject_offset_sd: float = 0.04  # subject-level offset of the response scale

    def __post_init__(self):
        if self.mode not in ("synth", "ingest"):
            raise ConfigError(f"mode must be 'synth' or 'ingest', got {self.mode!r}")
        if self.outcome not in ("wbam", "opus"):
            raise ConfigError(f"outcome must be 'wbam' or 'opus', got {self.outcome!r}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.mode == "ingest" and not self.data_dir:
            raise ConfigError("ingest mode requires data_dir")

    @classmethod
    def from_yaml(cls, path, **overrides) -> "RunConfig":
        import os

        try:
            payload = yaml.safe_load(Path(path).read_text()) or {}
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigError(f"config root must be a mapping, got {type(payload).__name__}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for env, (name, conv) in _ENV_OVERRIDES.items():
            if env in os.environ:
                payload[name] = conv(os.environ[env])
        payload.update({k: v for k, v in overrides.items() if v is not None})
        for name in ("magnitude_grid", "duration_grid", "planted_optimum", "planted_curvature"):
            if name in payload:
                payload[name] = tuple(payload[name])
        return cls(**payload)

    #: execution details that do not affect results, kept out of provenance
    _RUNTIME_FIELDS = ("workers", "out_dir")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for name in self._RUNTIME_FIELDS:
            d.pop(name)
        return _jsonable(d)

    @property
    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _jsonable(value):
    """Convert numpy scalars/arrays so json output is stable and portable."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    return value


def states_from_trial(
    trial: Trial, cutoff: float | None = 6.0, order: int = 4
) -> SegmentStateSeries:
    """Segment states from recorded positions and angles.

    Positions and angles are optionally low-pass filtered (zero-phase
    Butterworth), then differentiated with central differences. Pass
    ``cutoff=None`` to skip filtering.
    """

    def channel(row: np.ndarray) -> np.ndarray:
        series = TimeSeries(sample_rate=trial.sample_rate, samples=row)
        if cutoff is not None:
            series = butterworth_lowpass(series, cutoff=cutoff, order=order)
        return series.samples

    def rate(row: np.ndarray) -> np.ndarray:
        return differentiate(
            TimeSeries(sample_rate=trial.sample_rate, samples=row)
        ).samples

    pos_x = np.array([channel(r) for r in trial.pos_x])
    pos_z = np.array([channel(r) for r in trial.pos_z])
    theta = np.array([channel(r) for r in trial.theta])
    return SegmentStateSeries(
        sample_rate=trial.sample_rate,
        pos_x=pos_x,
        pos_z=pos_z,
        vel_x=np.array([rate(r) for r in pos_x]),
        vel_z=np.array([rate(r) for r in pos_z]),
        omega=np.array([rate(r) for r in theta]),
    )


def detect_jump(trial: Trial, threshold: float = 20.0, min_flight_s: float = 0.08) -> bool:
    """True when both feet leave the ground simultaneously after onset."""
    both_off = (trial.grf_left < threshold) & (trial.grf_right < threshold)
    t = np.arange(len(both_off)) / trial.sample_rate
    both_off &= t >= trial.onset
    run = 0
    need = int(round(min_flight_s * trial.sample_rate))
    for flag in both_off:
        run = run + 1 if flag else 0
        if run >= need:
            return True
    return False


def process_trial(
    trial: Trial,
    anthro: SubjectAnthropometry,
    cutoff: float | None = 6.0,
    order: int = 4,
    exo_mass: float = 4.5,
) -> TrialOutcome:
    """WBAM percent-change outcome for one trial, or its exclusion record."""
    base = dict(
        subject_id=trial.subject_id,
        profile="no_exo" if not trial.exo_worn else (
            trial.condition.profile.value
        ),
        magnitude_fraction=trial.condition.magnitude_fraction,
        duration_multiple=trial.condition.duration_multiple,
        repetition_index=trial.repetition_index,
        trial_id=trial.trial_id,
    )
    if detect_jump(trial):
        return TrialOutcome(**base, value=None, excluded=True,
                            exclusion_reason="jump response")
    inertials = estimate_inertial_params(anthro)
    if trial.exo_worn:
        inertials = attach_exoskeleton_mass(inertials, exo_mass)
    states = states_from_trial(trial, cutoff=cutoff, order=order)
    wbam = compute_wbam_series(states, inertials, anthro)
    events = detect_gait_events(trial.grf_series("left"), trial.grf_series("right"))
    partition = partition_strides(events, trial.onset, foot=trial.perturbed_side)
    metric = wbam_range_metric(wbam, partition)
    return TrialOutcome(**base, value=metric.percent_change)


def _planted_amplitude(config: RunConfig, magnitude: float, duration: float) -> float:
    """Slip-response scale with a quadratic minimum at the planted optimum.

    The WBAM range grows monotonically with the response scale, so the
    measured outcome surface has its minimum at the same location.
    """
    m0, d0 = config.planted_optimum
    c_m, c_d = config.planted_curvature
    q = c_m * (magnitude - m0) ** 2 + c_d * (duration - d0) ** 2
    grid_q = [
        c_m * (m - m0) ** 2 + c_d * (d - d0) ** 2
        for m in config.magnitude_grid
        for d in config.duration_grid
    ]
    span = max(grid_q) or 1.0
    return 1.0 + q / span


def _synth_conditions(config: RunConfig) -> list[AssistanceCondition]:
    conditions = [
        AssistanceCondition(
            profile=ProfileType.TRAPEZOID, magnitude_fraction=m, duration_multiple=d
        )
        for m in config.magnitude_grid
        for d in config.duration_grid
    ]
    if config.include_special_conditions:
        conditions += [
            AssistanceCondition(profile=ProfileType.SPLINE_BASELINE),
            AssistanceCondition(profile=ProfileType.NONE),  # worn, unpowered
            AssistanceCondition(profile=ProfileType.NONE),  # not worn; flagged below
        ]
    return conditions


@dataclass(frozen=True)
class SynthTrialPlan:
    trial: Trial
    anthro: SubjectAnthropometry
    opus_score: int


def plan_synth_trials(config: RunConfig) -> list[SynthTrialPlan]:
    """Deterministic synthetic session for every subject/condition/repetition."""
    plans = []
    conditions = _synth_conditions(config)
    n_special = 3 if config.include_special_conditions else 0
    n_grid = len(conditions) - n_special
    for s in range(config.n_subjects):
        anthro = SubjectAnthropometry(body_mass=60.0 + 2.0 * s, height=1.65 + 0.02 * s)
        subject_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1, s]))
        subject_offset = subject_rng.normal(0.0, config.subject_offset_sd)
        for c, condition in enumerate(conditions):
            no_exo = config.include_special_conditions and c == len(conditions) - 1
            if condition.profile is ProfileType.TRAPEZOID:
                amp = _planted_amplitude(
                    config, condition.magnitude_fraction, condition.duration_multiple
                )
            else:
                key = "no_exo" if no_exo else (
                    "spline_baseline"
                    if condition.profile is ProfileType.SPLINE_BASELINE
                    else "none"
                )
                amp = _SPECIAL_AMPLITUDE[key]
            for rep in range(config.n_repetitions):
                rng = np.random.default_rng(
                    np.random.SeedSequence([config.seed, 2, s, c, rep])
                )
                scale = max(
                    amp + subject_offset + rng.normal(0.0, config.amplitude_noise_sd),
                    0.2,
                )
                scenario = WalkerScenario(
                    rate=config.sample_rate,
                    duration=config.trial_duration_s,
                    anthro=anthro,
                    exo_mass=0.0 if no_exo else 4.5,
                )
                onset = early_stance_onset(scenario, config.perturbation_stride)
                scenario = dataclasses.replace(
                    scenario,
                    perturbation=Perturbation(onset=onset),
                    amplitude_scale=scale,
                )
                # perceived stability falls as the slip response grows
                opus = int(np.clip(round(6.0 - 2.5 * scale), 1, 5))
                profile_tag = "noexo" if no_exo else condition.label
                trial = generate_trial(
                    scenario,
                    condition=condition,
                    trial_id=f"S{s:02d}-{profile_tag}-r{rep}",
                    subject_id=f"S{s:02d}",
                    repetition_index=rep,
                    opus_score=opus,
                )
                if no_exo:
                    trial = dataclasses.replace(trial, exo_worn=False)
                plans.append(SynthTrialPlan(trial=trial, anthro=anthro, opus_score=opus))
    return plans


@dataclass(frozen=True)
class ReportBundle:
    config: RunConfig
    wbam_dataset: ConditionDataset
    opus_dataset: ConditionDataset | None
    exclusions: list[dict]
    report: dict
    svg: str

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {}
        paths["report"] = out / "report.json"
        paths["report"].write_text(json.dumps(self.report, sort_keys=True, indent=1))
        paths["wbam_dataset"] = out / "wbam_dataset.json"
        paths["wbam_dataset"].write_text(self.wbam_dataset.to_json())
        if self.opus_dataset is not None:
            paths["opus_dataset"] = out / "opus_dataset.json"
            paths["opus_dataset"].write_text(self.opus_dataset.to_json())
        paths["exclusions"] = out / "exclusions.jsonl"
        paths["exclusions"].write_text(
            "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.exclusions)
        )
        paths["figure"] = out / "surface.svg"
        paths["figure"].write_text(self.svg)
        return paths


def _stage(name: str):
    """Decorator-free stage guard: re-raise with the failing stage named."""

    class _Guard:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and isinstance(exc, SlipstabError):
                exc.args = (f"stage {name}: {exc}",)
            return False

    return _Guard()


def _ingest_trials(config: RunConfig) -> list[tuple[Trial, SubjectAnthropometry]]:
    from .trialio import SessionManifest

    root = Path(config.data_dir)
    if not root.is_dir():
        raise DataError(f"data directory not found: {root}")
    manifests = sorted(root.glob("*/session.json"))
    if not manifests:
        raise DataError(f"no session manifests under {root}")
    out = []
    for mpath in manifests:
        session = SessionManifest.from_dict(json.loads(mpath.read_text()))
        for rel in session.trial_dirs:
            trial = load_trial(mpath.parent / rel, resample_rate=config.sample_rate)
            out.append((trial, session.anthropometry))
    return out


def _stats_battery(data: ConditionDataset) -> dict:
    model = outcome_mixed_model(data)
    out = {
        "mixed_model": {
            "formula": "value ~ 1 + magnitude + duration + magnitude:duration"
                       " + (1 | subject)",
            "method": "REML, profiled variance ratio, Wald z inference",
            "coefficients": {
                name: {
                    "estimate": float(model.coefficients[i]),
                    "se": float(model.standard_errors[i]),
                    "p": float(model.p_values[i]),
                }
                for i, name in enumerate(model.names)
            },
            "subject_variance": model.subject_variance,
            "residual_variance": model.residual_variance,
            "boundary_fit": model.boundary_fit,
            "icc": icc_from_variances(model.subject_variance, model.residual_variance),
        }
    }
    try:
        anova = repetition_anova(data)
        out["repetition_anova"] = {
            "f": anova.f_value,
            "df": [anova.df_effect, anova.df_error],
            "p": anova.p_value,
        }
    except DataError:
        out["repetition_anova"] = None

    profiles = {}
    for profile in ("none", "no_exo", "spline_baseline"):
        values = data.profile_values(profile)
        if values:
            profiles[profile] = values
    cells = data.cells()
    if cells and profiles:
        best_cell = min(cells, key=lambda c: cells[c].mean())
        best = {}
        for r in data.grid_records():
            if r.cell == best_cell:
                best.setdefault(r.subject_id, []).append(r.value)
        profiles["best_grid"] = {s: float(np.mean(v)) for s, v in sorted(best.items())}
        subjects = sorted(set.intersection(*(set(v) for v in profiles.values())))
        if len(subjects) >= 2:
            samples = {
                label: np.array([vals[s] for s in subjects])
                for label, vals in profiles.items()
            }
            out["pairwise"] = [
                {
                    "a": c.label_a,
                    "b": c.label_b,
                    "mean_difference": c.mean_difference,
                    "t": c.t_value,
                    "df": c.df,
                    "p": c.p_value,
                    "p_bonferroni": c.p_adjusted,
                }
                for c in bonferroni_pairwise(samples)
            ]
    return _jsonable(out)


def run_pipeline(config: RunConfig) -> ReportBundle:
    """Execute the full pipeline and return the in-memory report bundle."""
    with _stage("trial-io"):
        if config.mode == "synth":
            plans = plan_synth_trials(config)
            jobs = [(p.trial, p.anthro) for p in plans]
        else:
            jobs = _ingest_trials(config)

    with _stage("wbam"):
        cutoff = config.filter_cutoff_hz
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(
                pool.map(
                    lambda job: process_trial(
                        job[0], job[1], cutoff=cutoff, order=config.filter_order
                    ),
                    jobs,
                )
            )

    with _stage("assemble"):
        wbam_data, exclusions = assemble_dataset(outcomes, "wbam_percent_change")
        opus_data = None
        opus_outcomes = [
            dataclasses.replace(o, value=float(t.opus_score))
            for o, (t, _) in zip(outcomes, jobs)
            if t.opus_score is not None and not o.excluded
        ]
        if opus_outcomes:
            opus_data, _ = assemble_dataset(opus_outcomes, "opus_score")

    with _stage("surface"):
        if config.outcome == "opus":
            if opus_data is None:
                raise DataError("no perceived-stability scores in dataset")
            target, mode = opus_data, "max"
        else:
            target, mode = wbam_data, "min"
        surface = fit_rbf(
            target,
            smoothing=config.rbf_smoothing,
            epsilon=config.rbf_epsilon,
            kernel=config.rbf_kernel,
        )
        boot = bootstrap_optimum(
            target,
            n=config.bootstrap_n,
            seed=config.seed,
            mode=mode,
            smoothing=config.rbf_smoothing,
            epsilon=config.rbf_epsilon,
            kernel=config.rbf_kernel,
        )

    with _stage("stats"):
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            datasets = [wbam_data] + ([opus_data] if opus_data is not None else [])
            batteries = list(pool.map(_stats_battery, datasets))
        stats_out = {"wbam": batteries[0]}
        if opus_data is not None:
            stats_out["opus"] = batteries[1]

    with _stage("report"):
        mags, durs, values = surface_grid(surface)
        cells = target.cells()
        best_cell = (min if mode == "min" else max)(cells, key=lambda c: cells[c].mean())
        svg = emit_contour_svg(
            mags,
            durs,
            values,
            optimum=boot.optimum.point,
            best_condition=best_cell,
            ci_magnitude=boot.ci_magnitude,
            ci_duration=boot.ci_duration,
            title=f"{target.outcome} response surface",
        )
        report = _jsonable(
            {
                "config": config.to_dict(),
                "config_hash": config.config_hash,
                "seed": config.seed,
                "outcome": target.outcome,
                "n_trials": len(outcomes),
                "n_excluded": len(exclusions),
                "surface": surface.metadata(),
                "bootstrap": boot.metadata(),
                "best_grid_condition": list(best_cell),
                "stats": stats_out,
            }
        )
    return ReportBundle(
        config=config,
        wbam_dataset=wbam_data,
        opus_dataset=opus_data,
        exclusions=exclusions,
        report=report,
        svg=svg,
    )
