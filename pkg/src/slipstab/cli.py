"""Command-line interface.

Subcommands:
  synth    write synthetic trial directories and session manifests
  wbam     compute the WBAM range metric for one trial directory
  sweep    run trials through the WBAM stage and save the outcome dataset
  surface  fit the response surface, bootstrap the optimum, emit figure
  stats    run the statistics battery on a saved dataset
  report   run the full pipeline end to end

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .errors import ConfigError, DataError, NumericalError
from .pipeline import (
    ReportBundle,
    RunConfig,
    _jsonable,
    _stats_battery,
    plan_synth_trials,
    process_trial,
    run_pipeline,
)

EXIT_CODES = {ConfigError: 2, DataError: 3, NumericalError: 4}


def _load_config(args) -> RunConfig:
    overrides = {
        "seed": args.seed,
        "out_dir": args.out,
        "workers": args.workers,
        "outcome": {"wbam": "wbam", "opus": "opus", None: None}[args.outcome],
    }
    if args.config:
        return RunConfig.from_yaml(args.config, **overrides)
    return RunConfig(**{k: v for k, v in overrides.items() if v is not None})


def _cmd_synth(args) -> int:
    from .trialio import SessionManifest, write_trial

    config = _load_config(args)
    out = Path(config.out_dir)
    plans = plan_synth_trials(config)
    by_subject: dict[str, list] = {}
    for plan in plans:
        by_subject.setdefault(plan.trial.subject_id, []).append(plan)
    for subject, subject_plans in sorted(by_subject.items()):
        sdir = out / subject
        rel_dirs = []
        for plan in subject_plans:
            write_trial(plan.trial, sdir / plan.trial.trial_id)
            rel_dirs.append(plan.trial.trial_id)
        session = SessionManifest(
            subject_id=subject,
            anthropometry=subject_plans[0].anthro,
            session_index=1,
            trial_dirs=tuple(rel_dirs),
        )
        (sdir / "session.json").write_text(
            json.dumps(session.to_dict(), sort_keys=True, indent=1)
        )
    print(f"wrote {len(plans)} trials for {len(by_subject)} subjects under {out}")
    return 0


def _cmd_wbam(args) -> int:
    from .bodymodel import SubjectAnthropometry
    from .trialio import load_trial

    config = _load_config(args)
    trial = load_trial(args.trial_dir, resample_rate=config.sample_rate)
    session_path = Path(args.trial_dir).parent / "session.json"
    if session_path.exists():
        from .trialio import SessionManifest

        anthro = SessionManifest.from_dict(
            json.loads(session_path.read_text())
        ).anthropometry
    else:
        anthro = SubjectAnthropometry(body_mass=66.4, height=1.748)
    outcome = process_trial(
        trial, anthro, cutoff=config.filter_cutoff_hz, order=config.filter_order
    )
    print(json.dumps(_jsonable(dataclasses.asdict(outcome)), sort_keys=True, indent=1))
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    bundle = run_pipeline(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "wbam_dataset.json").write_text(bundle.wbam_dataset.to_json())
    if bundle.opus_dataset is not None:
        (out / "opus_dataset.json").write_text(bundle.opus_dataset.to_json())
    (out / "exclusions.jsonl").write_text(
        "".join(json.dumps(e, sort_keys=True) + "\n" for e in bundle.exclusions)
    )
    print(f"dataset with {len(bundle.wbam_dataset.records)} records -> {out}")
    return 0


def _dataset_from_file(path):
    from .dataset import ConditionDataset

    try:
        return ConditionDataset.from_json(Path(path).read_text())
    except FileNotFoundError as exc:
        raise DataError(f"dataset file not found: {path}") from exc
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"malformed dataset file {path}: {exc}") from exc


def _cmd_surface(args) -> int:
    import csv

    from .contour import emit_contour_svg
    from .surface import bootstrap_optimum, fit_rbf, surface_grid

    config = _load_config(args)
    data = _dataset_from_file(args.dataset)
    mode = "max" if config.outcome == "opus" else "min"
    surface = fit_rbf(
        data,
        smoothing=config.rbf_smoothing,
        epsilon=config.rbf_epsilon,
        kernel=config.rbf_kernel,
    )
    boot = bootstrap_optimum(
        data,
        n=config.bootstrap_n,
        seed=config.seed,
        mode=mode,
        smoothing=config.rbf_smoothing,
        epsilon=config.rbf_epsilon,
        kernel=config.rbf_kernel,
    )
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "config_hash": config.config_hash,
        "seed": config.seed,
        "surface": surface.metadata(),
        "bootstrap": boot.metadata(),
    }
    (out / "surface.json").write_text(json.dumps(_jsonable(payload), sort_keys=True, indent=1))
    mags, durs, values = surface_grid(surface)
    with open(out / "surface_grid.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["magnitude_fraction", "duration_multiple", "value"])
        for i, m in enumerate(mags):
            for j, d in enumerate(durs):
                writer.writerow([repr(float(m)), repr(float(d)), repr(float(values[i, j]))])
    (out / "surface.svg").write_text(
        emit_contour_svg(
            mags,
            durs,
            values,
            optimum=boot.optimum.point,
            ci_magnitude=boot.ci_magnitude,
            ci_duration=boot.ci_duration,
            title=f"{data.outcome} response surface",
        )
    )
    print(json.dumps(_jsonable(boot.metadata()), sort_keys=True, indent=1))
    return 0


def _cmd_stats(args) -> int:
    config = _load_config(args)
    data = _dataset_from_file(args.dataset)
    battery = _stats_battery(data)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "stats.json").write_text(json.dumps(battery, sort_keys=True, indent=1))
    print(json.dumps(battery, sort_keys=True, indent=1))
    return 0


def _cmd_report(args) -> int:
    config = _load_config(args)
    bundle: ReportBundle = run_pipeline(config)
    paths = bundle.write(config.out_dir)
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slipstab",
        description="Slip-perturbation stability analysis pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--seed", type=int, help="random seed override")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--workers", type=int, help="worker pool size")
        p.add_argument("--outcome", choices=("wbam", "opus"), help="outcome selector")

    common(sub.add_parser("synth", help="write synthetic trial files"))
    p = sub.add_parser("wbam", help="WBAM metric for one trial directory")
    p.add_argument("trial_dir")
    common(p)
    common(sub.add_parser("sweep", help="run trials and save the outcome dataset"))
    p = sub.add_parser("surface", help="fit surface and bootstrap the optimum")
    p.add_argument("dataset", help="dataset JSON from `sweep`")
    common(p)
    p = sub.add_parser("stats", help="statistics battery on a saved dataset")
    p.add_argument("dataset", help="dataset JSON from `sweep`")
    common(p)
    common(sub.add_parser("report", help="full pipeline run"))
    return parser


_COMMANDS = {
    "synth": _cmd_synth,
    "wbam": _cmd_wbam,
    "sweep": _cmd_sweep,
    "surface": _cmd_surface,
    "stats": _cmd_stats,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DataError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES[type(exc)]


if __name__ == "__main__":
    sys.exit(main())
