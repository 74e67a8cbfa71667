"""Command line entry point: ``simcal run|baseline|report|synth``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import analysis
from .runner import campaign_baselines, load_manifest, run_campaign
from .tasks import reference_world, write_synthetic_dataset


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    manifest = load_manifest(args.manifest)

    def progress(r):
        tag = "skip" if r.skipped else r.termination
        print(f"{r.cell.name}: baseline={r.baseline_fitness:.6g} best={r.best_fitness:.6g} [{tag}]", flush=True)

    summary = run_campaign(manifest, workers=args.workers, resume=args.resume, progress=progress)
    print(f"{summary.completed} cells -> {manifest.output_dir}")
    return 0


def cmd_baseline(args) -> int:
    manifest = load_manifest(args.manifest)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["group", "experiment", "backend", "baseline_fitness"])
    for g, e, b, v in campaign_baselines(manifest):
        w.writerow([g, e, b, repr(v)])
    return 0


def cmd_report(args) -> int:
    if args.kind == "improvement":
        text = analysis.improvement_csv(analysis.campaign_improvement(args.campaign, args.group))
    elif args.kind == "importance":
        if args.backend is None or args.experiment is None:
            raise SystemExit("report importance needs --backend and --experiment")
        try:
            items = analysis.parameter_importance(args.campaign, args.group, args.backend, args.experiment)
        except analysis.InsufficientDataError as exc:
            print(f"insufficient data: {exc}", file=sys.stderr)
            return 2
        text = analysis.importance_csv(items)
    else:
        if args.experiment is None:
            raise SystemExit("report convergence needs --experiment")
        text = analysis.convergence_csv(analysis.export_convergence(args.campaign, args.experiment, args.group))
    _emit(text, args.out)
    return 0


def cmd_synth(args) -> int:
    write_synthetic_dataset(args.out, reference_world(), args.backend, args.repeats, args.noise, args.seed)
    print(f"wrote ground truth for tasks 1-10 to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simcal", description="Calibrate simulator parameters against recorded motion.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run (or resume) an optimisation campaign")
    r.add_argument("--manifest", required=True)
    r.add_argument("--workers", type=int, default=None)
    r.add_argument("--resume", action="store_true", help="keep completed cells")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("baseline", help="fitness of generic settings for every cell family")
    b.add_argument("--manifest", required=True)
    b.set_defaults(func=cmd_baseline)

    rep = sub.add_parser("report", help="CSV reports over a finished campaign")
    rep.add_argument("kind", choices=["improvement", "importance", "convergence"])
    rep.add_argument("--campaign", required=True)
    rep.add_argument("--backend")
    rep.add_argument("--experiment", type=int)
    rep.add_argument("--group", choices=["shared", "individual"])
    rep.add_argument("--out", help="write to this file instead of stdout")
    rep.set_defaults(func=cmd_report)

    s = sub.add_parser("synth", help="write a synthetic ground-truth dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--backend", default="engine-a")
    s.add_argument("--repeats", type=int, default=1)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
