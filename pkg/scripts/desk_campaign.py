"""Run the desk-scale campaign and write the three CSV reports next to it.

    python3 scripts/desk_campaign.py [--manifest scripts/desk_manifest.yaml] [--workers 2]
"""

import argparse
from pathlib import Path

from simcal import analysis
from simcal.runner import load_manifest, run_campaign


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--manifest", default=str(Path(__file__).with_name("desk_manifest.yaml")))
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()

    manifest = load_manifest(args.manifest)
    summary = run_campaign(manifest, workers=args.workers, progress=lambda r: print(
        f"{r.cell.name:32s} baseline {r.baseline_fitness:.5f} tuned {r.best_fitness:.5f} {r.termination}"
    ))
    out = summary.output_dir
    (out / "improvement.csv").write_text(analysis.improvement_csv(analysis.campaign_improvement(out)))
    for e in manifest.experiments:
        (out / f"convergence_e{e}.csv").write_text(analysis.convergence_csv(analysis.export_convergence(out, e)))
        for b in manifest.backends:
            items = analysis.parameter_importance(out, None, b, e)
            (out / f"importance_e{e}_{b}.csv").write_text(analysis.importance_csv(items))
    print((out / "improvement.csv").read_text())


if __name__ == "__main__":
    main()
