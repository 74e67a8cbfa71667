"""Recover hidden simulator parameters on the push task.

Ground truth comes from engine-a run with the hidden reference world. Five
Shared-group repeats (N = D, 300 generations) are tuned against it, then the
parameters are ranked by across-repeat spread normalised by bound width.

    python3 scripts/param_recovery.py [--out runs/recovery] [--seed 7]
"""

import argparse
import time
from pathlib import Path

import numpy as np

from simcal import analysis
from simcal.optimizer import DEConfig
from simcal.runner import RunManifest, run_campaign
from simcal.tasks import PUSH_TASK, reference_world, task_scene

TARGETS = ["timestep", "lateral_friction.wood"] + [f"max_joint_velocity.j{j}" for j in range(1, 6)]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/recovery")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    manifest = RunManifest(
        experiments=[PUSH_TASK], backends=["engine-a"], repeats=args.repeats,
        de_config=DEConfig(population_factor=1.0, max_generations=300, seed=args.seed),
        output_dir=Path(args.out), dataset={"synthetic": {}},
    )
    t0 = time.perf_counter()
    summary = run_campaign(manifest, workers=args.workers)
    print(f"{len(summary.results)} repeats in {time.perf_counter() - t0:.0f}s")
    for r in summary.results:
        print(f"  r{r.cell.repeat}: tuned/baseline = {r.best_fitness / r.baseline_fitness:.4f}")

    items = analysis.parameter_importance(manifest.output_dir, None, "engine-a", PUSH_TASK)
    median = float(np.median([p.normalized_std for p in items]))
    hidden = reference_world(task_scene(PUSH_TASK))
    print(f"\n{'parameter':28s} {'norm std':>9s} {'median':>10s} {'hidden':>10s}")
    for p in items:
        mark = "*" if p.parameter in TARGETS else " "
        print(f"{mark}{p.parameter:27s} {p.normalized_std:9.4f} {p.median:10.4g} {hidden.get(p.parameter, float('nan')):10.4g}")
    print(f"median normalized std {median:.4f}")


if __name__ == "__main__":
    main()
