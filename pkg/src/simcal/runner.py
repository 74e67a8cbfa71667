"""Experiments, candidate evaluation and resumable optimisation campaigns.

A campaign is the cross product (parameter group x experiment x backend x
repeat); each element is a *cell* with its own directory
``g{group}_e{exp}_b{backend}_r{repeat}`` holding ``generations.jsonl`` and
``final.json``. A cell is built in a temporary directory and renamed into
place when complete, so an interrupted cell is simply redone on resume.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import shutil
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import yaml

from . import optimizer
from .fitness import (
    DEFAULT_PENALTY,
    FitnessValue,
    combined_fitness,
    kinematic_fitness,
    object_fitness,
    penalize_failure,
)
from .optimizer import DEConfig, GenerationRecord
from .params import Body, Group, ParameterRegistry, ParameterVector, default_registry
from .sim.backends import SimulationTimeout, generic_assignment, simulate
from .sim.scene import SceneSpec
from .tasks import all_scenes, reference_world, write_synthetic_dataset
from .trajectory import (
    FITNESS_RATE_HZ,
    KINEMATIC_TASKS,
    GroundTruthRecord,
    TimedTrajectory,
    load_ground_truth,
    resample,
)

log = logging.getLogger(__name__)

GROUP_INDEX = {Group.SHARED: 0, Group.INDIVIDUAL: 1}
GENERATIONS_FILE = "generations.jsonl"
FINAL_FILE = "final.json"


@dataclass(frozen=True, eq=False)
class ExperimentSpec:
    experiment_id: int
    task_ids: tuple[int, ...]
    scenes: Mapping[int, SceneSpec]
    ground_truth: Mapping[int, GroundTruthRecord]
    parameter_group: Group = Group.SHARED

    def __post_init__(self):
        object.__setattr__(self, "parameter_group", Group(self.parameter_group))
        ids = tuple(self.task_ids)
        if self.experiment_id == 11:
            if sorted(ids) != list(range(1, 11)):
                raise ValueError("experiment 11 combines exactly tasks 1..10")
        elif ids != (self.experiment_id,):
            raise ValueError(f"experiment {self.experiment_id} must contain only task {self.experiment_id}")
        for t in ids:
            if t not in self.scenes or t not in self.ground_truth:
                raise ValueError(f"task {t}: missing scene or ground truth")
            has_obj = self.scenes[t].object is not None
            if has_obj == (t in KINEMATIC_TASKS):
                raise ValueError(f"task {t}: tasks 1-2 have no object, tasks 3-10 exactly one")
        object.__setattr__(self, "task_ids", ids)
        # reference wrists on the 20 Hz fitness grid
        object.__setattr__(
            self, "_refs", {t: resample(self.ground_truth[t].wrist, FITNESS_RATE_HZ) for t in ids}
        )

    def reference_wrist(self, task_id: int) -> TimedTrajectory:
        return self._refs[task_id]

    def bodies(self) -> list[Body]:
        out: list[Body] = []
        seen = set()
        for t in self.task_ids:
            for b in self.scenes[t].bodies():
                if b.name not in seen:
                    seen.add(b.name)
                    out.append(b)
        return out

    def default_registry(self) -> ParameterRegistry:
        return default_registry(self.parameter_group, self.bodies())


def experiment_task_ids(experiment_id: int) -> tuple[int, ...]:
    if experiment_id == 11:
        return tuple(range(1, 11))
    if 1 <= experiment_id <= 10:
        return (experiment_id,)
    raise ValueError(f"experiment id must be 1..11, got {experiment_id}")


def load_dataset(directory: str | Path, task_ids: Sequence[int] = range(1, 11)) -> dict[int, GroundTruthRecord]:
    root = Path(directory)
    return {t: load_ground_truth(root / f"task{t:02d}", t) for t in task_ids}


def build_experiment(
    experiment_id: int,
    ground_truth: Mapping[int, GroundTruthRecord],
    group: Group | str = Group.SHARED,
    scenes: Mapping[int, SceneSpec] | None = None,
) -> ExperimentSpec:
    tids = experiment_task_ids(experiment_id)
    scenes = scenes if scenes is not None else all_scenes()
    return ExperimentSpec(
        experiment_id, tids, {t: scenes[t] for t in tids}, {t: ground_truth[t] for t in tids}, Group(group)
    )


def _align(sim: TimedTrajectory, ref: TimedTrajectory) -> TimedTrajectory:
    """Re-stamp the simulated wrist onto the reference grid.

    Missing trailing points are scored against the last simulated pose.
    """
    n = len(ref)
    pos = sim.positions[:n]
    quat = sim.orientations[:n]
    if len(pos) < n:
        pad = n - len(pos)
        pos = np.vstack([pos, np.repeat(pos[-1:], pad, axis=0)])
        quat = np.vstack([quat, np.repeat(quat[-1:], pad, axis=0)])
    return TimedTrajectory(sim.body_id, ref.times, pos, quat)


def _task_fitness(spec: ExperimentSpec, task_id: int, backend: str, assignment: Mapping[str, float], penalty: float) -> FitnessValue:
    ref = spec.reference_wrist(task_id)
    try:
        res = simulate(backend, spec.scenes[task_id], assignment, duration=ref.duration)
    except SimulationTimeout:
        return penalize_failure("timeout", penalty, task_id)
    if res.status != "ok":
        return penalize_failure(res.status, penalty, task_id)
    sim = _align(res.wrist, ref)
    gt = spec.ground_truth[task_id]
    if gt.object_final_pose is None:
        return kinematic_fitness(sim, ref, task_id)
    return object_fitness(sim, ref, res.object_final, gt.object_final_pose.position, task_id)


def evaluate_candidate(
    spec: ExperimentSpec,
    backend: str,
    params: ParameterVector | Mapping[str, float],
    penalty: float = DEFAULT_PENALTY,
) -> FitnessValue:
    """Simulate every task of the experiment and score it; failures become the penalty."""
    assignment = params.as_dict() if isinstance(params, ParameterVector) else dict(params)
    parts = []
    for t in spec.task_ids:
        try:
            parts.append(_task_fitness(spec, t, backend, assignment, penalty))
        except (ValueError, FloatingPointError) as exc:
            log.debug("task %d evaluation failed: %s", t, exc)
            parts.append(penalize_failure("error", penalty, t))
    if spec.experiment_id == 11:
        return combined_fitness(parts)
    return parts[0]


def generic_values(spec: ExperimentSpec, backend: str, registry: ParameterRegistry) -> np.ndarray:
    """The backend's default settings as a vector over ``registry``."""
    vals: dict[str, float] = {}
    for t in spec.task_ids:
        vals.update(generic_assignment(backend, spec.scenes[t], registry.names))
    return registry.encode(vals)


def baseline_fitness(
    spec: ExperimentSpec, backend: str, generic_params: ParameterVector | None = None, penalty: float = DEFAULT_PENALTY
) -> FitnessValue:
    if generic_params is None:
        reg = spec.default_registry()
        generic_params = ParameterVector(reg, generic_values(spec, backend, reg))
    return evaluate_candidate(spec, backend, generic_params, penalty)


class CellEvaluator:
    """Picklable ``(x, seed) -> fitness`` closure for the optimiser."""

    def __init__(self, spec: ExperimentSpec, backend: str, registry: ParameterRegistry, penalty: float = DEFAULT_PENALTY):
        self.spec = spec
        self.backend = backend
        self.registry = registry
        self.penalty = penalty
        self.calls = 0

    def __call__(self, x: np.ndarray, seed: int = 0) -> float:
        self.calls += 1
        return evaluate_candidate(self.spec, self.backend, self.registry.decode(x), self.penalty).value


# --- manifest ------------------------------------------------------------------

@dataclass
class RunManifest:
    experiments: list[int]
    backends: list[str]
    repeats: int
    de_config: DEConfig
    output_dir: Path
    dataset: Path | dict | None = None
    groups: list[Group] = field(default_factory=lambda: [Group.SHARED])
    registry: dict[Group, ParameterRegistry] = field(default_factory=dict)
    workers: int = 1
    baseline_injection: bool = True
    clock: str = "virtual"
    virtual_eval_cost: float = 1e-3

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.clock not in ("virtual", "wall"):
            raise ValueError("clock must be 'virtual' or 'wall'")
        self.groups = [Group(g) for g in self.groups]
        self.output_dir = Path(self.output_dir)
        for e in self.experiments:
            experiment_task_ids(e)

    def to_dict(self) -> dict:
        ds = self.dataset
        return {
            "experiments": list(self.experiments),
            "backends": list(self.backends),
            "repeats": self.repeats,
            "groups": [g.value for g in self.groups],
            "de_config": self.de_config.to_dict(),
            "registry": {g.value: r.to_list() for g, r in self.registry.items()} or None,
            "output_dir": str(self.output_dir),
            "dataset": str(ds) if isinstance(ds, Path) else ds,
            "workers": self.workers,
            "baseline_injection": self.baseline_injection,
            "clock": self.clock,
            "virtual_eval_cost": self.virtual_eval_cost,
        }

    @classmethod
    def from_dict(cls, d: Mapping, base_dir: Path | None = None) -> "RunManifest":
        base_dir = base_dir or Path(".")

        def resolve(p):
            p = Path(p)
            return p if p.is_absolute() else base_dir / p

        ds = d.get("dataset")
        if isinstance(ds, str):
            ds = resolve(ds)
        reg = {Group(g): ParameterRegistry.from_list(items) for g, items in (d.get("registry") or {}).items()}
        return cls(
            experiments=[int(e) for e in d["experiments"]],
            backends=list(d["backends"]),
            repeats=int(d.get("repeats", 1)),
            de_config=DEConfig.from_dict(d.get("de_config", {})),
            output_dir=resolve(d["output_dir"]),
            dataset=ds,
            groups=[Group(g) for g in d.get("groups", ["shared"])],
            registry=reg,
            workers=int(d.get("workers", 1)),
            baseline_injection=bool(d.get("baseline_injection", True)),
            clock=d.get("clock", "virtual"),
            virtual_eval_cost=float(d.get("virtual_eval_cost", 1e-3)),
        )


def load_manifest(path: str | Path) -> RunManifest:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    return RunManifest.from_dict(data, path.parent)


def save_manifest(manifest: RunManifest, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(manifest.to_dict(), sort_keys=False), encoding="utf-8")


def resolve_dataset(manifest: RunManifest) -> Path:
    """Path of the ground-truth directory, synthesising it first when requested.

    ``dataset: {synthetic: {backend, noise, seed, repeats}}`` writes the
    built-in tasks simulated with the hidden reference world.
    """
    ds = manifest.dataset
    if isinstance(ds, (str, Path)):
        return Path(ds)
    opts = (ds or {}).get("synthetic", {}) if isinstance(ds, dict) else {}
    target = manifest.output_dir / "dataset"
    if not (target / "task10").exists():
        tmp = manifest.output_dir / ".dataset.tmp"
        shutil.rmtree(tmp, ignore_errors=True)
        write_synthetic_dataset(
            tmp, reference_world(), opts.get("backend", "engine-a"), int(opts.get("repeats", 1)),
            float(opts.get("noise", 0.0)), int(opts.get("seed", 0)),
        )
        shutil.rmtree(target, ignore_errors=True)
        os.replace(tmp, target)
    return target


# --- cells ---------------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    group: Group
    experiment: int
    backend: str
    repeat: int
    seed: int

    @property
    def name(self) -> str:
        return f"g{self.group.value}_e{self.experiment}_b{self.backend}_r{self.repeat}"


def cell_seed(manifest_seed: int, group: Group, experiment: int, backend: str, repeat: int) -> int:
    key = (GROUP_INDEX[Group(group)], experiment, zlib.crc32(backend.encode()), repeat)
    ss = np.random.SeedSequence(entropy=manifest_seed, spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def plan_cells(manifest: RunManifest) -> list[Cell]:
    return [
        Cell(g, e, b, r, cell_seed(manifest.de_config.seed, g, e, b, r))
        for g in manifest.groups
        for e in manifest.experiments
        for b in manifest.backends
        for r in range(manifest.repeats)
    ]


@dataclass
class CellResult:
    cell: Cell
    best_fitness: float
    baseline_fitness: float
    termination: str
    generations: int
    skipped: bool = False


class _VirtualClock:
    def __init__(self, evaluator: CellEvaluator, cost: float):
        self.evaluator = evaluator
        self.cost = cost

    def __call__(self) -> float:
        return self.evaluator.calls * self.cost


def _registry_for(manifest: RunManifest, spec: ExperimentSpec) -> ParameterRegistry:
    return manifest.registry.get(spec.parameter_group) or spec.default_registry()


def run_cell(cell: Cell, manifest: RunManifest, ground_truth: Mapping[int, GroundTruthRecord]) -> CellResult:
    out = manifest.output_dir / cell.name
    if (out / FINAL_FILE).exists():
        final = json.loads((out / FINAL_FILE).read_text(encoding="utf-8"))
        return CellResult(cell, final["best_fitness"], final["baseline_fitness"], final["termination"],
                          final["generations"], skipped=True)

    spec = build_experiment(cell.experiment, ground_truth, cell.group)
    registry = _registry_for(manifest, spec)
    config = replace(manifest.de_config, seed=cell.seed)
    evaluator = CellEvaluator(spec, cell.backend, registry, config.penalty)
    generic = generic_values(spec, cell.backend, registry)
    baseline = evaluate_candidate(spec, cell.backend, registry.decode(generic), config.penalty).value
    evaluator.calls = 0

    tmp = manifest.output_dir / f".tmp_{cell.name}"
    shutil.rmtree(tmp, ignore_errors=True)
    tmp.mkdir(parents=True)
    clock = _VirtualClock(evaluator, manifest.virtual_eval_cost) if manifest.clock == "virtual" else None
    with (tmp / GENERATIONS_FILE).open("w", encoding="utf-8") as fh:
        def emit(rec: GenerationRecord) -> None:
            fh.write(json.dumps(rec.to_dict()) + "\n")

        result = optimizer.run(
            registry, evaluator, config,
            initial=[generic] if manifest.baseline_injection else (),
            clock=clock, on_generation=emit,
        )
    final = {
        "group": cell.group.value,
        "experiment": cell.experiment,
        "backend": cell.backend,
        "repeat": cell.repeat,
        "seed": cell.seed,
        "parameters": registry.names,
        "lower": registry.lower.tolist(),
        "upper": registry.upper.tolist(),
        "best_vector": result.best.values.tolist(),
        "best_fitness": result.fitness,
        "termination": result.termination.value,
        "generations": result.history[-1].generation,
        "evaluations": result.evaluations,
        "baseline_fitness": baseline,
        "generic_vector": generic.tolist(),
    }
    (tmp / FINAL_FILE).write_text(json.dumps(final, indent=1) + "\n", encoding="utf-8")
    shutil.rmtree(out, ignore_errors=True)
    os.replace(tmp, out)
    return CellResult(cell, result.fitness, baseline, result.termination.value, final["generations"])


def _run_cell_job(args) -> CellResult:
    cell, manifest, dataset = args
    gt = load_dataset(dataset, experiment_task_ids(cell.experiment))
    return run_cell(cell, manifest, gt)


@dataclass
class CampaignSummary:
    output_dir: Path
    results: list[CellResult]

    @property
    def completed(self) -> int:
        return len(self.results)

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cell", "group", "experiment", "backend", "repeat", "baseline_fitness",
                        "best_fitness", "termination", "generations"])
            for r in self.results:
                c = r.cell
                w.writerow([c.name, c.group.value, c.experiment, c.backend, c.repeat,
                            repr(r.baseline_fitness), repr(r.best_fitness), r.termination, r.generations])


def run_campaign(
    manifest: RunManifest,
    workers: int | None = None,
    resume: bool = True,
    progress: Callable[[CellResult], None] | None = None,
) -> CampaignSummary:
    """Execute every cell; completed cells are kept when ``resume`` is set."""
    out = manifest.output_dir
    out.mkdir(parents=True, exist_ok=True)
    dataset = resolve_dataset(manifest)
    cells = plan_cells(manifest)
    if not resume:
        for c in cells:
            shutil.rmtree(out / c.name, ignore_errors=True)
    for stale in out.glob(".tmp_*"):
        shutil.rmtree(stale, ignore_errors=True)
    save_manifest(manifest, out / "manifest.yaml")

    workers = workers or manifest.workers
    jobs = [(c, manifest, dataset) for c in cells]
    results: list[CellResult] = []
    if workers <= 1:
        for job in jobs:
            results.append(_run_cell_job(job))
            if progress:
                progress(results[-1])
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for res in pool.map(_run_cell_job, jobs):
                results.append(res)
                if progress:
                    progress(res)
    summary = CampaignSummary(out, results)
    summary.write_csv(out / "summary.csv")
    return summary


def campaign_baselines(manifest: RunManifest) -> list[tuple[str, int, str, float]]:
    """Generic-settings fitness for every (group, experiment, backend)."""
    dataset = resolve_dataset(manifest)
    rows = []
    for g in manifest.groups:
        for e in manifest.experiments:
            spec = build_experiment(e, load_dataset(dataset, experiment_task_ids(e)), g)
            reg = _registry_for(manifest, spec)
            for b in manifest.backends:
                vec = ParameterVector(reg, generic_values(spec, b, reg))
                rows.append((g.value, e, b, baseline_fitness(spec, b, vec, manifest.de_config.penalty).value))
    return rows


def read_generations(cell_dir: str | Path) -> list[GenerationRecord]:
    path = Path(cell_dir) / GENERATIONS_FILE
    with path.open(encoding="utf-8") as fh:
        return [GenerationRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
