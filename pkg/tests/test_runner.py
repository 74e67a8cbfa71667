import hashlib
import json
import math
import shutil

import numpy as np
import pytest

from simcal.fitness import FitnessValue, combined_fitness
from simcal.optimizer import DEConfig
from simcal.params import Group, ParameterVector
from simcal.runner import (
    CellEvaluator,
    ExperimentSpec,
    RunManifest,
    baseline_fitness,
    build_experiment,
    cell_seed,
    evaluate_candidate,
    generic_values,
    load_manifest,
    plan_cells,
    read_generations,
    run_campaign,
    save_manifest,
)
from simcal.sim import SimResult, register_backend
from simcal.sim.backends import engine_a, generic_assignment
from simcal.tasks import all_scenes, reference_world, synthesize_record, task_scene


@pytest.fixture(scope="module")
def ground_truth():
    return {t: synthesize_record(t) for t in range(1, 11)}


def small_manifest(tmp_path, **kw):
    args = dict(
        experiments=[1, 4], backends=["engine-a", "engine-b"], repeats=2,
        de_config=DEConfig(population_factor=0.5, max_generations=4, seed=5),
        output_dir=tmp_path / "campaign", dataset={"synthetic": {}},
    )
    args.update(kw)
    return RunManifest(**args)


def tree_hashes(root):
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*")) if p.is_file() and p.parent != root and "dataset" not in p.parts
    }


class TestExperimentSpec:
    def test_task_membership(self, ground_truth):
        assert build_experiment(11, ground_truth).task_ids == tuple(range(1, 11))
        assert build_experiment(4, ground_truth).task_ids == (4,)
        scenes = all_scenes()
        with pytest.raises(ValueError):
            ExperimentSpec(11, (1, 2, 3), scenes, ground_truth)
        with pytest.raises(ValueError):
            ExperimentSpec(2, (3,), scenes, ground_truth)

    def test_object_presence_checked(self, ground_truth):
        scenes = dict(all_scenes())
        scenes[1] = task_scene(3)
        with pytest.raises(ValueError, match="object"):
            ExperimentSpec(1, (1,), scenes, ground_truth)

    def test_perfect_match_scores_zero(self, ground_truth):
        spec = build_experiment(1, ground_truth)
        assert evaluate_candidate(spec, "engine-a", reference_world(task_scene(1))).value == 0.0

    def test_baseline_of_generic_ground_truth_is_zero(self):
        gt = {3: synthesize_record(3, generic_assignment("engine-a", task_scene(3)))}
        spec = build_experiment(3, gt)
        assert baseline_fitness(spec, "engine-a").value == 0.0

    def test_experiment_11_is_sum_of_tasks(self, ground_truth):
        spec11 = build_experiment(11, ground_truth)
        reg = spec11.default_registry()
        vec = ParameterVector(reg, generic_values(spec11, "engine-b", reg))
        parts = [evaluate_candidate(build_experiment(t, ground_truth), "engine-b", vec.as_dict()) for t in range(1, 11)]
        parts = [FitnessValue(p.value, t) for t, p in enumerate(parts, start=1)]
        assert evaluate_candidate(spec11, "engine-b", vec).value == pytest.approx(combined_fitness(parts).value, abs=1e-12)

    def test_divergence_is_penalized(self, ground_truth):
        def broken(scene, assignment, duration):
            good = engine_a(scene, assignment, duration)
            return SimResult(good.wrist, good.object_final, "diverged")

        register_backend("broken", broken)
        spec = build_experiment(5, ground_truth)
        out = evaluate_candidate(spec, "broken", reference_world(task_scene(5)))
        assert out.value == 1e4 and out.failure == "diverged"

    def test_evaluator_errors_are_penalized(self, ground_truth):
        def raising(scene, assignment, duration):
            raise ValueError("bad input")

        register_backend("raising", raising)
        spec = build_experiment(1, ground_truth)
        assert evaluate_candidate(spec, "raising", {}).failure == "error"

    def test_short_simulation_padded_with_last_pose(self, ground_truth):
        def short(scene, assignment, duration):
            return engine_a(scene, assignment, duration / 2)

        register_backend("short", short)
        spec = build_experiment(2, ground_truth)
        val = evaluate_candidate(spec, "short", reference_world(task_scene(2))).value
        assert 0 < val < 1

    def test_cell_evaluator_counts_calls(self, ground_truth):
        spec = build_experiment(1, ground_truth)
        reg = spec.default_registry()
        ev = CellEvaluator(spec, "engine-a", reg)
        x = generic_values(spec, "engine-a", reg)
        assert ev(x, 0) == evaluate_candidate(spec, "engine-a", reg.decode(x)).value
        assert ev.calls == 1


class TestPlanning:
    def test_full_protocol_has_1100_cells(self, tmp_path):
        m = RunManifest(
            experiments=list(range(1, 12)), backends=[f"engine-{k}" for k in "abcde"], repeats=10,
            de_config=DEConfig(), output_dir=tmp_path, groups=[Group.SHARED, Group.INDIVIDUAL],
        )
        cells = plan_cells(m)
        assert len(cells) == 1100
        assert len({c.seed for c in cells}) == 1100
        assert len({c.name for c in cells}) == 1100

    def test_seeds_reproducible(self):
        assert cell_seed(1, Group.SHARED, 3, "engine-a", 0) == cell_seed(1, Group.SHARED, 3, "engine-a", 0)
        assert cell_seed(1, Group.SHARED, 3, "engine-a", 0) != cell_seed(2, Group.SHARED, 3, "engine-a", 0)

    def test_cell_naming(self, tmp_path):
        c = plan_cells(small_manifest(tmp_path))[0]
        assert c.name == "gshared_e1_bengine-a_r0"

    def test_bad_manifest(self, tmp_path):
        with pytest.raises(ValueError):
            small_manifest(tmp_path, repeats=0)
        with pytest.raises(ValueError):
            small_manifest(tmp_path, experiments=[12])

    def test_manifest_yaml_round_trip(self, tmp_path):
        m = small_manifest(tmp_path, dataset=tmp_path / "data")
        save_manifest(m, tmp_path / "m.yaml")
        back = load_manifest(tmp_path / "m.yaml")
        assert back.to_dict() == m.to_dict()


class TestCampaign:
    def test_cells_files_and_dominance(self, tmp_path):
        m = small_manifest(tmp_path)
        summary = run_campaign(m)
        assert summary.completed == 8
        for r in summary.results:
            d = m.output_dir / r.cell.name
            final = json.loads((d / "final.json").read_text())
            assert final["termination"] in ("converged", "generation-cap", "time-cap")
            assert final["best_fitness"] <= final["baseline_fitness"]
            gens = read_generations(d)
            bests = [g.best_fitness for g in gens]
            assert all(b <= a for a, b in zip(bests, bests[1:]))
            assert gens[-1].best_fitness == final["best_fitness"]
        rows = (m.output_dir / "summary.csv").read_text().splitlines()
        assert rows[0].startswith("cell,") and len(rows) == 9

    def test_resume_leaves_completed_cells_untouched(self, tmp_path):
        m = small_manifest(tmp_path)
        run_campaign(m)
        before = tree_hashes(m.output_dir)
        # simulate an interrupted cell: half-written temp dir plus a lost cell
        lost = plan_cells(m)[3].name
        shutil.rmtree(m.output_dir / lost)
        (m.output_dir / f".tmp_{lost}").mkdir()
        (m.output_dir / f".tmp_{lost}" / "generations.jsonl").write_text("{partial")
        summary = run_campaign(m, resume=True)
        assert sum(r.skipped for r in summary.results) == 7
        assert tree_hashes(m.output_dir) == before
        assert not list(m.output_dir.glob(".tmp_*"))

    def test_worker_count_does_not_change_results(self, tmp_path):
        a = small_manifest(tmp_path / "a", experiments=[2], repeats=2)
        b = small_manifest(tmp_path / "b", experiments=[2], repeats=2)
        run_campaign(a, workers=1)
        run_campaign(b, workers=2)
        assert tree_hashes(a.output_dir) == tree_hashes(b.output_dir)

    def test_without_injection_still_runs(self, tmp_path):
        m = small_manifest(tmp_path, experiments=[1], backends=["engine-a"], repeats=1, baseline_injection=False)
        (r,) = run_campaign(m).results
        assert math.isfinite(r.best_fitness)
