"""The ten benchmark task scenes and a synthetic ground-truth generator.

Tasks 1-2 move the arm through free space; tasks 3-10 push one object
(cube, cone, cylinder, cuboid in wood and plastic). Waypoints are joint
postures (rad) precomputed by inverse kinematics for the listed
end-effector positions.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.spatial.transform import Rotation

from .params import default_individual_registry
from .sim.backends import simulate
from .sim.scene import ObjectSpec, SceneSpec
from .trajectory import GroundTruthRecord, Pose, TimedTrajectory, write_ground_truth, write_pose_csv, write_trajectory_csv

POSTURES = {
    "air_a": (-0.247, 0.152, 0.336, -0.37, 0.595, 0.3),  # ee (0.40, -0.15, 0.35)
    "air_b": (0.233, 0.463, 0.294, -0.293, 0.275, -0.2),  # ee (0.50, 0.10, 0.25)
    "air_c": (0.549, 0.03, 0.282, -0.08, 0.707, 0.1),  # ee (0.35, 0.20, 0.40)
    "air_d": (0.269, 0.588, 0.295, -0.85, 0.749, 0.0),  # ee (0.45, 0.00, 0.20)
    "air_e": (-0.421, 0.228, 0.446, -0.738, 0.734, 0.25),  # ee (0.30, -0.25, 0.30)
    "air_f": (0.137, 0.422, -0.055, -0.178, 0.665, -0.1),  # ee (0.55, 0.05, 0.35)
    "hi_x": (-0.921, 0.133, 0.575, 0.239, 0.322, 0.0),  # ee (0.25, -0.30, 0.30)
    "pre_x": (0.275, 0.951, 0.222, -0.694, 0.811, 0.1),  # ee (0.40, 0.00, 0.055)
    "push_x": (0.195, 1.043, -0.1, -0.969, 0.622, 0.1),  # ee (0.58, 0.00, 0.055)
    "up_x": (0.061, 0.263, 0.396, -0.316, 0.385, 0.0),  # ee (0.45, 0.00, 0.30)
    "hi_y": (-0.025, 0.424, 0.366, -0.829, 0.686, 0.0),  # ee (0.42, -0.12, 0.25)
    "pre_y": (0.003, 0.98, 0.112, -0.834, 0.775, 0.1),  # ee (0.45, -0.12, 0.055)
    "push_y": (0.108, 0.895, 0.509, -0.32, -0.391, 0.1),  # ee (0.48, 0.08, 0.055)
    "up_y": (0.064, 0.156, 0.545, -0.329, 0.343, 0.0),  # ee (0.40, 0.00, 0.30)
    "hi_d": (0.066, 0.37, 0.465, -0.759, 0.868, 0.0),  # ee (0.35, -0.10, 0.25)
    "pre_d": (0.064, 0.939, 0.271, -0.665, 0.801, 0.1),  # ee (0.37, -0.08, 0.055)
    "push_d": (0.104, 0.941, 0.264, -0.285, -0.191, 0.1),  # ee (0.55, 0.07, 0.055)
    "up_d": (0.062, 0.199, 0.487, -0.325, 0.358, 0.0),  # ee (0.42, 0.00, 0.30)
}

# (shape, material, push route, object xy, footprint radius, height, nominal mass)
OBJECT_TASKS = {
    3: ("cube", "wood", "x", (0.50, 0.0), 0.03, 0.06, 0.12),
    4: ("cube", "plastic", "x", (0.50, 0.0), 0.03, 0.06, 0.05),
    5: ("cone", "wood", "d", (0.45, -0.02), 0.03, 0.08, 0.09),
    6: ("cone", "plastic", "d", (0.45, -0.02), 0.03, 0.08, 0.04),
    7: ("cylinder", "wood", "y", (0.46, -0.05), 0.035, 0.07, 0.14),
    8: ("cylinder", "plastic", "y", (0.46, -0.05), 0.035, 0.07, 0.06),
    9: ("cuboid", "plastic", "x", (0.50, 0.0), 0.04, 0.05, 0.07),
    10: ("cuboid", "wood", "x", (0.50, 0.0), 0.04, 0.05, 0.16),
}

PUSH_TASK = 3

# the lift starts while the gripper still moves, so the object slides free
LIFT_TIME = {"x": 3.8, "d": 4.0, "y": 3.8}


def _script(names, times):
    return np.array(times, dtype=float), np.array([POSTURES[n] for n in names])


def task_scene(task_id: int) -> SceneSpec:
    if task_id == 1:
        t, q = _script(["air_b", "air_c", "air_d", "air_e"], [0.5, 3.0, 5.5, 8.0])
        return SceneSpec(t, q, 10.5, home=POSTURES["air_a"], name="task01")
    if task_id == 2:
        t, q = _script(["air_d", "air_f", "air_a", "air_b"], [0.5, 3.0, 5.5, 8.0])
        return SceneSpec(t, q, 10.5, home=POSTURES["air_c"], name="task02")
    if task_id not in OBJECT_TASKS:
        raise ValueError(f"unknown task {task_id}")
    shape, material, route, xy, radius, height, mass = OBJECT_TASKS[task_id]
    t, q = _script([f"pre_{route}", f"push_{route}", f"up_{route}"], [0.5, 3.5, LIFT_TIME[route]])
    obj = ObjectSpec(
        f"{shape}_{material}", shape, material, Pose([xy[0], xy[1], height / 2]), radius, height, mass
    )
    return SceneSpec(t, q, 8.5, home=POSTURES[f"hi_{route}"], object=obj, name=f"task{task_id:02d}")


def all_scenes() -> dict[int, SceneSpec]:
    return {k: task_scene(k) for k in range(1, 11)}


def reference_world(scene: SceneSpec | None = None) -> dict[str, float]:
    """Hidden "real world" parameters used to synthesise ground truth."""
    out = {
        "timestep": 0.012,
        "lateral_friction.gripper": 0.8,
        "lateral_friction.floor": 0.6,
        "lateral_friction.wood": 0.2,
        "lateral_friction.plastic": 0.14,
        "rolling_friction.gripper": 0.02,
        "rolling_friction.floor": 0.02,
        "rolling_friction.wood": 0.03,
        "rolling_friction.plastic": 0.02,
        "sliding_friction.gripper": 0.05,
        "sliding_friction.floor": 0.05,
        "sliding_friction.wood": 0.08,
        "sliding_friction.plastic": 0.06,
        "restitution.gripper": 0.3,
        "restitution.floor": 0.3,
        "restitution.wood": 0.25,
        "restitution.plastic": 0.4,
    }
    for prop in ("linear_damping", "angular_damping"):
        for cid in ("gripper", "floor", "wood", "plastic"):
            out[f"{prop}.{cid}"] = 0.05
    torques = (3000, 2500, 2000, 1200, 1000, 800)
    vels = (28.0, 33.0, 24.0, 36.0, 30.0, 18.0)
    damp = (0.05, 0.08, 0.06, 0.04, 0.03, 0.02)
    for j in range(6):
        out[f"max_joint_torque.j{j + 1}"] = float(torques[j])
        out[f"max_joint_velocity.j{j + 1}"] = vels[j]
        out[f"joint_damping.j{j + 1}"] = damp[j]
    mass_scale = (1.1, 0.95, 1.05, 0.9, 1.2, 1.0)
    scenes = [scene] if scene is not None else list(all_scenes().values())
    for sc in scenes:
        for i, m in enumerate(sc.link_masses):
            out[f"mass.link{i + 1}"] = m * mass_scale[i]
        out["mass.gripper"] = sc.gripper_mass * 0.92
        if sc.object is not None:
            out[f"mass.{sc.object.name}"] = sc.object.nominal_mass * 1.15
    return out


def synthesize_record(
    task_id: int,
    world: Mapping[str, float] | None = None,
    backend: str = "engine-a",
    noise: float = 0.0,
    rng: np.random.Generator | None = None,
) -> GroundTruthRecord:
    """Ground truth for one task simulated with hidden parameters.

    ``noise`` adds isotropic Gaussian position noise [m] to the wrist and
    the final object position.
    """
    scene = task_scene(task_id)
    world = dict(world if world is not None else reference_world())
    res = simulate(backend, scene, world)
    if res.status != "ok":
        raise RuntimeError(f"task {task_id}: synthetic ground truth simulation {res.status}")
    rng = rng if rng is not None else np.random.default_rng(task_id)
    pos = res.wrist.positions + (rng.normal(0.0, noise, res.wrist.positions.shape) if noise else 0.0)
    wrist = TimedTrajectory("wrist", res.wrist.times, pos, res.wrist.orientations)
    obj = None
    if res.object_final is not None:
        opos = res.object_final + (rng.normal(0.0, noise, 3) if noise else 0.0)
        obj = Pose(opos, Rotation.from_euler("z", res.object_yaw).as_quat())
    return GroundTruthRecord(task_id, wrist, obj, 1)


def write_synthetic_dataset(
    directory: str | Path,
    world: Mapping[str, float] | None = None,
    backend: str = "engine-a",
    repeats: int = 1,
    noise: float = 0.0,
    seed: int = 0,
    tasks=range(1, 11),
) -> Path:
    """Write ``task01`` .. ``task10`` directories of ground-truth CSVs.

    With ``repeats > 1`` every repeat gets independent noise and is written
    as ``wrist_rNN.csv`` / ``object_final_rNN.csv``.
    """
    root = Path(directory)
    rng = np.random.default_rng(seed)
    for tid in tasks:
        d = root / f"task{tid:02d}"
        if repeats == 1:
            write_ground_truth(synthesize_record(tid, world, backend, noise, rng), d)
            continue
        d.mkdir(parents=True, exist_ok=True)
        for r in range(1, repeats + 1):
            rec = synthesize_record(tid, world, backend, noise, rng)
            write_trajectory_csv(rec.wrist, d / f"wrist_r{r:02d}.csv")
            if rec.object_final_pose is not None:
                write_pose_csv(rec.object_final_pose, d / f"object_final_r{r:02d}.csv")
    return root


def individual_names() -> list[str]:
    """Every tunable name across all ten scenes."""
    names: list[str] = []
    for sc in all_scenes().values():
        for n in default_individual_registry(sc.bodies()).names:
            if n not in names:
                names.append(n)
    return names
