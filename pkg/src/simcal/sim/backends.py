"""Backend registry, parameter-to-engine mapping and the ``simulate`` entry point."""

from __future__ import annotations

import functools
import json
import math
import subprocess
import sys
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from ..params import ParameterVector, default_individual_registry
from ..trajectory import FITNESS_RATE_HZ, Pose, TimedTrajectory
from . import engines
from .scene import SceneSpec

TORQUE_SCALE = 0.05  # engine torque units -> N*m for the acceleration cap

GENERIC_SETTINGS = {
    "engine-a": {
        "timestep": 0.0041,
        "max_joint_torque": 2000.0,
        "max_joint_velocity": 20.0,
        "lateral_friction": 0.5,
        "joint_damping": 0.1,
        "rolling_friction": 0.01,
        "sliding_friction": 0.01,
        "restitution": 0.2,
        "linear_damping": 0.04,
        "angular_damping": 0.04,
    },
    "engine-b": {
        "timestep": 0.05,
        "max_joint_torque": 1500.0,
        "max_joint_velocity": 25.0,
        "lateral_friction": 0.7,
        "joint_damping": 0.2,
        "rolling_friction": 0.02,
        "sliding_friction": 0.02,
        "restitution": 0.3,
        "linear_damping": 0.02,
        "angular_damping": 0.02,
    },
}


class UnknownBackendError(KeyError):
    pass


class SimulationTimeout(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SimResult:
    wrist: TimedTrajectory
    object_final: np.ndarray | None
    status: str = "ok"
    object_yaw: float = 0.0

    def __post_init__(self):
        if self.status not in ("ok", "diverged", "non-finite"):
            raise ValueError(f"bad status {self.status!r}")
        if self.object_final is not None:
            o = np.array(self.object_final, dtype=np.float64).reshape(3)
            o.setflags(write=False)
            object.__setattr__(self, "object_final", o)
            if self.status == "ok" and not np.all(np.isfinite(o)):
                raise ValueError("status ok requires finite object position")

    def __eq__(self, other):
        if not isinstance(other, SimResult):
            return NotImplemented
        same_obj = (self.object_final is None and other.object_final is None) or (
            self.object_final is not None and other.object_final is not None
            and np.array_equal(self.object_final, other.object_final)
        )
        return self.wrist == other.wrist and same_obj and self.status == other.status and self.object_yaw == other.object_yaw

    @property
    def object_final_pose(self) -> Pose | None:
        if self.object_final is None:
            return None
        return Pose(self.object_final, Rotation.from_euler("z", self.object_yaw).as_quat())

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "wrist": {
                "t": self.wrist.times.tolist(),
                "position": self.wrist.positions.tolist(),
                "orientation": self.wrist.orientations.tolist(),
            },
            "object_final": None if self.object_final is None else self.object_final.tolist(),
            "object_yaw": self.object_yaw,
        }

    @classmethod
    def from_dict(cls, d) -> "SimResult":
        w = d["wrist"]
        return cls(
            TimedTrajectory("wrist", w["t"], w["position"], w["orientation"]),
            d.get("object_final"),
            d.get("status", "ok"),
            float(d.get("object_yaw", 0.0)),
        )


@functools.lru_cache(maxsize=256)
def _scene_names(scene: SceneSpec) -> tuple[str, ...]:
    return tuple(default_individual_registry(scene.bodies()).names)


def generic_assignment(backend: str, scene: SceneSpec, names: Sequence[str] | None = None) -> dict[str, float]:
    """The backend's out-of-the-box values for every tunable name of ``scene``.

    Masses default to the nominal body masses.
    """
    settings = GENERIC_SETTINGS.get(backend, GENERIC_SETTINGS["engine-a"])
    masses = {b.name: b.nominal_mass for b in scene.bodies()}
    if names is None:
        names = _scene_names(scene)
    out = {}
    for n in names:
        prop, _, which = n.partition(".")
        if prop == "mass":
            if which in masses:
                out[n] = masses[which]
        else:
            out[n] = float(settings[prop])
    return out


@dataclass(frozen=True)
class EngineModel:
    """Flat arrays handed to the numba kernel."""

    dt: float
    L: np.ndarray
    vmax: np.ndarray
    amax: np.ndarray
    jdamp: np.ndarray
    obj: np.ndarray
    obj_init: np.ndarray
    script_t: np.ndarray
    script_q: np.ndarray
    home: np.ndarray


def effective_inertia(scene: SceneSpec, link_masses: Sequence[float], gripper_mass: float) -> np.ndarray:
    """Per-joint inertia surrogate: downstream mass times squared half-reach."""
    L = np.asarray(scene.link_lengths)
    m = np.asarray(link_masses, dtype=np.float64)
    out = np.empty(6)
    for j in range(6):
        reach = 0.5 * L[j:].sum() + 0.05
        out[j] = (m[j:].sum() + gripper_mass) * reach ** 2
    return out


def build_model(scene: SceneSpec, assignment: Mapping[str, float], backend: str = "engine-a") -> EngineModel:
    """Merge ``assignment`` over the backend's generic values and pack engine inputs."""
    a = generic_assignment(backend, scene)
    a.update({k: float(v) for k, v in assignment.items()})
    dt = a["timestep"]
    if not dt > 0:
        raise ValueError("timestep must be positive")
    joints = range(1, 7)
    vmax = np.radians([a[f"max_joint_velocity.j{j}"] for j in joints])
    link_m = [a[f"mass.link{j}"] for j in joints]
    m_grip = a["mass.gripper"]
    if min(link_m) <= 0 or m_grip <= 0:
        raise ValueError("masses must be positive")
    torque = np.array([a[f"max_joint_torque.j{j}"] for j in joints])
    amax = TORQUE_SCALE * torque / effective_inertia(scene, link_m, m_grip)
    jdamp = np.array([a[f"joint_damping.j{j}"] for j in joints])

    obj = np.zeros(engines.N_OBJ_PROPS)
    obj_init = np.zeros(3)
    o = scene.object
    if o is not None:
        mat = o.material
        m_obj = a[f"mass.{o.name}"]
        obj[engines.O_HAS] = 1.0
        obj[engines.O_RADIUS] = o.radius
        obj[engines.O_HEIGHT] = o.height
        obj[engines.O_ROLLING] = 1.0 if o.rolling else 0.0
        obj[engines.O_RATIO] = m_grip / (m_grip + m_obj)
        # the object's own surface dominates the object-floor pair coefficient
        obj[engines.O_MU_SLIDE] = 0.9 * a[f"lateral_friction.{mat}"] + 0.1 * a["lateral_friction.floor"]
        obj[engines.O_MU_ROLL] = 0.9 * a[f"rolling_friction.{mat}"] + 0.1 * a["rolling_friction.floor"]
        obj[engines.O_MU_SPIN] = 0.5 * (a[f"sliding_friction.{mat}"] + a["sliding_friction.floor"])
        obj[engines.O_COUPLING] = min(1.0, math.sqrt(a["lateral_friction.gripper"] * a[f"lateral_friction.{mat}"]))
        obj[engines.O_RESTITUTION] = math.sqrt(a["restitution.gripper"] * a[f"restitution.{mat}"])
        obj[engines.O_LIN_DAMP] = a[f"linear_damping.{mat}"]
        obj[engines.O_ANG_DAMP] = a[f"angular_damping.{mat}"]
        yaw = Rotation.from_quat(o.initial_pose.orientation).as_euler("zyx")[0]
        obj_init[:] = (o.initial_pose.position[0], o.initial_pose.position[1], yaw)

    return EngineModel(
        dt, np.asarray(scene.link_lengths, dtype=np.float64), vmax, amax, jdamp, obj, obj_init,
        np.ascontiguousarray(scene.script_times), np.ascontiguousarray(scene.script_targets).reshape(-1, 6),
        np.ascontiguousarray(scene.home),
    )


def _run_reference(semi_implicit: bool, stiff: bool, scene: SceneSpec, model: EngineModel, duration: float) -> SimResult:
    n = int(math.floor(duration * FITNESS_RATE_HZ + 1e-9)) + 1
    wrist, frames, final, status, k = engines.run_episode(
        model.dt, n, 1.0 / FITNESS_RATE_HZ, model.L, model.vmax, model.amax, model.jdamp,
        model.obj, model.obj_init, semi_implicit, stiff, model.script_t, model.script_q, model.home,
    )
    k = max(int(k), 1)
    times = np.arange(k) / FITNESS_RATE_HZ
    # samples are recorded before the failing step, so they are all finite
    status_name = engines.STATUS_NAMES[int(status)]
    quats = Rotation.from_matrix(frames[:k]).as_quat()
    traj = TimedTrajectory("wrist", times, wrist[:k], quats)
    obj_final = None
    yaw = 0.0
    if scene.object is not None:
        obj_final = np.array([final[0], final[1], scene.object.height / 2])
        yaw = float(final[2])
        if not np.all(np.isfinite(obj_final)) and status_name == "ok":
            status_name = "non-finite"
    return SimResult(traj, obj_final, status_name, yaw)


def engine_a(scene: SceneSpec, assignment: Mapping[str, float], duration: float) -> SimResult:
    return _run_reference(False, False, scene, build_model(scene, assignment, "engine-a"), duration)


def engine_b(scene: SceneSpec, assignment: Mapping[str, float], duration: float) -> SimResult:
    return _run_reference(True, True, scene, build_model(scene, assignment, "engine-b"), duration)


Backend = Callable[[SceneSpec, Mapping[str, float], float], SimResult]
_BACKENDS: dict[str, Backend] = {"engine-a": engine_a, "engine-b": engine_b}


def register_backend(name: str, backend: Backend) -> None:
    _BACKENDS[name] = backend


def get_backend(name: str) -> Backend:
    try:
        return _BACKENDS[name]
    except KeyError:
        raise UnknownBackendError(f"backend {name!r} is not registered; known: {sorted(_BACKENDS)}") from None


def backend_names() -> list[str]:
    return sorted(_BACKENDS)


def simulate(
    backend: str, scene: SceneSpec, params: ParameterVector | Mapping[str, float], duration: float | None = None
) -> SimResult:
    """Run ``scene`` on a registered backend; deterministic for equal inputs."""
    fn = get_backend(backend)
    assignment = params.as_dict() if isinstance(params, ParameterVector) else dict(params)
    return fn(scene, assignment, scene.duration if duration is None else float(duration))


def encode_request(backend: str, scene: SceneSpec, assignment: Mapping[str, float], duration: float) -> str:
    return json.dumps(
        {"backend": backend, "scene": scene.to_dict(), "params": dict(assignment), "duration": duration},
        sort_keys=True,
    )


def decode_request(line: str) -> tuple[str, SceneSpec, dict[str, float], float]:
    d = json.loads(line)
    return d.get("backend", "engine-a"), SceneSpec.from_dict(d["scene"]), d["params"], float(d["duration"])


class ExternalBackend:
    """Runs a simulator process speaking the one-line JSON protocol over stdio."""

    def __init__(self, command: Sequence[str], name: str = "external", timeout: float = 60.0):
        self.command = list(command)
        self.name = name
        self.timeout = timeout

    def __call__(self, scene: SceneSpec, assignment: Mapping[str, float], duration: float) -> SimResult:
        request = encode_request(self.name, scene, assignment, duration) + "\n"
        try:
            proc = subprocess.run(
                self.command, input=request, capture_output=True, text=True, timeout=self.timeout, check=True
            )
        except subprocess.TimeoutExpired as exc:
            raise SimulationTimeout(f"{self.name} did not answer within {self.timeout}s") from exc
        line = proc.stdout.strip().splitlines()[0]
        return SimResult.from_dict(json.loads(line))


def serve_once(engine: str = "engine-a", stdin=None, stdout=None) -> None:
    """Answer a single protocol request using a reference engine."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    _, scene, params, duration = decode_request(stdin.readline())
    result = get_backend(engine)(scene, params, duration)
    stdout.write(json.dumps(result.to_dict()) + "\n")
    stdout.flush()
