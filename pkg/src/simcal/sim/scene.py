from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..params import Body
from ..trajectory import Pose

SHAPES = ("cube", "cuboid", "cylinder", "cone")
MATERIALS = ("wood", "plastic")
ROLLING_SHAPES = ("cylinder", "cone")

# Kinova 6-DOF arm segment lengths [m] and nominal masses [kg].
DEFAULT_LINK_LENGTHS = (0.2755, 0.41, 0.2073, 0.0741, 0.0741, 0.16)
DEFAULT_LINK_MASSES = (0.7477, 0.99, 0.6763, 0.463, 0.463, 0.35)
DEFAULT_GRIPPER_MASS = 0.5


@dataclass(frozen=True)
class ObjectSpec:
    name: str
    shape: str
    material: str
    initial_pose: Pose
    radius: float = 0.03  # footprint radius [m]
    height: float = 0.06
    nominal_mass: float = 0.1

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}; expected one of {SHAPES}")
        if self.material not in MATERIALS:
            raise ValueError(f"unknown material {self.material!r}; expected one of {MATERIALS}")
        if not (self.radius > 0 and self.height > 0 and self.nominal_mass > 0):
            raise ValueError("object radius, height and mass must be positive")

    @property
    def rolling(self) -> bool:
        return self.shape in ROLLING_SHAPES

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "shape": self.shape,
            "material": self.material,
            "initial_pose": {
                "position": self.initial_pose.position.tolist(),
                "orientation": self.initial_pose.orientation.tolist(),
            },
            "radius": self.radius,
            "height": self.height,
            "nominal_mass": self.nominal_mass,
        }

    @classmethod
    def from_dict(cls, d) -> "ObjectSpec":
        p = d["initial_pose"]
        return cls(
            d["name"], d["shape"], d["material"], Pose(p["position"], p["orientation"]),
            float(d["radius"]), float(d["height"]), float(d["nominal_mass"]),
        )


@dataclass(frozen=True, eq=False)
class SceneSpec:
    """Arm + optional object on the floor plane z = 0."""

    script_times: np.ndarray
    script_targets: np.ndarray  # (K, 6) joint angles [rad]
    duration: float
    home: np.ndarray = field(default_factory=lambda: np.zeros(6))
    link_lengths: tuple[float, ...] = DEFAULT_LINK_LENGTHS
    link_masses: tuple[float, ...] = DEFAULT_LINK_MASSES
    gripper_mass: float = DEFAULT_GRIPPER_MASS
    object: ObjectSpec | None = None
    name: str = "scene"

    def __post_init__(self):
        t = np.array(self.script_times, dtype=np.float64).reshape(-1)
        q = np.array(self.script_targets, dtype=np.float64).reshape(-1, 6)
        home = np.array(self.home, dtype=np.float64).reshape(6)
        if len(t) != len(q):
            raise ValueError("script times and targets differ in length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("command script times must be strictly increasing")
        if len(self.link_lengths) != 6 or len(self.link_masses) != 6:
            raise ValueError("arm needs 6 link lengths and 6 link masses")
        if self.duration < 0:
            raise ValueError("duration must be non-negative")
        for a in (t, q, home):
            a.setflags(write=False)
        object.__setattr__(self, "script_times", t)
        object.__setattr__(self, "script_targets", q)
        object.__setattr__(self, "home", home)
        object.__setattr__(self, "link_lengths", tuple(float(x) for x in self.link_lengths))
        object.__setattr__(self, "link_masses", tuple(float(x) for x in self.link_masses))

    def bodies(self) -> list[Body]:
        out = [Body(f"link{i + 1}", "link", m) for i, m in enumerate(self.link_masses)]
        out.append(Body("gripper", "gripper", self.gripper_mass))
        out.append(Body("floor", "floor"))
        if self.object is not None:
            out.append(Body(self.object.name, "object", self.object.nominal_mass, self.object.material))
        return out

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "script_times": self.script_times.tolist(),
            "script_targets": self.script_targets.tolist(),
            "duration": self.duration,
            "home": self.home.tolist(),
            "link_lengths": list(self.link_lengths),
            "link_masses": list(self.link_masses),
            "gripper_mass": self.gripper_mass,
            "object": None if self.object is None else self.object.to_dict(),
        }

    @classmethod
    def from_dict(cls, d) -> "SceneSpec":
        return cls(
            np.array(d["script_times"], dtype=np.float64),
            np.array(d["script_targets"], dtype=np.float64).reshape(-1, 6),
            float(d["duration"]),
            np.array(d.get("home", [0.0] * 6)),
            tuple(d.get("link_lengths", DEFAULT_LINK_LENGTHS)),
            tuple(d.get("link_masses", DEFAULT_LINK_MASSES)),
            float(d.get("gripper_mass", DEFAULT_GRIPPER_MASS)),
            None if d.get("object") is None else ObjectSpec.from_dict(d["object"]),
            d.get("name", "scene"),
        )
