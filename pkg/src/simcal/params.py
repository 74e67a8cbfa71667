"""Tunable simulator parameters: descriptors, registries and vectors."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np


class Group(str, Enum):
    SHARED = "shared"
    INDIVIDUAL = "individual"


# Parameter bounds.
TIMESTEP_BOUNDS = (0.001, 0.05)
MASS_SCALE_BOUNDS = (0.7, 1.3)
JOINT_TORQUE_BOUNDS = (100.0, 9000.0)
JOINT_VELOCITY_BOUNDS = (10.0, 40.0)
FRICTION_BOUNDS = (0.0001, 1.25)
UNIT_INTERVAL_BOUNDS = (0.0001, 0.9)  # joint damping, restitution, linear/angular damping

CONTACT_PROPERTIES_INDIVIDUAL = (
    ("rolling_friction", FRICTION_BOUNDS, "1"),
    ("sliding_friction", FRICTION_BOUNDS, "1"),
    ("restitution", UNIT_INTERVAL_BOUNDS, "1"),
    ("linear_damping", UNIT_INTERVAL_BOUNDS, "1/s"),
    ("angular_damping", UNIT_INTERVAL_BOUNDS, "1/s"),
)


@dataclass(frozen=True)
class Body:
    """A simulated body. ``kind`` is one of link, gripper, object, floor.

    Objects carry their ``material``; contact properties of objects are
    tuned per material, masses per object instance.
    """

    name: str
    kind: str
    nominal_mass: float = 0.0
    material: str | None = None

    @property
    def contact_id(self) -> str:
        return self.material if self.kind == "object" else self.name


@dataclass(frozen=True)
class ParameterDescriptor:
    name: str
    group: Group
    lower: float
    upper: float
    unit: str = ""
    target: str = "engine"  # "engine", "joint:<i>" or "body:<id>"

    def __post_init__(self):
        object.__setattr__(self, "group", Group(self.group))
        if not (math.isfinite(self.lower) and math.isfinite(self.upper) and self.lower < self.upper):
            raise ValueError(f"{self.name}: need finite lower < upper, got [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "group": self.group.value,
            "lower": self.lower,
            "upper": self.upper,
            "unit": self.unit,
            "target": self.target,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ParameterDescriptor":
        return cls(
            d["name"], Group(d["group"]), float(d["lower"]), float(d["upper"]),
            d.get("unit", ""), d.get("target", "engine"),
        )


class ParameterRegistry:
    """Ordered, immutable collection of descriptors; Shared before Individual."""

    def __init__(self, descriptors: Iterable[ParameterDescriptor]):
        descs = tuple(descriptors)
        names = [d.name for d in descs]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate parameter names: {dup}")
        groups = [d.group for d in descs]
        if Group.INDIVIDUAL in groups and Group.SHARED in groups[groups.index(Group.INDIVIDUAL):]:
            raise ValueError("Shared descriptors must precede Individual descriptors")
        self._descs = descs
        self._index = {n: i for i, n in enumerate(names)}
        self.lower = np.array([d.lower for d in descs], dtype=np.float64)
        self.upper = np.array([d.upper for d in descs], dtype=np.float64)
        self.lower.setflags(write=False)
        self.upper.setflags(write=False)

    @property
    def descriptors(self) -> tuple[ParameterDescriptor, ...]:
        return self._descs

    @property
    def names(self) -> list[str]:
        return [d.name for d in self._descs]

    @property
    def dimension(self) -> int:
        return len(self._descs)

    def __len__(self) -> int:
        return len(self._descs)

    def __iter__(self):
        return iter(self._descs)

    def __getitem__(self, name: str) -> ParameterDescriptor:
        return self._descs[self._index[name]]

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __eq__(self, other):
        return isinstance(other, ParameterRegistry) and self._descs == other._descs

    def index(self, name: str) -> int:
        return self._index[name]

    def encode(self, assignment: Mapping[str, float]) -> np.ndarray:
        missing = [n for n in self.names if n not in assignment]
        if missing:
            raise KeyError(f"assignment lacks parameters: {missing}")
        return np.array([float(assignment[n]) for n in self.names], dtype=np.float64)

    def decode(self, values: Sequence[float]) -> dict[str, float]:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.dimension,):
            raise ValueError(f"expected vector of length {self.dimension}, got shape {values.shape}")
        return {n: float(v) for n, v in zip(self.names, values)}

    def in_bounds(self, values) -> np.ndarray:
        values = np.asarray(values)
        return (values >= self.lower) & (values <= self.upper)

    def to_list(self) -> list[dict]:
        return [d.to_dict() for d in self._descs]

    @classmethod
    def from_list(cls, items: Iterable[Mapping]) -> "ParameterRegistry":
        return cls(ParameterDescriptor.from_dict(d) for d in items)


@dataclass(frozen=True, eq=False)
class ParameterVector:
    """A concrete in-bounds assignment aligned to a registry."""

    registry: ParameterRegistry
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if len(v) != self.registry.dimension:
            raise ValueError(f"vector length {len(v)} != registry dimension {self.registry.dimension}")
        if not np.all(self.registry.in_bounds(v)):
            bad = [n for n, ok in zip(self.registry.names, self.registry.in_bounds(v)) if not ok]
            raise ValueError(f"values out of bounds for {bad}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __eq__(self, other):
        return (
            isinstance(other, ParameterVector)
            and self.registry == other.registry
            and np.array_equal(self.values, other.values)
        )

    def as_dict(self) -> dict[str, float]:
        return self.registry.decode(self.values)

    @classmethod
    def from_dict(cls, registry: ParameterRegistry, assignment: Mapping[str, float]) -> "ParameterVector":
        return cls(registry, registry.encode(assignment))


def clamp_or_resample(values, registry: ParameterRegistry, rng: np.random.Generator) -> np.ndarray:
    """Replace each out-of-bounds component by a uniform draw within its bounds.

    In-bound components are returned untouched. One uniform draw is consumed
    per violating component, in index order.
    """
    v = np.array(values, dtype=np.float64)
    bad = np.flatnonzero(~registry.in_bounds(v))
    if bad.size:
        lo, hi = registry.lower[bad], registry.upper[bad]
        v[bad] = lo + rng.random(bad.size) * (hi - lo)
    return v


def _joint_descriptors(prefix: str, joints: int, bounds, unit: str, group: Group):
    return [
        ParameterDescriptor(f"{prefix}.j{j}", group, *bounds, unit, f"joint:{j}")
        for j in range(1, joints + 1)
    ]


def _contact_ids(bodies: Sequence[Body]) -> list[str]:
    """Contact bodies in order gripper, floor, then object materials (deduplicated)."""
    ids = [b.name for b in bodies if b.kind == "gripper"]
    ids += [b.name for b in bodies if b.kind == "floor"]
    for b in bodies:
        if b.kind == "object" and b.contact_id not in ids:
            ids.append(b.contact_id)
    return ids


def default_shared_registry(bodies: Sequence[Body], joints: int = 6) -> ParameterRegistry:
    """Shared parameters: time step, per-joint torque/velocity limits, masses, lateral friction."""
    if joints < 1:
        raise ValueError("need at least one joint")
    g = Group.SHARED
    descs = [ParameterDescriptor("timestep", g, *TIMESTEP_BOUNDS, "s", "engine")]
    descs += _joint_descriptors("max_joint_torque", joints, JOINT_TORQUE_BOUNDS, "engine-torque", g)
    descs += _joint_descriptors("max_joint_velocity", joints, JOINT_VELOCITY_BOUNDS, "deg/s", g)
    for b in bodies:
        if b.kind in ("link", "gripper", "object"):
            if not b.nominal_mass > 0:
                raise ValueError(f"body {b.name} needs a positive nominal mass")
            lo, hi = MASS_SCALE_BOUNDS
            descs.append(
                ParameterDescriptor(f"mass.{b.name}", g, lo * b.nominal_mass, hi * b.nominal_mass, "kg", f"body:{b.name}")
            )
    for cid in _contact_ids(bodies):
        descs.append(ParameterDescriptor(f"lateral_friction.{cid}", g, *FRICTION_BOUNDS, "1", f"body:{cid}"))
    return ParameterRegistry(descs)


def default_individual_registry(bodies: Sequence[Body], joints: int = 6) -> ParameterRegistry:
    """Shared parameters extended by joint damping and per-contact-body material terms."""
    g = Group.INDIVIDUAL
    descs = list(default_shared_registry(bodies, joints))
    descs += _joint_descriptors("joint_damping", joints, UNIT_INTERVAL_BOUNDS, "1/s", g)
    contacts = _contact_ids(bodies)
    for prop, bounds, unit in CONTACT_PROPERTIES_INDIVIDUAL:
        for cid in contacts:
            descs.append(ParameterDescriptor(f"{prop}.{cid}", g, *bounds, unit, f"body:{cid}"))
    return ParameterRegistry(descs)


def default_registry(group: Group | str, bodies: Sequence[Body], joints: int = 6) -> ParameterRegistry:
    if Group(group) is Group.SHARED:
        return default_shared_registry(bodies, joints)
    return default_individual_registry(bodies, joints)
