"""Trajectory and object-placement error used as the optimisation fitness."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .trajectory import TimedTrajectory

DEFAULT_PENALTY = 1e4
FAILURE_REASONS = ("diverged", "non-finite", "timeout", "error")


class GridMismatchError(ValueError):
    """Simulated and reference trajectories are not on the same time grid."""


@dataclass(frozen=True)
class FitnessValue:
    value: float
    task_id: int | None = None
    failure: str | None = None

    def __float__(self) -> float:
        return self.value

    @property
    def failed(self) -> bool:
        return self.failure is not None


def _check_grid(sim: TimedTrajectory, ref: TimedTrajectory) -> None:
    if len(sim) != len(ref):
        raise GridMismatchError(f"point counts differ: {len(sim)} vs {len(ref)}")
    if not np.allclose(sim.times, ref.times, rtol=0.0, atol=1e-9):
        raise GridMismatchError("timestamps differ; resample both trajectories first")


def mean_point_error(sim_positions: np.ndarray, ref_positions: np.ndarray) -> float:
    d = np.sqrt(np.sum((np.asarray(ref_positions) - np.asarray(sim_positions)) ** 2, axis=1))
    return math.fsum(d.tolist()) / len(d)


def kinematic_fitness(sim_wrist: TimedTrajectory, ref_wrist: TimedTrajectory, task_id: int | None = None) -> FitnessValue:
    """Mean wrist position error over the common 20 Hz grid."""
    _check_grid(sim_wrist, ref_wrist)
    return FitnessValue(mean_point_error(sim_wrist.positions, ref_wrist.positions), task_id)


def object_fitness(
    sim_wrist: TimedTrajectory,
    ref_wrist: TimedTrajectory,
    sim_obj_final,
    ref_obj_final,
    task_id: int | None = None,
) -> FitnessValue:
    """Kinematic error plus the distance between final object positions."""
    if sim_obj_final is None or ref_obj_final is None:
        raise ValueError("object task needs both simulated and reference final object positions")
    so = np.asarray(sim_obj_final, dtype=np.float64)
    ro = np.asarray(ref_obj_final, dtype=np.float64)
    if not (np.all(np.isfinite(so)) and np.all(np.isfinite(ro))):
        raise ValueError("final object positions must be finite")
    kin = kinematic_fitness(sim_wrist, ref_wrist).value
    obj = math.sqrt(math.fsum(((ro - so) ** 2).tolist()))
    return FitnessValue(kin + obj, task_id)


def combined_fitness(per_task: Sequence[FitnessValue]) -> FitnessValue:
    """Sum of the ten per-task fitnesses (tasks 1..10, each exactly once)."""
    ids = sorted(f.task_id for f in per_task)
    if ids != list(range(1, 11)):
        raise ValueError(f"combined fitness needs tasks 1..10 exactly once, got {ids}")
    failures = [f.failure for f in per_task if f.failed]
    return FitnessValue(math.fsum(f.value for f in per_task), 11, failures[0] if failures else None)


def penalize_failure(reason: str, penalty: float = DEFAULT_PENALTY, task_id: int | None = None) -> FitnessValue:
    if reason not in FAILURE_REASONS:
        raise ValueError(f"unknown failure reason {reason!r}")
    return FitnessValue(float(penalty), task_id, reason)
