"""Poses, time-stamped trajectories and the ground-truth CSV format.

Trajectories are array-backed: ``times`` (n,), ``positions`` (n, 3) and
``orientations`` (n, 4, quaternions as x, y, z, w). All numerics are float64.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

CSV_HEADER = ("t", "x", "y", "z", "qx", "qy", "qz", "qw")
FITNESS_RATE_HZ = 20.0
QUAT_TOL = 1e-6

OBJECT_TASKS = frozenset(range(3, 11))
KINEMATIC_TASKS = frozenset({1, 2})


class TrajectoryError(ValueError):
    """Raised for trajectories that violate their invariants."""


class ParseError(ValueError):
    """Raised when a ground-truth file is malformed."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _check_quats(q: np.ndarray) -> None:
    norms = np.linalg.norm(q, axis=-1)
    if not np.all(np.abs(norms - 1.0) <= QUAT_TOL):
        raise TrajectoryError("orientation quaternion is not unit length")


@dataclass(frozen=True, eq=False)
class Pose:
    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))

    def __post_init__(self):
        p = np.array(self.position, dtype=np.float64).reshape(3)
        q = np.array(self.orientation, dtype=np.float64).reshape(4)
        if not np.all(np.isfinite(p)):
            raise TrajectoryError("pose position must be finite")
        _check_quats(q)
        object.__setattr__(self, "position", _readonly(p))
        object.__setattr__(self, "orientation", _readonly(q))

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.position, other.position) and np.array_equal(
            self.orientation, other.orientation
        )

    def __repr__(self):
        return f"Pose(position={self.position.tolist()}, orientation={self.orientation.tolist()})"


@dataclass(frozen=True, eq=False)
class TimedTrajectory:
    body_id: str
    times: np.ndarray
    positions: np.ndarray
    orientations: np.ndarray | None = None

    def __post_init__(self):
        t = np.array(self.times, dtype=np.float64).reshape(-1)
        p = np.array(self.positions, dtype=np.float64).reshape(-1, 3)
        if self.orientations is None:
            q = np.tile([0.0, 0.0, 0.0, 1.0], (len(t), 1))
        else:
            q = np.array(self.orientations, dtype=np.float64).reshape(-1, 4)
        if len(t) == 0:
            raise TrajectoryError("trajectory needs at least one sample")
        if not (len(t) == len(p) == len(q)):
            raise TrajectoryError("times, positions and orientations differ in length")
        if np.any(np.diff(t) <= 0):
            raise TrajectoryError("timestamps must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(p))):
            raise TrajectoryError("trajectory contains non-finite values")
        _check_quats(q)
        object.__setattr__(self, "times", _readonly(t))
        object.__setattr__(self, "positions", _readonly(p))
        object.__setattr__(self, "orientations", _readonly(q))

    @classmethod
    def from_samples(cls, body_id: str, samples: Sequence[tuple[float, Pose]]) -> "TimedTrajectory":
        return cls(
            body_id,
            [t for t, _ in samples],
            [p.position for _, p in samples],
            [p.orientation for _, p in samples],
        )

    def __len__(self) -> int:
        return len(self.times)

    def __eq__(self, other):
        if not isinstance(other, TimedTrajectory):
            return NotImplemented
        return (
            self.body_id == other.body_id
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.orientations, other.orientations)
        )

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def pose(self, i: int) -> Pose:
        return Pose(self.positions[i], self.orientations[i])

    @property
    def samples(self) -> list[tuple[float, Pose]]:
        return [(float(t), self.pose(i)) for i, t in enumerate(self.times)]

    def __iter__(self) -> Iterator[tuple[float, Pose]]:
        return iter(self.samples)


@dataclass(frozen=True, eq=False)
class GroundTruthRecord:
    task_id: int
    wrist: TimedTrajectory
    object_final_pose: Pose | None = None
    repeats: int = 1

    def __post_init__(self):
        if not 1 <= self.task_id <= 10:
            raise ValueError(f"task_id must be in 1..10, got {self.task_id}")
        has_object = self.object_final_pose is not None
        if has_object != (self.task_id in OBJECT_TASKS):
            raise ValueError(
                f"task {self.task_id}: object pose must be present exactly for tasks 3-10"
            )
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")

    def __eq__(self, other):
        if not isinstance(other, GroundTruthRecord):
            return NotImplemented
        return (
            self.task_id == other.task_id
            and self.wrist == other.wrist
            and self.object_final_pose == other.object_final_pose
            and self.repeats == other.repeats
        )


def euclidean_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return math.sqrt(float(np.sum((a - b) ** 2)))


def grid_times(t0: float, duration: float, rate: float) -> np.ndarray:
    """Timestamps ``t0 + k / rate`` covering ``[t0, t0 + duration]``."""
    n = int(math.floor(duration * rate + 1e-9)) + 1
    return t0 + np.arange(n) / rate


def resample(traj: TimedTrajectory, rate: float = FITNESS_RATE_HZ) -> TimedTrajectory:
    """Resample onto a uniform grid starting at the first timestamp.

    Position is interpolated linearly and orientation by slerp. Grid points
    that coincide with an input timestamp copy that sample exactly, which
    makes resampling idempotent.
    """
    if not rate > 0:
        raise ValueError("rate must be positive")
    t = grid_times(float(traj.times[0]), traj.duration, rate)
    # floating error in t0 + k/rate may overshoot the last knot by an ulp
    t = np.minimum(t, traj.times[-1])
    if len(traj) == 1:
        if len(t) > 1:
            raise TrajectoryError("cannot resample a single-sample trajectory onto several points")
        return traj
    pos = np.column_stack([np.interp(t, traj.times, traj.positions[:, k]) for k in range(3)])
    quats = Slerp(traj.times, Rotation.from_quat(traj.orientations))(t).as_quat()
    idx = np.searchsorted(traj.times, t)
    idx = np.minimum(idx, len(traj) - 1)
    exact = traj.times[idx] == t
    pos[exact] = traj.positions[idx[exact]]
    quats[exact] = traj.orientations[idx[exact]]
    return TimedTrajectory(traj.body_id, t, pos, quats)


def average_trajectories(trajs: Sequence[TimedTrajectory], rate: float = FITNESS_RATE_HZ) -> TimedTrajectory:
    """Point-wise mean of several repeats after resampling to a common grid.

    Repeats are truncated to the shortest grid. Orientations are averaged
    with the chordal quaternion mean.
    """
    if not trajs:
        raise ValueError("no trajectories to average")
    grids = [resample(tr, rate) for tr in trajs]
    n = min(len(g) for g in grids)
    pos = np.mean([g.positions[:n] for g in grids], axis=0)
    quats = np.empty((n, 4))
    for i in range(n):
        quats[i] = Rotation.from_quat([g.orientations[i] for g in grids]).mean().as_quat()
    t = grids[0].times[0] + np.arange(n) / rate
    return TimedTrajectory(trajs[0].body_id, t, pos, quats)


# --- CSV I/O -----------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def read_pose_rows(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parse a pose CSV into (times, positions, orientations).

    Errors name the offending line number (the header is line 1).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file")
        header = [h.strip() for h in header]
        missing = [c for c in CSV_HEADER if c not in header]
        if missing:
            raise ParseError(f"{path}: missing columns {missing}")
        cols = [header.index(c) for c in CSV_HEADER]
        times, pos, quats = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                raise ParseError(f"{path}: row {line_no} is empty")
            if len(row) != len(header):
                raise ParseError(f"{path}: row {line_no} has {len(row)} fields, expected {len(header)}")
            try:
                vals = [float(row[c]) for c in cols]
            except ValueError as exc:
                raise ParseError(f"{path}: row {line_no}: {exc}") from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError(f"{path}: row {line_no} contains non-finite values")
            if times and vals[0] <= times[-1]:
                raise ParseError(f"{path}: row {line_no}: timestamp {vals[0]} is not after {times[-1]}")
            q = np.array(vals[4:8])
            norm = float(np.linalg.norm(q))
            if norm < 1e-9:
                raise ParseError(f"{path}: row {line_no}: quaternion cannot be normalized")
            if abs(norm - 1.0) > QUAT_TOL:
                q = q / norm
            times.append(vals[0])
            pos.append(vals[1:4])
            quats.append(q)
    if not times:
        raise ParseError(f"{path}: no data rows")
    return np.array(times), np.array(pos, dtype=np.float64), np.array(quats)


def read_trajectory_csv(path: str | Path, body_id: str = "wrist") -> TimedTrajectory:
    t, p, q = read_pose_rows(path)
    return TimedTrajectory(body_id, t, p, q)


def write_trajectory_csv(traj: TimedTrajectory, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for t, p, q in zip(traj.times, traj.positions, traj.orientations):
            w.writerow([_fmt(t), *map(_fmt, p), *map(_fmt, q)])


def read_pose_csv(path: str | Path) -> Pose:
    t, p, q = read_pose_rows(path)
    if len(t) != 1:
        raise ParseError(f"{path}: pose file must hold exactly one row, found {len(t)}")
    return Pose(p[0], q[0])


def write_pose_csv(pose: Pose, path: str | Path, t: float = 0.0) -> None:
    write_trajectory_csv(TimedTrajectory("pose", [t], [pose.position], [pose.orientation]), path)


_REPEAT_RE = re.compile(r"^(wrist|object_final)_r(\d+)\.csv$")


def _task_id_from(path: Path) -> int | None:
    m = re.search(r"(\d+)$", path.name)
    return int(m.group(1)) if m else None


def load_ground_truth(path: str | Path, task_id: int | None = None) -> GroundTruthRecord:
    """Load one task's ground truth.

    ``path`` is either a single wrist CSV, or a task directory holding
    ``wrist.csv`` (+ ``object_final.csv``, ``task.json``) for an aggregated
    record, or per-repeat files ``wrist_rNN.csv`` / ``object_final_rNN.csv``.
    Repeat wrists are averaged on the 20 Hz grid; repeat object final
    positions are averaged, never their trajectories.
    """
    path = Path(path)
    if path.is_file():
        tid = task_id if task_id is not None else _task_id_from(path.parent)
        if tid is None:
            raise ParseError(f"{path}: cannot infer task id")
        return GroundTruthRecord(tid, read_trajectory_csv(path))
    if not path.is_dir():
        raise FileNotFoundError(path)

    meta = {}
    if (path / "task.json").exists():
        meta = json.loads((path / "task.json").read_text(encoding="utf-8"))
    tid = task_id if task_id is not None else meta.get("task_id", _task_id_from(path))
    if tid is None:
        raise ParseError(f"{path}: cannot infer task id")

    if (path / "wrist.csv").exists():
        wrist = read_trajectory_csv(path / "wrist.csv")
        obj = read_pose_csv(path / "object_final.csv") if (path / "object_final.csv").exists() else None
        return GroundTruthRecord(int(tid), wrist, obj, int(meta.get("repeats", 1)))

    wrists, objects = {}, {}
    for f in sorted(path.iterdir()):
        m = _REPEAT_RE.match(f.name)
        if not m:
            continue
        (wrists if m.group(1) == "wrist" else objects)[int(m.group(2))] = f
    if not wrists:
        raise ParseError(f"{path}: no wrist files")
    trajs = [read_trajectory_csv(wrists[k]) for k in sorted(wrists)]
    wrist = trajs[0] if len(trajs) == 1 else average_trajectories(trajs)
    obj = None
    if objects:
        poses = [read_pose_csv(objects[k]) for k in sorted(objects)]
        mean_pos = np.mean([p.position for p in poses], axis=0)
        mean_q = Rotation.from_quat([p.orientation for p in poses]).mean().as_quat()
        obj = poses[0] if len(poses) == 1 else Pose(mean_pos, mean_q)
    return GroundTruthRecord(int(tid), wrist, obj, len(trajs))


def write_ground_truth(record: GroundTruthRecord, directory: str | Path) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(record.wrist, d / "wrist.csv")
    if record.object_final_pose is not None:
        write_pose_csv(record.object_final_pose, d / "object_final.csv")
    (d / "task.json").write_text(
        json.dumps({"task_id": record.task_id, "repeats": record.repeats}) + "\n", encoding="utf-8"
    )
    return d
