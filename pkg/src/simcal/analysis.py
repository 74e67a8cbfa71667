"""Post-campaign analytics: improvement, parameter importance, convergence curves.

Everything here is read-only over a campaign directory written by
:func:`simcal.runner.run_campaign`, or over plain in-memory tables.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .runner import FINAL_FILE, read_generations


class InsufficientDataError(ValueError):
    """Fewer than two repeats: spread statistics would be fabricated."""


@dataclass(frozen=True)
class ImprovementReport:
    experiment_id: int
    best_generic: tuple[str, float]
    best_tuned: tuple[str, float]
    improvement: float | None  # None when the generic best is 0

    def row(self) -> list:
        return [
            self.experiment_id, self.best_generic[0], repr(self.best_generic[1]),
            self.best_tuned[0], repr(self.best_tuned[1]),
            "undefined" if self.improvement is None else repr(self.improvement),
        ]


def _best(table: Mapping[str, float] | Iterable[tuple[str, float]]) -> tuple[str, float]:
    items = list(table.items()) if isinstance(table, Mapping) else list(table)
    if not items:
        raise ValueError("empty fitness table")
    # sort by (fitness, backend) so the pick does not depend on row order
    backend, value = min(items, key=lambda kv: (float(kv[1]), str(kv[0])))
    return str(backend), float(value)


def compute_improvement(generic, tuned, experiment_id: int) -> ImprovementReport:
    """Best tuned vs best generic fitness over backends.

    ``generic`` and ``tuned`` map backend -> fitness (or are sequences of
    ``(backend, fitness)`` pairs).
    """
    g = _best(generic)
    t = _best(tuned)
    imp = (g[1] - t[1]) / g[1] if g[1] > 0 else None
    return ImprovementReport(int(experiment_id), g, t, imp)


@dataclass(frozen=True)
class ParameterImportance:
    parameter: str
    median: float
    std: float
    q1: float
    q3: float
    min: float
    max: float
    normalized_std: float
    n: int

    def row(self) -> list:
        return [self.parameter] + [repr(float(v)) for v in (
            self.median, self.std, self.q1, self.q3, self.min, self.max, self.normalized_std)]


def importance_from_values(
    names: Sequence[str], values, lower, upper
) -> list[ParameterImportance]:
    """Spread statistics of repeat-best vectors, ranked most constrained first.

    ``values`` has one row per repeat. Std is the sample std (ddof 1)
    divided by the bound width for ``normalized_std``.
    """
    X = np.asarray(values, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(names):
        raise ValueError("values must be (repeats, len(names))")
    if X.shape[0] < 2:
        raise InsufficientDataError(f"need at least 2 repeats, got {X.shape[0]}")
    width = np.asarray(upper, dtype=np.float64) - np.asarray(lower, dtype=np.float64)
    std = X.std(axis=0, ddof=1)
    q1, med, q3 = np.percentile(X, [25, 50, 75], axis=0)
    out = [
        ParameterImportance(
            names[i], float(med[i]), float(std[i]), float(q1[i]), float(q3[i]),
            float(X[:, i].min()), float(X[:, i].max()),
            float(std[i] / width[i]) if width[i] > 0 else 0.0, X.shape[0],
        )
        for i in range(len(names))
    ]
    return sorted(out, key=lambda p: (p.normalized_std, p.parameter))


# --- campaign readers ------------------------------------------------------------

def load_finals(campaign: str | Path) -> list[dict]:
    """Every completed cell's final record, with its directory under ``"dir"``."""
    root = Path(campaign)
    out = []
    for path in sorted(root.glob(f"*/{FINAL_FILE}")):
        if path.parent.name.startswith("."):
            continue
        d = json.loads(path.read_text(encoding="utf-8"))
        d["dir"] = path.parent
        out.append(d)
    return out


def _select(finals, group=None, backend=None, experiment=None):
    return [
        f for f in finals
        if (group is None or f["group"] == group)
        and (backend is None or f["backend"] == backend)
        and (experiment is None or int(f["experiment"]) == int(experiment))
    ]


def campaign_improvement(campaign: str | Path, group: str | None = None) -> list[ImprovementReport]:
    """One report per experiment, taking the best cell over backends and repeats."""
    finals = _select(load_finals(campaign), group=group)
    by_exp: dict[int, dict[str, dict[str, float]]] = defaultdict(lambda: {"generic": {}, "tuned": {}})
    for f in finals:
        e, b = int(f["experiment"]), f["backend"]
        tabs = by_exp[e]
        tabs["generic"][b] = min(tabs["generic"].get(b, math.inf), float(f["baseline_fitness"]))
        tabs["tuned"][b] = min(tabs["tuned"].get(b, math.inf), float(f["best_fitness"]))
    return [compute_improvement(t["generic"], t["tuned"], e) for e, t in sorted(by_exp.items())]


def parameter_importance(
    campaign: str | Path, group: str | None, backend: str, experiment: int
) -> list[ParameterImportance]:
    finals = sorted(_select(load_finals(campaign), group, backend, experiment), key=lambda f: f["repeat"])
    groups = {f["group"] for f in finals}
    if len(groups) > 1:
        raise ValueError(f"cells from several groups {sorted(groups)}; pass a group")
    if len(finals) < 2:
        raise InsufficientDataError(
            f"{len(finals)} completed repeat(s) for backend {backend!r}, experiment {experiment}"
        )
    first = finals[0]
    return importance_from_values(
        first["parameters"], [f["best_vector"] for f in finals], first["lower"], first["upper"]
    )


def average_curves(curves: Sequence[Sequence[float]]) -> np.ndarray:
    """Mean of ragged best-fitness curves, each carried forward to the longest."""
    curves = [np.asarray(c, dtype=np.float64) for c in curves if len(c)]
    if not curves:
        return np.empty(0)
    n = max(len(c) for c in curves)
    padded = np.array([np.concatenate([c, np.full(n - len(c), c[-1])]) for c in curves])
    return padded.mean(axis=0)


def export_convergence(
    campaign: str | Path, experiment: int, group: str | None = None
) -> list[tuple[int, str, float]]:
    """Rows ``(generation, backend, mean_best_fitness)`` for one experiment."""
    finals = _select(load_finals(campaign), group=group, experiment=experiment)
    per_backend: dict[str, list] = defaultdict(list)
    for f in sorted(finals, key=lambda f: (f["backend"], f["repeat"])):
        per_backend[f["backend"]].append([r.best_fitness for r in read_generations(f["dir"])])
    rows = []
    for backend in sorted(per_backend):
        for gen, v in enumerate(average_curves(per_backend[backend])):
            rows.append((gen, backend, float(v)))
    return rows


# --- CSV -------------------------------------------------------------------------

IMPROVEMENT_HEADER = ["experiment", "best_generic_backend", "best_generic", "best_tuned_backend", "best_tuned", "improvement"]
IMPORTANCE_HEADER = ["parameter", "median", "std", "q1", "q3", "min", "max", "normalized_std"]
CONVERGENCE_HEADER = ["generation", "backend", "mean_best_fitness"]


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def improvement_csv(reports: Iterable[ImprovementReport]) -> str:
    return _csv(IMPROVEMENT_HEADER, [r.row() for r in reports])


def importance_csv(items: Iterable[ParameterImportance]) -> str:
    return _csv(IMPORTANCE_HEADER, [p.row() for p in items])


def convergence_csv(rows: Iterable[tuple[int, str, float]]) -> str:
    return _csv(CONVERGENCE_HEADER, [(g, b, repr(v)) for g, b, v in rows])
