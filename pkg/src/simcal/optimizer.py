"""Differential evolution, best/1/bin with dithered mutation factor.

Each generation builds all trial vectors from the parent population, evaluates
them as one order-independent batch and only then applies greedy selection,
so a concurrent ``map_fn`` gives the same result as the serial one.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .fitness import DEFAULT_PENALTY
from .params import ParameterRegistry, ParameterVector, clamp_or_resample

log = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray, int], float]


class ConfigError(ValueError):
    pass


class Termination(str, enum.Enum):
    CONTINUE = "continue"
    CONVERGED = "converged"
    GENERATION_CAP = "generation-cap"
    TIME_CAP = "time-cap"


@dataclass(frozen=True)
class DEConfig:
    crossover_rate: float = 0.7
    mutation_range: tuple[float, float] = (0.5, 1.0)
    population_factor: float = 1.0
    max_generations: int = 1000
    wall_clock_budget: float = 600.0
    convergence_tol: float = 0.01
    seed: int = 0
    penalty: float = DEFAULT_PENALTY

    def __post_init__(self):
        object.__setattr__(self, "mutation_range", tuple(float(f) for f in self.mutation_range))
        lo, hi = self.mutation_range
        if not 0 < lo <= hi <= 2:
            raise ConfigError(f"need 0 < F_lo <= F_hi <= 2, got {self.mutation_range}")
        if not 0 < self.crossover_rate <= 1:
            raise ConfigError("crossover rate must lie in (0, 1]")
        if self.population_factor <= 0:
            raise ConfigError("population factor must be positive")
        if self.max_generations < 1:
            raise ConfigError("max_generations must be >= 1")

    def population_size(self, dimension: int) -> int:
        n = math.ceil(self.population_factor * dimension - 1e-9)
        if n < 4:
            raise ConfigError(f"population size {n} < 4; best/1/bin needs best, target and two others")
        return n

    def to_dict(self) -> dict:
        return {
            "crossover_rate": self.crossover_rate,
            "mutation_range": list(self.mutation_range),
            "population_factor": self.population_factor,
            "max_generations": self.max_generations,
            "wall_clock_budget": self.wall_clock_budget,
            "convergence_tol": self.convergence_tol,
            "seed": self.seed,
            "penalty": self.penalty,
        }

    @classmethod
    def from_dict(cls, d) -> "DEConfig":
        known = {k: d[k] for k in cls().to_dict() if k in d}
        return cls(**known)


@dataclass
class Population:
    members: np.ndarray  # (N, D)
    fitnesses: np.ndarray  # (N,)
    generation: int = 0

    @property
    def best_index(self) -> int:
        # first minimum: deterministic tie-break
        return int(np.argmin(self.fitnesses))

    @property
    def size(self) -> int:
        return len(self.fitnesses)


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best_fitness: float
    mean_fitness: float
    std_fitness: float
    best_vector: tuple[float, ...]
    elapsed: float

    def to_dict(self) -> dict:
        return {
            "generation": self.generation,
            "best_fitness": self.best_fitness,
            "mean_fitness": self.mean_fitness,
            "std_fitness": self.std_fitness,
            "elapsed_s": self.elapsed,
            "best_vector": list(self.best_vector),
        }

    @classmethod
    def from_dict(cls, d) -> "GenerationRecord":
        return cls(
            int(d["generation"]), float(d["best_fitness"]), float(d["mean_fitness"]),
            float(d["std_fitness"]), tuple(float(v) for v in d["best_vector"]), float(d["elapsed_s"]),
        )


@dataclass
class DEResult:
    best: ParameterVector
    fitness: float
    history: list[GenerationRecord]
    termination: Termination
    evaluations: int = 0
    population: Population | None = field(default=None, repr=False)


def evaluation_seed(run_seed: int, generation: int, member: int) -> int:
    ss = np.random.SeedSequence(entropy=run_seed, spawn_key=(generation, member))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _finite_stats(fitnesses: np.ndarray, penalty: float) -> tuple[float, float] | None:
    valid = fitnesses[np.isfinite(fitnesses) & (fitnesses < penalty)]
    if valid.size == 0:
        return None
    return float(np.mean(valid)), float(np.std(valid))


def has_converged(fitnesses: Sequence[float], tol: float = 0.01, penalty: float = DEFAULT_PENALTY) -> bool:
    """Population std at most ``tol`` times |mean|; penalty sentinels are ignored."""
    stats = _finite_stats(np.asarray(fitnesses, dtype=np.float64), penalty)
    if stats is None:
        return False
    mean, std = stats
    return std <= tol * abs(mean)


def check_termination(pop: Population, config: DEConfig, elapsed: float) -> Termination:
    if has_converged(pop.fitnesses, config.convergence_tol, config.penalty):
        return Termination.CONVERGED
    if pop.generation >= config.max_generations:
        return Termination.GENERATION_CAP
    if elapsed >= config.wall_clock_budget:
        return Termination.TIME_CAP
    return Termination.CONTINUE


def mutate_best1(
    best, r1, r2, F: float,
    registry: ParameterRegistry | None = None, rng: np.random.Generator | None = None,
) -> np.ndarray:
    """``best + F * (r1 - r2)``, bound-repaired when a registry is given."""
    mutant = np.asarray(best, dtype=np.float64) + F * (np.asarray(r1) - np.asarray(r2))
    if registry is not None:
        mutant = clamp_or_resample(mutant, registry, rng if rng is not None else np.random.default_rng())
    return mutant


def crossover_binomial(parent, mutant, CR: float, rng: np.random.Generator) -> np.ndarray:
    parent = np.asarray(parent, dtype=np.float64)
    mutant = np.asarray(mutant, dtype=np.float64)
    d = len(parent)
    take = rng.random(d) < CR
    take[rng.integers(d)] = True
    return np.where(take, mutant, parent)


def select(parent_fitness: float, child_fitness: float) -> bool:
    """True when the child replaces the parent (strictly fitter)."""
    return child_fitness < parent_fitness


def draw_mutation_factor(config: DEConfig, rng: np.random.Generator) -> float:
    lo, hi = config.mutation_range
    return lo if lo == hi else float(rng.uniform(lo, hi))


def pick_donors(n: int, target: int, best: int, rng: np.random.Generator) -> tuple[int, int]:
    candidates = [k for k in range(n) if k != target and k != best]
    r1, r2 = rng.choice(candidates, size=2, replace=False)
    return int(r1), int(r2)


def make_trials(
    pop: Population, registry: ParameterRegistry, config: DEConfig, rng: np.random.Generator
) -> np.ndarray:
    """Build one trial vector per member from the current (parent) population."""
    F = draw_mutation_factor(config, rng)
    best = pop.best_index
    trials = np.empty_like(pop.members)
    for i in range(pop.size):
        r1, r2 = pick_donors(pop.size, i, best, rng)
        mutant = mutate_best1(pop.members[best], pop.members[r1], pop.members[r2], F, registry, rng)
        trials[i] = crossover_binomial(pop.members[i], mutant, config.crossover_rate, rng)
    return trials


def _safe_eval(evaluator: Evaluator, penalty: float, item: tuple[np.ndarray, int]) -> float:
    x, seed = item
    try:
        f = float(evaluator(x, seed))
    except Exception as exc:  # evaluator failures must not abort a run
        log.warning("evaluation failed: %s", exc)
        return penalty
    return f if math.isfinite(f) else penalty


class _BatchEval:
    def __init__(self, evaluator: Evaluator, penalty: float):
        self.evaluator = evaluator
        self.penalty = penalty

    def __call__(self, item):
        return _safe_eval(self.evaluator, self.penalty, item)


def evaluate_batch(
    vectors: np.ndarray, evaluator: Evaluator, config: DEConfig, generation: int,
    map_fn: Callable = map,
) -> np.ndarray:
    items = [(v.copy(), evaluation_seed(config.seed, generation, i)) for i, v in enumerate(vectors)]
    return np.array(list(map_fn(_BatchEval(evaluator, config.penalty), items)), dtype=np.float64)


def initialize(
    registry: ParameterRegistry,
    evaluator: Evaluator,
    config: DEConfig,
    rng: np.random.Generator,
    initial: Iterable[np.ndarray] = (),
    map_fn: Callable = map,
) -> Population:
    """Uniform random population; ``initial`` vectors replace the first members."""
    n = config.population_size(registry.dimension)
    members = registry.lower + rng.random((n, registry.dimension)) * (registry.upper - registry.lower)
    for k, v in enumerate(initial):
        v = np.asarray(v, dtype=np.float64)
        if not np.all(registry.in_bounds(v)):
            raise ConfigError("injected initial member is out of bounds")
        members[k] = v
    fitnesses = evaluate_batch(members, evaluator, config, 0, map_fn)
    return Population(members, fitnesses, 0)


def _record(pop: Population, elapsed: float, penalty: float) -> GenerationRecord:
    b = pop.best_index
    stats = _finite_stats(pop.fitnesses, penalty)
    mean, std = stats if stats is not None else (penalty, 0.0)
    return GenerationRecord(
        pop.generation, float(pop.fitnesses[b]), mean, std, tuple(float(x) for x in pop.members[b]), elapsed
    )


def evolve(
    pop: Population, registry: ParameterRegistry, evaluator: Evaluator, config: DEConfig,
    rng: np.random.Generator, map_fn: Callable = map,
) -> Population:
    """One generation: trials, batch evaluation, greedy selection."""
    trials = make_trials(pop, registry, config, rng)
    gen = pop.generation + 1
    trial_fit = evaluate_batch(trials, evaluator, config, gen, map_fn)
    members = pop.members.copy()
    fitnesses = pop.fitnesses.copy()
    for i in range(pop.size):
        if select(fitnesses[i], trial_fit[i]):
            members[i] = trials[i]
            fitnesses[i] = trial_fit[i]
    return Population(members, fitnesses, gen)


def run(
    registry: ParameterRegistry,
    evaluator: Evaluator,
    config: DEConfig,
    *,
    initial: Iterable[np.ndarray] = (),
    map_fn: Callable = map,
    clock: Callable[[], float] | None = None,
    on_generation: Callable[[GenerationRecord], None] | None = None,
) -> DEResult:
    """Minimise ``evaluator`` over the registry's box.

    ``evaluator(x, seed)`` receives a seed derived from (run seed, generation,
    member). ``clock`` returns elapsed seconds since the start of the run;
    the default is wall time. Generation 0 is the initial population.
    """
    if clock is None:
        t0 = time.perf_counter()
        clock = lambda: time.perf_counter() - t0  # noqa: E731
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    pop = initialize(registry, evaluator, config, rng, initial, map_fn)
    evaluations = pop.size
    history = [_record(pop, clock(), config.penalty)]
    if on_generation:
        on_generation(history[-1])
    while True:
        pop = evolve(pop, registry, evaluator, config, rng, map_fn)
        evaluations += pop.size
        history.append(_record(pop, clock(), config.penalty))
        if on_generation:
            on_generation(history[-1])
        reason = check_termination(pop, config, history[-1].elapsed)
        if reason is not Termination.CONTINUE:
            break
    b = pop.best_index
    return DEResult(
        ParameterVector(registry, pop.members[b]), float(pop.fitnesses[b]), history, reason, evaluations, pop
    )
