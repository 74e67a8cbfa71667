import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from simcal.analysis import (
    InsufficientDataError,
    average_curves,
    compute_improvement,
    convergence_csv,
    export_convergence,
    importance_from_values,
    improvement_csv,
    parameter_importance,
)
from simcal.optimizer import GenerationRecord

ENGINES = ["PyBullet", "Bullet2.78", "Bullet2.83", "ODE", "Newton"]
GENERIC = {
    2: [0.1283, 0.1320, 0.1582, 0.1285, 0.1147],
    6: [503.3037, 0.6029, 0.6096, 0.5972, 0.5977],
}
BEST_TUNED = {2: ("Newton", 0.0984), 6: ("PyBullet", 0.0552)}


@pytest.mark.parametrize("exp,expected", [(2, 0.1421), (6, 0.9076)])
def test_reference_improvements(exp, expected):
    rep = compute_improvement(dict(zip(ENGINES, GENERIC[exp])), dict([BEST_TUNED[exp]]), exp)
    assert rep.improvement == pytest.approx(expected, abs=5e-5)
    assert rep.best_generic[0] == ("Newton" if exp == 2 else "ODE")


def test_equal_fitness_is_zero_improvement():
    assert compute_improvement({"a": 0.3}, {"a": 0.3}, 1).improvement == 0.0


def test_zero_generic_is_undefined():
    rep = compute_improvement({"a": 0.0}, {"a": 0.0}, 1)
    assert rep.improvement is None
    assert improvement_csv([rep]).splitlines()[1].endswith(",undefined")


@given(st.permutations(list(zip(ENGINES, GENERIC[6]))))
def test_row_order_irrelevant(rows):
    assert compute_improvement(rows, [("x", 0.1)], 6) == compute_improvement(dict(zip(ENGINES, GENERIC[6])), {"x": 0.1}, 6)


def test_empty_table_rejected():
    with pytest.raises(ValueError):
        compute_improvement({}, {"a": 1.0}, 1)


class TestImportance:
    def test_identical_repeats_rank_first(self):
        X = [[0.01, 0.2, 30.0], [0.01, 0.5, 20.0], [0.01, 0.9, 25.0]]
        items = importance_from_values(["timestep", "mu", "vel"], X, [0.001, 0, 10], [0.05, 1.25, 40])
        assert items[0].parameter == "timestep" and items[0].std == 0.0

    def test_statistics_match_numpy_by_hand(self):
        X = np.array([[1.0], [2.0], [4.0], [7.0]])
        (p,) = importance_from_values(["a"], X, [0], [10])
        assert p.median == 3.0 and p.min == 1.0 and p.max == 7.0
        assert p.std == pytest.approx(math.sqrt(((1 - 3.5) ** 2 + 2.25 + 0.25 + 12.25) / 3))
        assert p.q1 <= p.median <= p.q3
        assert p.normalized_std == pytest.approx(p.std / 10)

    def test_uniform_spread_oracle(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(3, 8, size=(20_000, 1))
        (p,) = importance_from_values(["irrelevant"], X, [3], [8])
        assert p.normalized_std == pytest.approx(1 / math.sqrt(12), abs=0.005)

    @given(st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1))
    def test_scaling_invariance(self, c, seed):
        X = np.random.default_rng(seed).uniform(0, 1, size=(6, 2))
        base = importance_from_values(["a", "b"], X, [0, 0], [1, 1])
        scaled = importance_from_values(["a", "b"], X * [c, 1], [0, 0], [c, 1])
        for p in base:
            q = next(s for s in scaled if s.parameter == p.parameter)
            assert q.normalized_std == pytest.approx(p.normalized_std, rel=1e-9)

    def test_single_repeat_refused(self):
        with pytest.raises(InsufficientDataError):
            importance_from_values(["a"], [[1.0]], [0], [1])


class TestConvergence:
    def test_single_curve_passes_through(self):
        np.testing.assert_array_equal(average_curves([[3.0, 2.0, 1.0]]), [3.0, 2.0, 1.0])

    def test_ragged_carry_forward(self):
        np.testing.assert_array_equal(average_curves([[1.0] * 3, [3.0] * 5]), [2.0] * 5)

    @given(st.lists(st.lists(st.floats(0, 10), min_size=1, max_size=30), min_size=1, max_size=6))
    def test_monotone_inputs_give_monotone_mean(self, raw):
        curves = [np.minimum.accumulate(c) for c in raw]
        out = average_curves(curves)
        assert len(out) == max(len(c) for c in curves)
        assert np.all(np.diff(out) <= 1e-12)


def fake_campaign(root, vectors, lengths=None, backend="engine-a", experiment=3):
    for r, vec in enumerate(vectors):
        d = root / f"gshared_e{experiment}_b{backend}_r{r}"
        d.mkdir(parents=True)
        n = (lengths or [3] * len(vectors))[r]
        recs = [GenerationRecord(g, 1.0 / (g + 1) + r, 0, 0, tuple(vec), 0.0) for g in range(n)]
        (d / "generations.jsonl").write_text("".join(json.dumps(x.to_dict()) + "\n" for x in recs))
        (d / "final.json").write_text(json.dumps({
            "group": "shared", "experiment": experiment, "backend": backend, "repeat": r,
            "parameters": ["a", "b"], "lower": [0, 0], "upper": [1, 2], "best_vector": list(vec),
            "best_fitness": recs[-1].best_fitness, "baseline_fitness": 5.0,
        }))


def test_campaign_readers(tmp_path):
    fake_campaign(tmp_path, [[0.5, 0.1], [0.5, 1.9]], lengths=[2, 4])
    items = parameter_importance(tmp_path, None, "engine-a", 3)
    assert [p.parameter for p in items] == ["a", "b"]
    rows = export_convergence(tmp_path, 3)
    assert [g for g, _, _ in rows] == [0, 1, 2, 3]
    assert rows[-1][2] == pytest.approx(((1 / 2) + (1 / 4 + 1)) / 2)
    assert convergence_csv(rows).splitlines()[0] == "generation,backend,mean_best_fitness"


def test_campaign_with_one_repeat_is_insufficient(tmp_path):
    fake_campaign(tmp_path, [[0.5, 0.1]])
    with pytest.raises(InsufficientDataError):
        parameter_importance(tmp_path, None, "engine-a", 3)
