import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from harness import free_slide
from simcal.fitness import kinematic_fitness, object_fitness
from simcal.params import ParameterVector, default_individual_registry
from simcal.sim import (
    ExternalBackend,
    SceneSpec,
    UnknownBackendError,
    build_model,
    generic_assignment,
    get_backend,
    simulate,
)
from simcal.sim.engines import GRAVITY, forward_kinematics
from simcal.tasks import POSTURES, PUSH_TASK, all_scenes, reference_world, task_scene


def test_zero_length_script_holds_home():
    home = np.array(POSTURES["air_a"])
    sc = SceneSpec(np.zeros(0), np.zeros((0, 6)), 2.0, home=home)
    res = simulate("engine-a", sc, generic_assignment("engine-a", sc))
    assert res.status == "ok" and len(res.wrist) == 41
    np.testing.assert_allclose(res.wrist.positions, np.tile(res.wrist.positions[0], (41, 1)), atol=1e-12)
    wrist, _, _ = forward_kinematics(home, np.array(sc.link_lengths))
    np.testing.assert_allclose(res.wrist.positions[0], wrist)


@pytest.mark.parametrize("backend", ["engine-a", "engine-b"])
def test_deterministic(backend):
    sc = task_scene(PUSH_TASK)
    a = generic_assignment(backend, sc)
    r1, r2 = simulate(backend, sc, a), simulate(backend, sc, a)
    assert r1 == r2
    assert r1.wrist.positions.tobytes() == r2.wrist.positions.tobytes()


def test_large_timestep_costs_accuracy():
    sc = task_scene(1)
    fine = dict(generic_assignment("engine-a", sc), timestep=0.001)
    coarse = dict(fine, timestep=0.05)
    mid = dict(fine, timestep=0.01)
    ref = simulate("engine-a", sc, fine).wrist
    err_coarse = kinematic_fitness(simulate("engine-a", sc, coarse).wrist, ref).value
    err_mid = kinematic_fitness(simulate("engine-a", sc, mid).wrist, ref).value
    assert err_coarse > err_mid > 0


def test_object_at_rest_stays_put():
    sc = task_scene(3)
    still = SceneSpec(np.zeros(0), np.zeros((0, 6)), 5.0, home=POSTURES["hi_x"], object=sc.object)
    res = simulate("engine-a", still, generic_assignment("engine-a", still))
    np.testing.assert_array_equal(res.object_final, sc.object.initial_pose.position)


@pytest.mark.parametrize("mu", [0.1, 0.5, 1.0])
@pytest.mark.parametrize("v0", [0.5, 1.0])
def test_coulomb_slide(mu, v0):
    expected = v0**2 / (2 * mu * GRAVITY)
    assert free_slide(v0, mu, 0.001) == pytest.approx(expected, rel=0.02)


@pytest.mark.parametrize("mu", [0.1, 0.5, 1.0])
def test_coulomb_slide_semi_implicit(mu):
    assert free_slide(1.0, mu, 0.001, semi_implicit=True) == pytest.approx(1 / (2 * mu * GRAVITY), rel=0.02)


def test_damping_shortens_slide():
    assert free_slide(1.0, 0.2, 0.001, lin_damp=0.5) < free_slide(1.0, 0.2, 0.001)


def _time_to_reach(vel, backend="engine-a"):
    target = np.array(POSTURES["air_d"])
    sc = SceneSpec([0.0], [target], 6.0, home=np.array(POSTURES["air_c"]))
    a = dict(generic_assignment(backend, sc), timestep=0.002)
    for j in range(1, 7):
        a[f"max_joint_velocity.j{j}"] = vel
    res = simulate(backend, sc, a)
    goal, _, _ = forward_kinematics(target, np.array(sc.link_lengths))
    close = np.linalg.norm(res.wrist.positions - goal, axis=1) < 2e-3
    return res.wrist.times[np.argmax(close)] if close.any() else np.inf


@pytest.mark.parametrize("backend", ["engine-a", "engine-b"])
@pytest.mark.parametrize("vel", [10.0, 15.0, 20.0])
def test_faster_joints_arrive_no_later(backend, vel):
    assert _time_to_reach(2 * vel, backend) <= _time_to_reach(vel, backend)


def test_push_task_sensitivity_ordering():
    sc = task_scene(PUSH_TASK)
    world = reference_world(sc)
    ref = simulate("engine-a", sc, world)

    def effect(name, rel=0.1):
        a = dict(world)
        a[name] *= 1 + rel
        r = simulate("engine-a", sc, a)
        return object_fitness(r.wrist, ref.wrist, r.object_final, ref.object_final).value

    damping = max(effect(f"joint_damping.j{j}") for j in range(1, 7))
    for name in ["timestep", "lateral_friction.wood"] + [f"max_joint_velocity.j{j}" for j in (1, 2, 3)]:
        assert effect(name) > damping, name


@settings(max_examples=25)
@given(st.integers(1, 10), st.sampled_from(["engine-a", "engine-b"]), st.integers(0, 2**32 - 1))
def test_random_in_bounds_params_never_crash(task, backend, seed):
    sc = all_scenes()[task]
    reg = default_individual_registry(sc.bodies())
    rng = np.random.default_rng(seed)
    vec = ParameterVector(reg, reg.lower + rng.random(reg.dimension) * (reg.upper - reg.lower))
    res = simulate(backend, sc, vec)
    assert res.status in ("ok", "diverged", "non-finite")
    assert len(res.wrist) >= 1


def test_every_parameter_reaches_the_engine():
    sc = task_scene(PUSH_TASK)
    base = build_model(sc, reference_world(sc))
    for name, value in reference_world(sc).items():
        m = build_model(sc, {name: value * 1.1 + 1e-3})
        changed = any(
            not np.array_equal(getattr(base, f), getattr(m, f)) for f in ("vmax", "amax", "jdamp", "obj")
        ) or m.dt != base.dt
        assert changed, name


def test_unknown_backend():
    with pytest.raises(UnknownBackendError):
        get_backend("engine-z")


def test_external_backend_round_trip():
    sc = task_scene(2)
    a = generic_assignment("engine-a", sc)
    ext = ExternalBackend([sys.executable, "-c", "from simcal.sim.backends import serve_once; serve_once('engine-a')"])
    assert ext(sc, a, sc.duration) == simulate("engine-a", sc, a)


def test_external_backend_timeout():
    from simcal.sim import SimulationTimeout

    ext = ExternalBackend([sys.executable, "-c", "import time; time.sleep(5)"], timeout=0.5)
    sc = task_scene(1)
    with pytest.raises(SimulationTimeout):
        ext(sc, {}, 1.0)
