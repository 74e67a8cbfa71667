"""Helpers that drive the engine kernel directly."""

import numpy as np

from simcal.sim import engines
from simcal.sim.scene import DEFAULT_LINK_LENGTHS


def free_slide(v0, mu, dt, semi_implicit=False, lin_damp=0.0, max_time=60.0):
    """Distance a cube travels from speed ``v0`` with no arm contact."""
    L = np.array(DEFAULT_LINK_LENGTHS)
    obj = np.zeros(engines.N_OBJ_PROPS)
    obj[engines.O_HAS] = 1.0
    obj[engines.O_RADIUS] = 0.03
    obj[engines.O_HEIGHT] = 0.06
    obj[engines.O_RATIO] = 0.8
    obj[engines.O_MU_SLIDE] = mu
    obj[engines.O_LIN_DAMP] = lin_damp
    home = np.zeros(6)
    # object far outside the arm's reach so it is never touched
    state = engines.initial_state(home, L, np.array([-3.0, 0.0, 0.0]))
    state[14] = v0
    script_t, script_q = np.zeros(0), np.zeros((0, 6))
    vmax = np.full(6, 1.0)
    amax = np.full(6, 10.0)
    jdamp = np.zeros(6)
    t = 0.0
    while t < max_time:
        status = engines.step(state, t, dt, L, vmax, amax, jdamp, obj, semi_implicit, False, script_t, script_q, home)
        assert status == engines.OK
        t += dt
        if state[14] == 0.0 and state[15] == 0.0:
            break
    return state[12] + 3.0
