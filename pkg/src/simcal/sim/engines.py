"""Deterministic reference engines for a 6-DOF arm pushing one planar object.

Arm: joints track a zero-order-hold joint command script with a
proportional velocity command (gain ``KP``), saturated at the max joint
velocity; joint acceleration is capped at torque / effective inertia.

Object: a disk footprint (radius, height) on the floor plane. A contact
sphere at the end effector pushes it with an impulse scaled by restitution
and the gripper/object mass ratio. Free motion decelerates by
``mu * g`` (sliding for cubes/cuboids, rolling for cylinders/cones) and
linear and angular damping scale velocities by ``1 - c * dt`` per step.

engine-a integrates explicitly (positions advance with the old velocity);
engine-b is semi-implicit and uses a stiffer contact impulse.

State layout: q[0:6], qd[6:12], object x, y, vx, vy, yaw, spin [12:18],
previous end-effector position [18:21].
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

GRAVITY = 9.81
CONTACT_RADIUS = 0.03
KP = 10.0
STATE_SIZE = 21

# object property slots
O_HAS, O_RADIUS, O_HEIGHT, O_ROLLING, O_RATIO, O_MU_SLIDE, O_MU_ROLL, O_MU_SPIN, O_COUPLING, O_RESTITUTION, O_LIN_DAMP, O_ANG_DAMP = range(12)
N_OBJ_PROPS = 12

OK, DIVERGED, NON_FINITE = 0, 1, 2
STATUS_NAMES = {OK: "ok", DIVERGED: "diverged", NON_FINITE: "non-finite"}
WORKSPACE_LIMIT = 10.0


@njit(cache=True)
def _mm3(a, b):
    out = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            out[i, j] = a[i, 0] * b[0, j] + a[i, 1] * b[1, j] + a[i, 2] * b[2, j]
    return out


@njit(cache=True)
def _rot(axis, ang):
    c = math.cos(ang)
    s = math.sin(ang)
    r = np.zeros((3, 3))
    if axis == 0:
        r[0, 0] = 1.0
        r[1, 1] = c
        r[1, 2] = -s
        r[2, 1] = s
        r[2, 2] = c
    elif axis == 1:
        r[1, 1] = 1.0
        r[0, 0] = c
        r[0, 2] = s
        r[2, 0] = -s
        r[2, 2] = c
    else:
        r[2, 2] = 1.0
        r[0, 0] = c
        r[0, 1] = -s
        r[1, 0] = s
        r[1, 1] = c
    return r


@njit(cache=True)
def forward_kinematics(q, L):
    """Wrist point, end-effector point and wrist frame.

    Base yaw, shoulder pitch (upper arm along local z), elbow pitch (forearm
    along local x), forearm roll, wrist pitch, gripper roll. The wrist point
    sits after the wrist pitch, so the final roll moves neither point.
    """
    R = _rot(2, q[0])
    p = np.array([0.0, 0.0, L[0]])
    R = _mm3(R, _rot(1, q[1]))
    p = p + R[:, 2] * L[1]
    R = _mm3(R, _rot(1, q[2]))
    p = p + R[:, 0] * L[2]
    R = _mm3(R, _rot(0, q[3]))
    p = p + R[:, 0] * L[3]
    R = _mm3(R, _rot(1, q[4]))
    wrist = p + R[:, 0] * L[4]
    R = _mm3(R, _rot(0, q[5]))
    ee = wrist + R[:, 0] * L[5]
    return wrist, ee, R


@njit(cache=True)
def _target(t, script_t, script_q, home, j):
    k = -1
    for i in range(len(script_t)):
        if script_t[i] <= t + 1e-12:
            k = i
        else:
            break
    if k < 0:
        return home[j]
    return script_q[k, j]


@njit(cache=True)
def _clip(x, lim):
    if x > lim:
        return lim
    if x < -lim:
        return -lim
    return x


@njit(cache=True)
def step(state, t, dt, L, vmax, amax, jdamp, obj, semi_implicit, stiff, script_t, script_q, home):
    """Advance ``state`` in place by one step of length ``dt``; returns a status code."""
    for j in range(6):
        q = state[j]
        qd = state[6 + j]
        v_des = _clip(KP * (_target(t, script_t, script_q, home, j) - q), vmax[j])
        a = _clip((v_des - qd) / dt, amax[j])
        qd_new = qd + a * dt
        qd_new -= jdamp[j] * qd_new * dt
        qd_new = _clip(qd_new, vmax[j])
        if semi_implicit:
            state[6 + j] = qd_new
            state[j] = q + qd_new * dt
        else:
            state[j] = q + qd * dt
            state[6 + j] = qd_new

    _, ee, _ = forward_kinematics(state[0:6], L)
    evx = (ee[0] - state[18]) / dt
    evy = (ee[1] - state[19]) / dt
    state[18] = ee[0]
    state[19] = ee[1]
    state[20] = ee[2]

    if obj[O_HAS] > 0.5:
        if not semi_implicit:
            state[12] += state[14] * dt
            state[13] += state[15] * dt
            state[16] += state[17] * dt
        radius = obj[O_RADIUS]
        reach = CONTACT_RADIUS + radius
        dx = state[12] - ee[0]
        dy = state[13] - ee[1]
        dist = math.sqrt(dx * dx + dy * dy)
        if ee[2] - CONTACT_RADIUS < obj[O_HEIGHT] and dist < reach and dist > 1e-12:
            nx = dx / dist
            ny = dy / dist
            rel_n = (evx - state[14]) * nx + (evy - state[15]) * ny
            if rel_n > 0.0:
                ratio = obj[O_RATIO]
                if stiff:
                    ratio = math.sqrt(ratio)
                jn = (1.0 + obj[O_RESTITUTION]) * ratio * rel_n
                state[14] += jn * nx
                state[15] += jn * ny
                tx = -ny
                ty = nx
                rel_t = (evx - state[14]) * tx + (evy - state[15]) * ty
                jt = obj[O_COUPLING] * obj[O_RATIO] * rel_t
                state[14] += jt * tx
                state[15] += jt * ty
                state[17] += jt / radius
            state[12] = ee[0] + nx * reach
            state[13] = ee[1] + ny * reach

        mu = obj[O_MU_ROLL] if obj[O_ROLLING] > 0.5 else obj[O_MU_SLIDE]
        speed = math.sqrt(state[14] * state[14] + state[15] * state[15])
        dec = mu * GRAVITY * dt
        if speed > dec:
            s = (speed - dec) / speed
            state[14] *= s
            state[15] *= s
        else:
            state[14] = 0.0
            state[15] = 0.0
        damp = 1.0 - obj[O_LIN_DAMP] * dt
        if damp < 0.0:
            damp = 0.0
        state[14] *= damp
        state[15] *= damp

        w = state[17]
        wdec = obj[O_MU_SPIN] * GRAVITY * dt / radius
        if abs(w) > wdec:
            w -= wdec * (1.0 if w > 0 else -1.0)
        else:
            w = 0.0
        adamp = 1.0 - obj[O_ANG_DAMP] * dt
        if adamp < 0.0:
            adamp = 0.0
        state[17] = w * adamp

        if semi_implicit:
            state[12] += state[14] * dt
            state[13] += state[15] * dt
            state[16] += state[17] * dt

    for i in range(STATE_SIZE):
        if not math.isfinite(state[i]):
            return NON_FINITE
    for j in range(6):
        if abs(state[j]) > 100.0:
            return DIVERGED
    if abs(state[12]) > WORKSPACE_LIMIT or abs(state[13]) > WORKSPACE_LIMIT:
        return DIVERGED
    return OK


@njit(cache=True)
def initial_state(home, L, obj_xy_yaw):
    s = np.zeros(STATE_SIZE)
    s[0:6] = home
    _, ee, _ = forward_kinematics(home, L)
    s[12] = obj_xy_yaw[0]
    s[13] = obj_xy_yaw[1]
    s[16] = obj_xy_yaw[2]
    s[18:21] = ee
    return s


@njit(cache=True)
def run_episode(dt, n_samples, sample_dt, L, vmax, amax, jdamp, obj, obj_init, semi_implicit, stiff,
                script_t, script_q, home):
    """Simulate and record the wrist on the grid ``k * sample_dt``.

    A grid point records the state after the last step whose time does not
    exceed it. Returns (wrist positions, wrist frames, object x/y/yaw,
    status, recorded sample count).
    """
    wrist_out = np.zeros((n_samples, 3))
    frames = np.zeros((n_samples, 3, 3))
    state = initial_state(home, L, obj_init)
    status = OK
    k = 0
    m = 0
    m_last = int(math.floor((n_samples - 1) * sample_dt / dt + 1e-9))
    while True:
        while k < n_samples and int(math.floor(k * sample_dt / dt + 1e-9)) <= m:
            w, _, R = forward_kinematics(state[0:6], L)
            wrist_out[k] = w
            frames[k] = R
            k += 1
        if m >= m_last or k >= n_samples:
            break
        status = step(state, m * dt, dt, L, vmax, amax, jdamp, obj, semi_implicit, stiff, script_t, script_q, home)
        m += 1
        if status != OK:
            break
    final = np.array([state[12], state[13], state[16]])
    return wrist_out, frames, final, status, k
