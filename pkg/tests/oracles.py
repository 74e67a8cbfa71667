"""Independent reference implementations written with plain loops.

They deliberately share no code with the package.
"""

import math


def point_distance(a, b):
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)


def mean_wrist_error(sim, ref):
    total = 0.0
    comp = 0.0
    for p, q in zip(sim, ref):
        # Kahan summation
        y = point_distance(p, q) - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total / len(ref)


def wrist_plus_object_error(sim, ref, sim_obj, ref_obj):
    return mean_wrist_error(sim, ref) + point_distance(sim_obj, ref_obj)


def lerp_at(times, values, t):
    for i in range(len(times) - 1):
        t0, t1 = times[i], times[i + 1]
        if t0 <= t <= t1:
            w = (t - t0) / (t1 - t0)
            return [values[i][k] + w * (values[i + 1][k] - values[i][k]) for k in range(3)]
    raise ValueError("t outside range")


def de_step_reference(pop, fit, f, F, order):
    """One best/1/bin step with CR = 1 on lists; ``order[i]`` gives (r1, r2)."""
    best = min(range(len(fit)), key=lambda i: (fit[i], i))
    new_pop, new_fit = [], []
    for i in range(len(pop)):
        r1, r2 = order[i]
        trial = [pop[best][k] + F * (pop[r1][k] - pop[r2][k]) for k in range(len(pop[i]))]
        ft = f(trial)
        if ft < fit[i]:
            new_pop.append(trial)
            new_fit.append(ft)
        else:
            new_pop.append(list(pop[i]))
            new_fit.append(fit[i])
    return new_pop, new_fit
