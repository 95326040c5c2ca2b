"""Pure numpy versions of the compiled sampling loops in ``_kernels.pyx``.

The random doubles are drawn in the same order as the compiled code, so the
two backends agree on every sample (continuous-time overlaps up to rounding).
"""
import math

import numpy as np

BACKEND = "python"


def _pick_many(gen, cdf, n):
    u = gen.random(n)
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)


def _discrete_path(bit_generator, cdf, steps, n, x0=0, x1=0):
    gen = np.random.Generator(bit_generator)
    path = np.empty((n + 1, 2), dtype=np.int64)
    path[0] = (x0, x1)
    if n:
        np.cumsum(np.asarray(steps)[_pick_many(gen, cdf, n)], axis=0, out=path[1:])
        path[1:] += path[0]
    return path


def origin_visits(bit_generator, cdf, steps, n, x0=0, x1=0):
    path = _discrete_path(bit_generator, cdf, steps, n, x0, x1)
    return int(np.count_nonzero((path[:, 0] == 0) & (path[:, 1] == 0)))


def discrete_collisions(bit_generator, cdf, steps, envs, n, out):
    path = _discrete_path(bit_generator, cdf, steps, n)
    envs = np.asarray(envs)[:, : n + 1]
    hits = np.all(envs == path[None], axis=2)
    out[:] = hits.sum(axis=1)


def _continuous_path(bit_generator, rate, cdf, steps, x0, x1, t):
    """Jump times (starting with 0) and positions of X on [0, t]."""
    gen = np.random.Generator(bit_generator)
    start = np.array([[x0, x1]], dtype=np.int64)
    if rate <= 0 or t <= 0:
        return np.zeros(1), start
    # draws alternate: first hold, then (step, hold) pairs
    holds, picks = [], []
    total = 0.0
    first = True
    block = int(rate * t + 10 * math.sqrt(rate * t) + 16)
    while total < t:
        u = gen.random(2 * block + (1 if first else 0))
        if first:
            h = -np.log1p(-u[:1]) / rate
            holds.append(h)
            total += h[0]
            u = u[1:]
            first = False
        st = u[0::2]
        hs = -np.log1p(-u[1::2]) / rate
        picks.append(np.minimum(np.searchsorted(cdf, st, side="right"), len(cdf) - 1))
        holds.append(hs)
        total += hs.sum()
    holds = np.concatenate(holds)
    picks = np.concatenate(picks)
    # jump times are partial sums of holds, accumulated left to right
    times = np.cumsum(holds)
    njump = int(np.searchsorted(times, t, side="left"))
    times = np.concatenate(([0.0], times[:njump]))
    pos = np.empty((njump + 1, 2), dtype=np.int64)
    pos[0] = start[0]
    if njump:
        pos[1:] = start[0] + np.cumsum(np.asarray(steps)[picks[:njump]], axis=0)
    return times, pos


def _overlap(xt, xp, et, ep, t):
    cuts = np.union1d(xt, et)
    cuts = cuts[cuts < t]
    ends = np.append(cuts[1:], t)
    ix = np.searchsorted(xt, cuts, side="right") - 1
    ie = np.searchsorted(et, cuts, side="right") - 1
    same = np.all(xp[ix] == ep[ie], axis=1)
    return float(np.sum((ends - cuts)[same]))


def continuous_collisions(bit_generator, rate, cdf, steps, x0, x1, t, env_times, env_pos, offsets, out):
    xt, xp = _continuous_path(bit_generator, rate, cdf, steps, x0, x1, t)
    env_times = np.asarray(env_times)
    env_pos = np.asarray(env_pos)
    for e in range(len(offsets) - 1):
        sl = slice(offsets[e], offsets[e + 1])
        out[e] = _overlap(xt, xp, env_times[sl], env_pos[sl], t)
