"""Time the compiled sampling loops against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--scale 1.0]

Both backends consume the same random streams, so the script also checks
that they return the same samples.
"""
import argparse
import time

import numpy as np

from latticelab import _kernels_py
from latticelab.mc import sample_environment
from latticelab.rng import bit_generator
from latticelab.walk import difference_walk, preset

try:
    from latticelab import _kernels
except ImportError:
    _kernels = None


def origin_case(mod, n, reps):
    z = difference_walk(preset("srw"), preset("srw")).step
    return np.array([mod.origin_visits(bit_generator(1, "bench", 0, r), z.sampling_cdf, z.steps, n)
                     for r in range(reps)])


def discrete_case(mod, n, reps):
    srw = preset("srw")
    envs = np.stack([sample_environment(srw, n, 1, i).positions for i in range(4)])
    out = np.zeros((reps, 4), dtype=np.int64)
    for r in range(reps):
        mod.discrete_collisions(bit_generator(1, "bench", 1, r), srw.step.sampling_cdf, srw.step.steps, envs, n, out[r])
    return out


def continuous_case(mod, t, reps):
    c = preset("srw", "continuous", 1)
    envs = [sample_environment(c, t, 1, i) for i in range(4)]
    times = np.concatenate([e.times for e in envs])
    pos = np.concatenate([e.positions for e in envs])
    offsets = np.cumsum([0] + [e.times.size for e in envs])
    out = np.zeros((reps, 4))
    for r in range(reps):
        mod.continuous_collisions(bit_generator(1, "bench", 2, r), 1.0, c.step.sampling_cdf, c.step.steps,
                                  0, 0, float(t), times, pos, offsets, out[r])
    return out


def best_of(fn, repeat):
    times, result = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return min(times), result


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--scale", type=float, default=1.0, help="multiply replica counts")
    args = p.parse_args(argv)
    s = args.scale
    cases = [
        ("origin visits, n=1024", lambda m: origin_case(m, 1024, int(2000 * s))),
        ("origin visits, n=16", lambda m: origin_case(m, 16, int(20000 * s))),
        ("4-env collisions, n=1024", lambda m: discrete_case(m, 1024, int(1000 * s))),
        ("4-env collisions, t=1024", lambda m: continuous_case(m, 1024, int(500 * s))),
    ]
    if _kernels is None:
        print("compiled extension not built; timing the numpy fallback only")
    print(f"{'case':28s} {'numpy (s)':>10s} {'cython (s)':>11s} {'speedup':>8s}  same samples")
    for name, case in cases:
        tp, rp = best_of(lambda: case(_kernels_py), args.repeat)
        if _kernels is None:
            print(f"{name:28s} {tp:10.3f}")
            continue
        tc, rc = best_of(lambda: case(_kernels), args.repeat)
        same = np.allclose(rp, rc, rtol=1e-12, atol=1e-12)
        print(f"{name:28s} {tp:10.3f} {tc:11.3f} {tp / tc:8.1f}  {same}")


if __name__ == "__main__":
    main()
