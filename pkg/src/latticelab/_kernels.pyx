# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sampling loops.

Every routine takes a numpy BitGenerator and consumes its doubles in the
same order as the pure-Python fallback in ``_kernels_py``, so both backends
see identical random inputs.
"""
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport log1p, INFINITY
from libc.stdint cimport int64_t
from numpy.random cimport bitgen_t

import numpy as np

BACKEND = "cython"


cdef inline bitgen_t* _bitgen(object bit_generator) except NULL:
    return <bitgen_t*> PyCapsule_GetPointer(bit_generator.capsule, "BitGenerator")


cdef inline Py_ssize_t _pick(bitgen_t* rng, const double[::1] cdf) noexcept nogil:
    cdef double u = rng.next_double(rng.state)
    cdef Py_ssize_t k = 0
    cdef Py_ssize_t last = cdf.shape[0] - 1
    while k < last and u >= cdf[k]:
        k += 1
    return k


cdef inline double _hold(bitgen_t* rng, double rate) noexcept nogil:
    return -log1p(-rng.next_double(rng.state)) / rate


def origin_visits(bit_generator, const double[::1] cdf, const int64_t[:, ::1] steps,
                  Py_ssize_t n, int64_t x0=0, int64_t x1=0):
    """Number of i in [0, n] with X_i = 0 for a discrete walk started at (x0, x1)."""
    cdef bitgen_t* rng = _bitgen(bit_generator)
    cdef Py_ssize_t i, k
    cdef int64_t a = x0, b = x1
    cdef Py_ssize_t count = 1 if (a == 0 and b == 0) else 0
    with bit_generator.lock, nogil:
        for i in range(n):
            k = _pick(rng, cdf)
            a += steps[k, 0]
            b += steps[k, 1]
            if a == 0 and b == 0:
                count += 1
    return count


def discrete_collisions(bit_generator, const double[::1] cdf, const int64_t[:, ::1] steps,
                        const int64_t[:, :, ::1] envs, Py_ssize_t n, int64_t[::1] out):
    """out[e] = #{i in [0, n] : X_i = envs[e, i]} for one sampled X path from the origin."""
    cdef bitgen_t* rng = _bitgen(bit_generator)
    cdef Py_ssize_t i, k, e
    cdef Py_ssize_t ne = envs.shape[0]
    cdef int64_t a = 0, b = 0
    with bit_generator.lock, nogil:
        for e in range(ne):
            out[e] = 1 if (envs[e, 0, 0] == 0 and envs[e, 0, 1] == 0) else 0
        for i in range(1, n + 1):
            k = _pick(rng, cdf)
            a += steps[k, 0]
            b += steps[k, 1]
            for e in range(ne):
                if envs[e, i, 0] == a and envs[e, i, 1] == b:
                    out[e] += 1


def continuous_collisions(bit_generator, double rate, const double[::1] cdf,
                          const int64_t[:, ::1] steps, int64_t x0, int64_t x1, double t,
                          const double[::1] env_times, const int64_t[:, ::1] env_pos,
                          const int64_t[::1] offsets, double[::1] out):
    """Time X spends on each environment path during [0, t].

    Environment e is the piecewise-constant path with pieces
    ``offsets[e] <= j < offsets[e + 1]``: position ``env_pos[j]`` from
    ``env_times[j]`` until the next piece starts (the last piece runs to t).
    X starts at (x0, x1), holds Exp(rate) times and jumps with ``steps``.
    """
    cdef bitgen_t* rng = _bitgen(bit_generator)
    cdef Py_ssize_t ne = offsets.shape[0] - 1
    cdef Py_ssize_t e, j, k, end
    cdef double s = 0.0, s_end, lo, hi, h
    cdef int64_t a = x0, b = x1
    cdef int64_t[::1] ptr = np.array(offsets[:ne], dtype=np.int64)
    with bit_generator.lock, nogil:
        for e in range(ne):
            out[e] = 0.0
        h = _hold(rng, rate) if rate > 0 else INFINITY
        while s < t:
            s_end = s + h
            if s_end > t:
                s_end = t
            for e in range(ne):
                end = offsets[e + 1]
                j = ptr[e]
                while j + 1 < end and env_times[j + 1] <= s:
                    j += 1
                ptr[e] = j
                while j < end and env_times[j] < s_end:
                    lo = env_times[j] if env_times[j] > s else s
                    hi = s_end
                    if j + 1 < end and env_times[j + 1] < hi:
                        hi = env_times[j + 1]
                    if hi > lo and env_pos[j, 0] == a and env_pos[j, 1] == b:
                        out[e] += hi - lo
                    j += 1
            s = s_end
            if s >= t:
                break
            k = _pick(rng, cdf)
            a += steps[k, 0]
            b += steps[k, 1]
            h = _hold(rng, rate)
