import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from latticelab import _kernels_py as py
from latticelab.rng import bit_generator
from latticelab.walk import preset

try:
    from latticelab import _kernels as cy
except ImportError:  # extension not built
    cy = None

needs_ext = pytest.mark.skipif(cy is None, reason="compiled extension not built")


def walk_arrays(name):
    d = preset(name).step
    return np.asarray(d.sampling_cdf), np.asarray(d.steps, dtype=np.int64)


def env_arrays(seed, count, t, rate=1.0):
    cdf, steps = walk_arrays("srw")
    times, pos, offsets = [], [], [0]
    for e in range(count):
        et, ep = py._continuous_path(bit_generator(seed, "env", e), rate, cdf, steps, 0, 0, t)
        times.append(et)
        pos.append(ep)
        offsets.append(offsets[-1] + et.size)
    return np.concatenate(times), np.concatenate(pos), np.array(offsets, dtype=np.int64)


@needs_ext
@given(st.integers(0, 2**32), st.integers(0, 300), st.sampled_from(["srw", "lazy-srw", "diag"]))
def test_origin_visits_agree(seed, n, name):
    cdf, steps = walk_arrays(name)
    a = cy.origin_visits(bit_generator(seed, "k"), cdf, steps, n)
    b = py.origin_visits(bit_generator(seed, "k"), cdf, steps, n)
    assert a == b


@needs_ext
@given(st.integers(0, 2**32), st.integers(0, 200))
def test_discrete_collisions_agree(seed, n):
    cdf, steps = walk_arrays("srw")
    envs = np.stack([py._discrete_path(bit_generator(seed, "env", e), cdf, steps, n) for e in range(3)])
    out_c = np.zeros(3, dtype=np.int64)
    out_p = np.zeros(3, dtype=np.int64)
    cy.discrete_collisions(bit_generator(seed, "x"), cdf, steps, envs, n, out_c)
    py.discrete_collisions(bit_generator(seed, "x"), cdf, steps, envs, n, out_p)
    assert np.array_equal(out_c, out_p)


@needs_ext
@given(st.integers(0, 2**32), st.floats(0.0, 80.0), st.sampled_from([0.0, 0.5, 1.0, 3.0]))
def test_continuous_collisions_agree(seed, t, rate):
    cdf, steps = walk_arrays("srw")
    et, ep, off = env_arrays(seed, 3, t)
    out_c = np.zeros(3)
    out_p = np.zeros(3)
    cy.continuous_collisions(bit_generator(seed, "x"), rate, cdf, steps, 0, 0, t, et, ep, off, out_c)
    py.continuous_collisions(bit_generator(seed, "x"), rate, cdf, steps, 0, 0, t, et, ep, off, out_p)
    assert np.allclose(out_c, out_p, rtol=1e-12, atol=1e-12)
    assert np.all(out_p >= 0) and np.all(out_p <= t + 1e-12)


def test_frozen_walks_overlap_fully():
    cdf, steps = walk_arrays("srw")
    et, ep, off = np.zeros(1), np.zeros((1, 2), dtype=np.int64), np.array([0, 1])
    out = np.zeros(1)
    py.continuous_collisions(bit_generator(0, "x"), 0.0, cdf, steps, 0, 0, 5.0, et, ep, off, out)
    assert out[0] == 5.0
    py.continuous_collisions(bit_generator(0, "x"), 0.0, cdf, steps, 1, 0, 5.0, et, ep, off, out)
    assert out[0] == 0.0


def test_overlap_by_hand():
    xt = np.array([0.0, 1.0, 2.5])
    xp = np.array([[0, 0], [1, 0], [0, 0]])
    et = np.array([0.0, 2.0])
    ep = np.array([[0, 0], [1, 0]])
    # equal on [0, 1) and [2, 2.5)
    assert py._overlap(xt, xp, et, ep, 4.0) == pytest.approx(1.5)


def test_step_frequencies():
    cdf, steps = walk_arrays("lazy-srw")
    path = py._discrete_path(bit_generator(3, "freq"), cdf, steps, 200_000)
    inc = np.diff(path, axis=0)
    lazy_share = np.mean(np.all(inc == 0, axis=1))
    assert lazy_share == pytest.approx(0.5, abs=0.005)


def test_holding_times_exponential():
    cdf, steps = walk_arrays("srw")
    times, _ = py._continuous_path(bit_generator(4, "hold"), 2.0, cdf, steps, 0, 0, 5000.0)
    gaps = np.diff(times)
    assert gaps.mean() == pytest.approx(0.5, rel=0.03)
    assert times.size - 1 == pytest.approx(10000, rel=0.04)
