from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from latticelab.exact import kernel_grids
from latticelab.spectral import origin_series, transition_series
from latticelab.walk import StepDistribution, difference_walk, preset

F = Fraction


def srw_return(n):
    # p_{2m}(0) = C(2m, m)^2 / 16^m for the simple walk
    if n % 2:
        return 0.0
    m = n // 2
    return float(F(comb(2 * m, m) ** 2, 16**m))


def test_simple_walk_closed_form_small():
    p = origin_series(preset("srw").step, 60)
    ref = np.array([srw_return(n) for n in range(61)])
    assert np.max(np.abs(p - ref)) < 1e-15


@pytest.mark.parametrize("n", [1000, 4096, 20000])
def test_simple_walk_closed_form_large(n):
    p = origin_series(preset("srw").step, n)
    assert p[n] == pytest.approx(srw_return(n), rel=1e-10)
    assert p[n - 1] < 1e-15


@pytest.mark.parametrize("name", ["srw", "lazy-srw", "diag"])
def test_against_exact_grids(name):
    dist = preset(name).step
    N = 14
    grids, W = kernel_grids(dist, N, exact=True)
    sites = [(0, 0), (1, 0), (2, 1), (-3, 2), (4, 4)]
    series = transition_series(dist, N, sites)
    for j in range(N + 1):
        for i, (a, b) in enumerate(sites):
            assert series[j, i] == pytest.approx(float(grids[j, W + a, W + b]), abs=1e-15)


def test_pair_difference_walk_sites():
    z = difference_walk(preset("srw"), preset("srw")).step
    grids, W = kernel_grids(z, 30)
    sites = [(0, 0), (1, 1), (2, 0), (5, 3)]
    series = transition_series(z, 30, sites)
    want = np.stack([grids[:, W + a, W + b] for a, b in sites], axis=1)
    assert np.max(np.abs(series - want)) < 1e-14


def test_long_horizon_against_direct_grid():
    dist = preset("lazy-srw").step
    N = 200
    grids, W = kernel_grids(dist, N, cap=1 << 27)
    series = transition_series(dist, N, [(0, 0), (7, -3)])
    assert series[N, 0] == pytest.approx(grids[N, W, W], rel=1e-11)
    assert series[N, 1] == pytest.approx(grids[N, W + 7, W - 3], rel=1e-10)


def test_chapman_kolmogorov():
    # p_{2n}(0) = sum_x p_n(x) p_n(-x)
    dist = preset("lazy-srw").step
    n = 40
    grids, W = kernel_grids(dist, n)
    g = grids[n]
    lhs = origin_series(dist, 2 * n)[2 * n]
    assert lhs == pytest.approx(float(np.sum(g * g[::-1, ::-1])), rel=1e-12)


def test_drifting_walk_uses_direct_route():
    dist = StepDistribution.from_mapping({(1, 0): F(1, 2), (0, 1): F(1, 4), (0, 0): F(1, 4)})
    series = transition_series(dist, 6, [(3, 1), (0, 0)])
    assert series[4, 0] == pytest.approx(4 * (1 / 2) ** 3 * (1 / 4))
    assert series[3, 1] == pytest.approx((1 / 4) ** 3)
    assert series[1, 0] == 0.0


def test_point_mass():
    s = transition_series(StepDistribution.point_mass(), 5, [(0, 0), (1, 0)])
    assert np.all(s[:, 0] == 1) and np.all(s[:, 1] == 0)


@given(st.integers(0, 3), st.integers(0, 3))
def test_symmetry_of_kernel(a, b):
    dist = preset("lazy-srw").step
    s = transition_series(dist, 25, [(a, b), (-a, -b), (b, a)])
    assert np.allclose(s[:, 0], s[:, 1], atol=1e-15)
    assert np.allclose(s[:, 0], s[:, 2], atol=1e-15)


def test_values_bounded():
    p = origin_series(preset("lazy-srw").step, 5000)
    assert np.all(p >= 0) and np.all(p <= 1)
    assert np.all(np.diff(p) <= 1e-16)  # lazy walk return probabilities decrease
