"""Exact transition kernels, local-time laws and moments.

Everything here is deterministic. Return probabilities p_j(0) for long
horizons come from :mod:`latticelab.spectral`; full grids p_j(.) are built
by direct stencil convolution (in rationals when the step weights are exact
and ``exact=True`` is requested).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats
from scipy.signal import fftconvolve
from scipy.special import stirling2

from .errors import DegenerateCovariance, GridTooLarge
from .spectral import origin_series, transition_series
from .walk import CovarianceMatrix, StepDistribution, WalkSpec

DEFAULT_GRID_CAP = 1 << 25  # doubles held by a full grid table
_DIRECT_RENEWAL_MAX = 4096
_PMF_TAIL = 1e-17


# -- kernel tables ------------------------------------------------------------

@dataclass(frozen=True)
class KernelTable:
    """Return probabilities p_j(0), j = 0..N, and optionally full grids.

    For a continuous-time walk the table describes its jump chain.

    Attributes
    ----------
    walk : WalkSpec
    horizon : int
    p0 : ndarray
        ``p0[j] = p_j(0)``.
    grids : ndarray or None
        Shape ``(N + 1, 2W + 1, 2W + 1)`` with ``W = radius``; entry
        ``grids[j, W + x1, W + x2] = p_j(x)``. Object dtype (Fractions) in
        exact mode.
    """

    walk: WalkSpec
    horizon: int
    p0: np.ndarray
    grids: np.ndarray | None = None
    radius: int = 0
    exact: bool = False

    def p(self, j: int, x) -> float:
        if self.grids is None:
            raise ValueError("table was built without grids")
        a, b = int(x[0]) + self.radius, int(x[1]) + self.radius
        w = 2 * self.radius + 1
        if not (0 <= a < w and 0 <= b < w):
            return Fraction(0) if self.exact else 0.0
        return self.grids[j, a, b]

    def grid(self, j: int) -> np.ndarray:
        """p_j on its own ball of radius reach*j (a view into the table)."""
        r = self.walk.step.reach_inf * j
        c = self.radius
        return self.grids[j, c - r : c + r + 1, c - r : c + r + 1]


def _stencil_step(prev: np.ndarray, dist: StepDistribution, exact: bool) -> np.ndarray:
    out = np.zeros_like(prev)
    n = prev.shape[0]
    weights = dist.weights if exact else dist.probs
    for (dx, dy), w in zip(dist.support, weights):
        xs = slice(max(0, -dx), min(n, n - dx))
        xd = slice(max(0, dx), min(n, n + dx))
        ys = slice(max(0, -dy), min(n, n - dy))
        yd = slice(max(0, dy), min(n, n + dy))
        out[xd, yd] += w * prev[xs, ys]
    return out


def kernel_grids(dist: StepDistribution, N: int, *, exact: bool = False, cap: int = DEFAULT_GRID_CAP):
    """Grids p_j(.) for j = 0..N on the common ball of radius reach*N."""
    if exact and not dist.exact:
        raise ValueError("exact grids need rational step weights")
    W = dist.reach_inf * N
    size = (N + 1) * (2 * W + 1) ** 2
    if size > cap:
        raise GridTooLarge(f"grid table needs {size} cells (cap {cap})")
    dtype = object if exact else float
    grids = np.zeros((N + 1, 2 * W + 1, 2 * W + 1), dtype=dtype)
    if exact:
        grids[...] = Fraction(0)
    grids[0, W, W] = Fraction(1) if exact else 1.0
    for j in range(1, N + 1):
        grids[j] = _stencil_step(grids[j - 1], dist, exact)
    return grids, W


def build_kernel_table(walk: WalkSpec, N: int, want_grids: bool = False, *, exact: bool = False,
                       grid_cap: int = DEFAULT_GRID_CAP) -> KernelTable:
    """Tabulate p_j(0) for j <= N, plus the full grids when ``want_grids``.

    Raises
    ------
    GridTooLarge
        When the grid table would exceed ``grid_cap`` cells.
    """
    if N < 0:
        raise ValueError("N must be >= 0")
    dist = walk.step
    if want_grids or exact:
        grids, W = kernel_grids(dist, N, exact=exact, cap=grid_cap)
        p0 = grids[:, W, W].copy()
        if not exact:
            p0 = p0.astype(float)
        return KernelTable(walk, N, p0, grids if want_grids else None, W if want_grids else 0, exact)
    return KernelTable(walk, N, np.array(origin_series(dist, N)))


# -- continuous time ------------------------------------------------------------

def _poisson_window(mu: float, tol: float) -> tuple[int, int]:
    if mu == 0:
        return 0, 0
    lo = int(stats.poisson.ppf(tol / 4, mu))
    hi = int(stats.poisson.isf(tol / 4, mu)) + 1
    return max(lo - 1, 0), hi


def continuous_kernel(walk: WalkSpec, t: float, x=(0, 0), tol: float = 1e-12) -> float:
    """p_t(x) of a continuous-time walk by uniformization.

    Sum of Poisson(rt) weights times jump-chain probabilities p_k(x); the
    Poisson mass left out is below ``tol``, which bounds the error.
    """
    if t < 0 or tol <= 0:
        raise ValueError("need t >= 0 and tol > 0")
    mu = float(walk.rate) * t
    lo, hi = _poisson_window(mu, tol)
    series = transition_series(walk.step, hi, sites=(tuple(x),))[:, 0]
    k = np.arange(lo, hi + 1)
    return float(np.dot(stats.poisson.pmf(k, mu), series[lo : hi + 1]))


def continuous_origin_curve(walk: WalkSpec, times, tol: float = 1e-12) -> np.ndarray:
    """p_s(0) at each time in ``times``."""
    times = np.asarray(times, dtype=float)
    r = float(walk.rate)
    hi_all = max(_poisson_window(r * s, tol)[1] for s in times) if times.size else 0
    series = origin_series(walk.step, hi_all)
    out = np.empty(times.shape)
    for i, s in enumerate(times.flat):
        lo, hi = _poisson_window(r * s, tol)
        k = np.arange(lo, hi + 1)
        out.flat[i] = np.dot(stats.poisson.pmf(k, r * s), series[lo : hi + 1])
    return out


def continuous_kernel_grid(walk: WalkSpec, t: float, tol: float = 1e-12, cap: int = DEFAULT_GRID_CAP):
    """Full p_t(.) on the ball reached by the retained jump counts; returns (grid, radius)."""
    mu = float(walk.rate) * t
    lo, hi = _poisson_window(mu, tol)
    grids, W = kernel_grids(walk.step, hi, cap=cap)
    w = stats.poisson.pmf(np.arange(lo, hi + 1), mu)
    return np.tensordot(w, grids[lo : hi + 1], axes=1), W


# -- renewal structure ----------------------------------------------------------

def series_inverse(a: np.ndarray, n: int) -> np.ndarray:
    """First n coefficients of 1/a(s) (Newton iteration with FFT products)."""
    a = np.asarray(a, dtype=float)
    b = np.array([1.0 / a[0]])
    m = 1
    while m < n:
        m2 = min(2 * m, n)
        size = 1 << int(math.ceil(math.log2(3 * m2)))
        fb = np.fft.rfft(b, size)
        ab = np.fft.irfft(np.fft.rfft(a[:m2], size) * fb, size)[:m2]
        corr = np.fft.irfft(np.fft.rfft(ab, size) * fb, size)[:m2]
        b = 2.0 * np.concatenate([b, np.zeros(m2 - b.size)]) - corr
        m = m2
    return b[:n]


def first_return_from_returns(p0: np.ndarray) -> np.ndarray:
    """First-return law f from return probabilities via p_j = sum_i f_i p_{j-i}."""
    p0 = np.asarray(p0, dtype=float)
    n = p0.size - 1
    if n <= _DIRECT_RENEWAL_MAX:
        f = np.zeros(n + 1)
        for j in range(1, n + 1):
            f[j] = p0[j] - np.dot(f[1:j], p0[j - 1 : 0 : -1])
    else:
        # F(s) = 1 - 1/P(s)
        f = -series_inverse(p0, n + 1)
        f[0] = 0.0
    np.maximum(f, 0.0, out=f)
    return f


def first_return_law(walk: WalkSpec, n: int) -> np.ndarray:
    """f_j = P(first return to 0 at step j) for j <= n (jump chain if continuous)."""
    return first_return_from_returns(origin_series(walk.step, n))


def returns_from_first_return(f: np.ndarray) -> np.ndarray:
    """Inverse of :func:`first_return_from_returns` (used as a consistency check)."""
    n = f.size - 1
    p = np.zeros(n + 1)
    p[0] = 1.0
    for j in range(1, n + 1):
        p[j] = np.dot(f[1 : j + 1], p[j - 1 :: -1][:j])
    return p


def _truncated_convolve(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    if n <= 2048:
        return np.convolve(a, b)[: n + 1]
    return fftconvolve(a, b)[: n + 1]


@dataclass(frozen=True)
class LocalTimePMF:
    """Law of L_n = #{0 <= i <= n : X_i = 0}; ``probs[m - 1] = P(L_n = m)``."""

    horizon: int
    probs: np.ndarray = field(repr=False)

    @property
    def support(self) -> np.ndarray:
        return np.arange(1, self.probs.size + 1)

    def prob(self, m: int) -> float:
        if 1 <= m <= self.probs.size:
            return float(self.probs[m - 1])
        return 0.0

    def moment(self, k: int) -> float:
        return float(np.dot(self.support.astype(float) ** k, self.probs))

    def mean(self) -> float:
        return self.moment(1)

    def total(self) -> float:
        return float(self.probs.sum())

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)


def local_time_pmf(walk: WalkSpec, n: int) -> LocalTimePMF:
    """Exact law of the discrete local time at the origin up to step n.

    P(L_n >= m + 1) is the mass of the m-fold convolution of the first-return
    law on [0, n]. Convolution powers stop once their mass drops below 1e-17.
    """
    if not walk.is_discrete:
        raise ValueError("local_time_pmf needs a discrete-time walk")
    if n < 0:
        raise ValueError("n must be >= 0")
    f = first_return_law(walk, n)
    tails = [1.0]
    g = f.copy()
    m = 1
    while m <= n:
        s = float(g.sum())
        if s < _PMF_TAIL:
            break
        tails.append(s)
        m += 1
        g = _truncated_convolve(g, f, n)
        np.maximum(g, 0.0, out=g)
    tails = np.array(tails + [0.0])
    probs = np.zeros(n + 1)
    probs[: tails.size - 1] = tails[:-1] - tails[1:]
    return LocalTimePMF(n, probs)


# -- moments --------------------------------------------------------------------

def factorial_moments(p0: np.ndarray, m_max: int) -> np.ndarray:
    """E[C(L_n, m)] for m = 0..m_max from return probabilities p0[0..n].

    C(L, m) counts m-subsets of visit times, so its mean is the sum of the
    coefficients up to degree n of P(s) (P(s) - 1)^(m-1).
    """
    p0 = np.asarray(p0, dtype=float)
    n = p0.size - 1
    out = np.zeros(m_max + 1)
    out[0] = 1.0
    if m_max == 0:
        return out
    out[1] = p0.sum()
    if m_max == 1:
        return out
    q = p0.copy()
    q[0] = 0.0
    # m = 2 in O(n): sum_i p_i (S_{n-i} - 1), S_k = p_0 + ... + p_k
    cum = np.cumsum(p0)
    out[2] = float(np.dot(p0, cum[::-1] - 1.0))
    g = _truncated_convolve(p0, q, n) if m_max > 2 else None
    for m in range(3, m_max + 1):
        g = _truncated_convolve(g, q, n)
        out[m] = g.sum()
    return out


def raw_from_factorial(fact: np.ndarray, k_max: int) -> np.ndarray:
    """E[L^k] = sum_m S(k, m) m! E[C(L, m)] for k = 0..k_max."""
    out = np.zeros(k_max + 1)
    for k in range(k_max + 1):
        out[k] = sum(
            float(stirling2(k, m, exact=True)) * math.factorial(m) * fact[m] for m in range(k + 1)
        )
    return out


def exact_moments(walk: WalkSpec, n: int, k_max: int) -> np.ndarray:
    """E[L_n^k], k = 0..k_max, for a discrete walk (factorial-moment route)."""
    if not walk.is_discrete:
        raise ValueError("exact_moments needs a discrete-time walk")
    return raw_from_factorial(factorial_moments(origin_series(walk.step, n), k_max), k_max)


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    refinement_delta: float
    grid_step: float


def _nested_integral(p: np.ndarray, h: float, k: int) -> float:
    """k-fold nested trapezoid integral on an equispaced grid; returns F_k at the last node.

    F_1(s) = int_0^s p, F_m(s) = int_0^s p(u) F_{m-1}(s - u) du.
    """
    F = np.concatenate(([0.0], np.cumsum(0.5 * h * (p[1:] + p[:-1]))))
    n = p.size - 1
    for _ in range(2, k + 1):
        conv = _truncated_convolve(p, F, n)
        # trapezoid end corrections; F(0) = 0 removes the u = s end
        F = h * (conv - 0.5 * p[0] * F)
    return float(F[-1])


def exact_moments_continuous(walk: WalkSpec, t: float, k: int, grid_step: float, *,
                             rel_tol: float = 1e-3, max_halvings: int = 8,
                             tol: float = 1e-12) -> QuadratureResult:
    """E[L_t^k] = k! * k-fold nested integral of p_s(0), by composite trapezoid.

    The grid step is halved until two successive values differ by less than
    ``rel_tol`` (relative); the last difference is reported.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if walk.is_discrete:
        raise ValueError("exact_moments_continuous needs a continuous-time walk")
    steps = t / grid_step
    if grid_step <= 0 or abs(steps - round(steps)) > 1e-9 * max(steps, 1):
        raise ValueError("grid_step must divide t")
    n = int(round(steps))
    if t == 0:
        return QuadratureResult(0.0, 0.0, grid_step)

    def value(nn):
        s = np.linspace(0.0, t, nn + 1)
        return math.factorial(k) * _nested_integral(continuous_origin_curve(walk, s, tol), t / nn, k)

    prev = value(n)
    delta = math.inf
    for _ in range(max_halvings):
        n *= 2
        cur = value(n)
        delta = abs(cur - prev) / abs(cur)
        prev = cur
        if delta < rel_tol:
            break
    return QuadratureResult(prev, delta, t / n)


# -- local limit theorem ---------------------------------------------------------

def lclt_leading(Q: CovarianceMatrix, n: float, x=(0, 0), rate_scale: float = 1.0) -> float:
    """Leading Gaussian term exp(-x.Q^{-1}x / 2m) / (2 pi m sqrt(det Q)), m = rate_scale * n."""
    det = float(Q.det)
    if not det > 0:
        raise DegenerateCovariance(f"det Q = {det}")
    m = float(rate_scale) * n
    if m <= 0:
        raise ValueError("n must be positive")
    return math.exp(-Q.inverse_quadratic(x) / (2 * m)) / (2 * math.pi * m * math.sqrt(det))
