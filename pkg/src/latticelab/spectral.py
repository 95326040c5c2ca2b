"""n-step transition probabilities from the characteristic function.

    p_n(x) = (2 pi)^-2  int_{[-pi, pi]^2}  phi(theta)^n exp(-i theta . x) d theta

For small n the integrand is a trigonometric polynomial of known degree and
the periodic trapezoid rule on a fine enough grid is exact. For large n the
integrand is concentrated in small neighbourhoods of the points where
|phi| = 1; these form a finite group (dual of the lattice generated by
differences of support points), and around each of them phi is a constant
character times phi near the origin. So one box integral around theta = 0,
done with tensor Gauss-Legendre nodes, serves every point of the group.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import GridTooLarge, RankDeficient
from .walk import StepDistribution, covariance, difference_lattice

# |phi|^n outside the integration boxes must stay below this (absolute).
OUTSIDE_TOL = 1e-18
# Gaussian decay exp(-GAUSS_EXPONENT) at the box edge for the smallest n of a block.
GAUSS_EXPONENT = 42.0
MAX_TRAPEZOID_N = 1024
_GLOBAL_GRID = 384
_LOCAL_GRID = 96
_CHUNK_BYTES = 1 << 26


def _dual_group(dist: StepDistribution):
    """Points theta* with |phi(theta*)| = 1 and the characters phi(theta*+.)/phi(.)."""
    (a, _), (b, c) = difference_lattice(dist).basis
    x0 = np.array(dist.support[0], dtype=float)
    thetas = []
    for m in range(c):
        t2 = 2 * math.pi * m / c
        for l in range(a):
            t1 = (2 * math.pi * l - t2 * b) / a
            thetas.append((t1 % (2 * math.pi), t2))
    thetas = np.array(thetas)
    chars = np.exp(1j * thetas @ x0)
    return thetas, chars


def _torus_sup_distance(p, q) -> np.ndarray:
    d = np.abs(p - q) % (2 * math.pi)
    d = np.minimum(d, 2 * math.pi - d)
    return d.max(axis=-1)


class _Evaluator:
    def __init__(self, dist: StepDistribution, sites: np.ndarray):
        self.dist = dist
        self.sites = sites
        self.symmetric = dist.is_symmetric()
        self.thetas, self.chars = _dual_group(dist)
        mean = np.array([float(m) for m in dist.mean()])
        q = covariance(dist).as_array() - np.outer(mean, mean)
        eig = np.linalg.eigvalsh(q)
        if eig[0] <= 0:
            raise RankDeficient("degenerate covariance")
        self.lam_min, self.lam_max = eig[0], eig[-1]
        if len(self.thetas) > 1:
            dmin = min(
                _torus_sup_distance(self.thetas[i], self.thetas[j])
                for i in range(len(self.thetas))
                for j in range(i)
            )
        else:
            dmin = 2 * math.pi
        self.dmin = dmin
        self.rho_max = 0.45 * dmin
        self.xmax = float(np.abs(sites).max()) if sites.size else 0.0
        self._global = None

    def log_phi(self, t1, t2):
        """log phi(theta), accurate where phi is close to 1."""
        one_minus_re = np.zeros(np.shape(t1))
        im = np.zeros(np.shape(t1))
        for (a, b), w in zip(self.dist.support, self.dist.probs):
            arg = a * t1 + b * t2
            one_minus_re += 2.0 * w * np.sin(0.5 * arg) ** 2
            im += w * np.sin(arg)
        if self.symmetric:
            with np.errstate(divide="ignore"):
                return np.log1p(-one_minus_re)
        mod2_minus_1 = -one_minus_re * (2.0 - one_minus_re) + im**2
        with np.errstate(divide="ignore"):
            return 0.5 * np.log1p(mod2_minus_1) + 1j * np.arctan2(im, 1.0 - one_minus_re)

    # -- exact trapezoid phase ------------------------------------------------

    def trapezoid(self, nmax: int) -> np.ndarray:
        n_grid = self.dist.reach_inf * nmax + int(self.xmax) + 1
        n_grid = max(n_grid, 8)
        th = 2 * math.pi * np.arange(n_grid) / n_grid
        t1, t2 = np.meshgrid(th, th, indexing="ij")
        f = self.dist.characteristic(t1, t2).ravel()
        phase = np.exp(-1j * (np.multiply.outer(self.sites[:, 0], t1) + np.multiply.outer(self.sites[:, 1], t2)))
        phase = phase.reshape(len(self.sites), -1) / n_grid**2
        out = _power_sums(f, phase, 0, nmax + 1).real
        out[0] = np.all(self.sites == 0, axis=1)
        return out

    # -- localized box phase --------------------------------------------------

    def _far_max(self, rho: float) -> float:
        if self._global is None:
            th = 2 * math.pi * np.arange(_GLOBAL_GRID) / _GLOBAL_GRID
            t1, t2 = np.meshgrid(th, th, indexing="ij")
            pts = np.stack([t1.ravel(), t2.ravel()], axis=1)
            dist = np.min([_torus_sup_distance(pts, t) for t in self.thetas], axis=0)
            self._global = (np.abs(self.dist.characteristic(pts[:, 0], pts[:, 1])), dist)
        mod, dist = self._global
        mask = dist >= rho
        return float(mod[mask].max()) if mask.any() else 0.0

    def _annulus_max(self, inner: float, outer: float) -> float:
        g = np.linspace(-outer, outer, _LOCAL_GRID)
        t1, t2 = np.meshgrid(g, g, indexing="ij")
        mask = np.maximum(np.abs(t1), np.abs(t2)) >= inner
        if not mask.any():
            return 0.0
        return float(np.abs(self.dist.characteristic(t1[mask], t2[mask])).max())

    def box_radius(self, a: int, prev_rho: float | None) -> float | None:
        """Half-width of the box around theta = 0 for blocks starting at n = a.

        Outside the box |phi|^a must be negligible. The region beyond
        ``prev_rho`` was certified for a smaller exponent by the previous
        block; on the first block the whole torus is sampled.
        """
        rho = math.sqrt(2 * GAUSS_EXPONENT / (a * self.lam_min))
        while rho <= self.rho_max:
            outer = min(max(2 * rho, prev_rho or 0.0), 0.5 * self.dmin)
            ok = self._annulus_max(rho, max(outer, rho)) ** a <= OUTSIDE_TOL
            if ok and prev_rho is None:
                ok = self._far_max(rho) ** a <= OUTSIDE_TOL
            if ok:
                return rho
            rho *= 1.2
        return None

    def box_block(self, a: int, b: int, rho: float) -> np.ndarray:
        sigma = 1.0 / math.sqrt(2.0 * max(b - 1, 1) * self.lam_max)
        ng = 32 + math.ceil(2.2 * rho / sigma) + math.ceil(rho * self.xmax)
        x, w = leggauss(ng)
        x, w = x * rho, w * rho
        t1, t2 = np.meshgrid(x, x, indexing="ij")
        weights = np.outer(w, w).ravel()
        logf = self.log_phi(t1, t2).ravel()
        arg = np.multiply.outer(self.sites[:, 0], t1.ravel()) + np.multiply.outer(self.sites[:, 1], t2.ravel())
        if self.symmetric:
            phase = np.cos(arg) * weights
        else:
            phase = np.exp(-1j * arg) * weights
        integrals = _power_sums_log(logf, phase, a, b)
        n = np.arange(a, b)
        # sum over the dual group of chi^n exp(-i theta* . x): either 0 or |G|
        group = np.exp(-1j * self.sites @ self.thetas.T)  # (S, G)
        factor = (self.chars[None, :] ** n[:, None]) @ group.T  # (n, S)
        return (factor * integrals).real / (4 * math.pi**2)


def _power_sums(f: np.ndarray, phase: np.ndarray, a: int, b: int) -> np.ndarray:
    """out[n - a, s] = sum_q phase[s, q] * f[q]**n for n in [a, b)."""
    nq = f.size
    chunk = max(8, min(b - a, _CHUNK_BYTES // (16 * max(nq, 1))))
    powers = f[:, None] ** np.arange(chunk)[None, :]
    step = f**chunk
    v = f**a
    dtype = np.result_type(f, phase)
    out = np.empty((b - a, phase.shape[0]), dtype=dtype)
    for j in range(a, b, chunk):
        m = min(chunk, b - j)
        out[j - a : j - a + m] = ((phase * v[None, :]) @ powers[:, :m]).T
        v = v * step
    return out


def _power_sums_log(logf: np.ndarray, phase: np.ndarray, a: int, b: int) -> np.ndarray:
    """Same as :func:`_power_sums` with f = exp(logf); powers taken as exp(n * logf)."""
    nq = logf.size
    chunk = max(8, min(b - a, _CHUNK_BYTES // (16 * max(nq, 1))))
    powers = np.exp(logf[:, None] * np.arange(chunk)[None, :])
    dtype = np.result_type(logf, phase)
    out = np.empty((b - a, phase.shape[0]), dtype=dtype)
    for j in range(a, b, chunk):
        m = min(chunk, b - j)
        v = np.exp(j * logf)
        out[j - a : j - a + m] = ((phase * v[None, :]) @ powers[:, :m]).T
    return out


def _direct_series(dist: StepDistribution, nmax: int, sites: np.ndarray, cap: int) -> np.ndarray:
    """Iterated convolution on a growing grid; fallback for degenerate supports."""
    radius = dist.reach_inf * nmax + int(np.abs(sites).max(initial=0))
    if radius > cap:
        raise GridTooLarge(f"grid radius {radius} exceeds cap {cap}")
    size = 2 * radius + 1
    grid = np.zeros((size, size))
    grid[radius, radius] = 1.0
    out = np.empty((nmax + 1, len(sites)))
    idx = (sites[:, 0] + radius, sites[:, 1] + radius)
    out[0] = grid[idx]
    for n in range(1, nmax + 1):
        new = np.zeros_like(grid)
        for (dx, dy), w in zip(dist.support, dist.probs):
            _shift_add(new, grid, dx, dy, w)
        grid = new
        out[n] = grid[idx]
    return out


def _shift_add(dst: np.ndarray, src: np.ndarray, dx: int, dy: int, w: float) -> None:
    """dst[x + d] += w * src[x], dropping mass that leaves the array."""
    n0, n1 = src.shape
    xs = slice(max(0, -dx), min(n0, n0 - dx))
    xd = slice(max(0, dx), min(n0, n0 + dx))
    ys = slice(max(0, -dy), min(n1, n1 - dy))
    yd = slice(max(0, dy), min(n1, n1 + dy))
    dst[xd, yd] += w * src[xs, ys]


def transition_series(dist: StepDistribution, nmax: int, sites=((0, 0),), *, direct_cap: int = 2048) -> np.ndarray:
    """Array of shape (nmax + 1, len(sites)) with entries p_n(site)."""
    sites = np.asarray(sites, dtype=np.int64).reshape(-1, 2)
    if nmax < 0:
        raise ValueError("nmax must be >= 0")
    if dist.is_point_mass():
        out = np.zeros((nmax + 1, len(sites)))
        out[:, np.all(sites == 0, axis=1)] = 1.0
        return out
    mean = dist.mean()
    try:
        if max(abs(float(mean[0])), abs(float(mean[1]))) > 1e-12:
            raise RankDeficient("drifting walks use the direct route")
        ev = _Evaluator(dist.to_float() if dist.exact else dist, sites)
    except RankDeficient:
        return _direct_series(dist.to_float(), nmax, sites, direct_cap)

    j0 = min(nmax, 32)
    rho = None
    while j0 < nmax:
        rho = ev.box_radius(j0 + 1, None)
        if rho is not None:
            break
        if j0 >= MAX_TRAPEZOID_N:
            raise GridTooLarge("walk too close to degenerate for the spectral route")
        j0 = min(nmax, 2 * j0)
    parts = [ev.trapezoid(j0)]
    a = j0 + 1
    first = True
    while a <= nmax:
        b = min(2 * a, nmax + 1)
        if not first:
            rho = ev.box_radius(a, rho) or rho
        parts.append(ev.box_block(a, b, rho))
        first = False
        a = b
    out = np.vstack(parts)
    np.maximum(out, 0.0, out=out)
    return out


@lru_cache(maxsize=8)
def _origin_cached(dist: StepDistribution, nmax: int) -> np.ndarray:
    out = transition_series(dist, nmax)[:, 0].copy()
    out.setflags(write=False)
    return out


def origin_series(dist: StepDistribution, nmax: int) -> np.ndarray:
    """p_n(0) for n = 0..nmax (read-only; cached per distribution)."""
    for (d, m), arr in list(_ORIGIN_STORE.items()):
        if d == dist and m >= nmax:
            return arr[: nmax + 1]
    arr = _origin_cached(dist, nmax)
    _ORIGIN_STORE[(dist, nmax)] = arr
    if len(_ORIGIN_STORE) > 6:
        _ORIGIN_STORE.pop(next(iter(_ORIGIN_STORE)))
    return arr


_ORIGIN_STORE: dict = {}
