"""Numerical checks of the kernel bounds, the rearrangement inequality and
moment convergence.

The bounds involve unknown constants, so the checks report ratios of the
computed left-hand side to the bounding shape and judge boundedness by the
log-log trend of those ratios.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridTooLarge
from .exact import _stencil_step, exact_moments, local_time_pmf, DEFAULT_GRID_CAP
from .rng import generator
from .spectral import transition_series
from .walk import WalkSpec, difference_lattice, et_constant

TREND_LIMIT = 0.1


def trend_slope(scales, values) -> float:
    """Least-squares slope of log(values) against log(scales)."""
    x = np.log(np.asarray(scales, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    if x.size < 2:
        return math.nan
    return float(np.polyfit(x, y, 1)[0])


@dataclass(frozen=True)
class RatioReport:
    """Per-input left-hand sides, bounding shapes and their ratios.

    Attributes
    ----------
    inputs : list
        Scanned sites or horizons (as printable labels).
    scales : ndarray
        Scale of each input used for the trend fit.
    lhs, rhs, ratios : ndarray
    skipped : list
        Inputs left out (e.g. sites in different parity classes).
    extra : dict
        Check-specific diagnostics (e.g. calibrated tail constants).
    """

    name: str
    inputs: list
    scales: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    ratios: np.ndarray
    skipped: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratios)) if self.ratios.size else 0.0

    @property
    def slope(self) -> float:
        keep = self.ratios > 0
        if np.count_nonzero(keep) < 2:
            return 0.0
        return trend_slope(self.scales[keep], self.ratios[keep])

    def passed(self, limit: float = TREND_LIMIT) -> bool:
        return bool(np.all(np.isfinite(self.ratios))) and self.slope <= limit

    def summary(self, limit: float = TREND_LIMIT) -> str:
        verdict = "PASS" if self.passed(limit) else "FAIL"
        return f"{verdict} {self.name}: max ratio {self.max_ratio:.6g}, trend slope {self.slope:.4f} (limit {limit})"

    def rows(self):
        for i, inp in enumerate(self.inputs):
            yield inp, float(self.lhs[i]), float(self.rhs[i]), float(self.ratios[i])


def _norm(v) -> float:
    return math.hypot(float(v[0]), float(v[1]))


def _same_class(dist, z0) -> bool:
    """Whether x and x + z0 can carry mass at a common time."""
    try:
        lat = difference_lattice(dist)
    except Exception:
        return True
    try:
        lat.to_image(z0)
        return True
    except ValueError:
        return False


def check_gradpot(z_walk: WalkSpec, z0, x_list, N_trunc: int | None = None) -> RatioReport:
    """Sum over n of |p_n(x) - p_n(x + z0)| against |z0| (1/(1+|x|) + 1/(1+|x+z0|)).

    The series is summed exactly up to ``N_trunc`` (default: 4 (1 + |x|)^2
    for each x) and the rest is estimated from the last dyadic block, assuming terms
    decaying like n^(-3/2): tail = block / (sqrt(2) - 1). The implied
    constant C_tail = tail * sqrt(N) / |z0| is reported per input.
    For a continuous-time walk the jump-chain sum divided by the rate is
    reported; it bounds the time integral of |p_t(x) - p_t(x + z0)|.
    """
    z0 = (int(z0[0]), int(z0[1]))
    x_list = [(int(x[0]), int(x[1])) for x in x_list]
    if not x_list:
        raise ValueError("x_list must be non-empty")
    rmax = max(_norm(x) for x in x_list)
    if N_trunc is not None and N_trunc < (1 + rmax) ** 2:
        raise ValueError("N_trunc must be at least (1 + max|x|)^2")
    dist = z_walk.step
    zn = _norm(z0)
    scale = 1.0 if z_walk.is_discrete else 1.0 / float(z_walk.rate)
    inputs, scales, lhs, rhs, tails, horizons = [], [], [], [], [], []
    skipped = []
    same = zn == 0 or _same_class(dist, z0)
    for x in x_list:
        y = (x[0] + z0[0], x[1] + z0[1])
        if not same:
            skipped.append(x)
            continue
        bound = zn * (1 / (1 + _norm(x)) + 1 / (1 + _norm(y)))
        N = N_trunc if N_trunc is not None else int(math.ceil(4 * (1 + _norm(x)) ** 2))
        if zn == 0:
            total, c_tail = 0.0, 0.0
        else:
            series = transition_series(dist, N, sites=(x, y))
            d = np.abs(series[:, 0] - series[:, 1])
            block = float(d[N // 2 + 1 :].sum())
            tail = block / (math.sqrt(2) - 1)
            total = scale * (float(d.sum()) + tail)
            c_tail = tail * math.sqrt(N) / zn
        inputs.append(x)
        scales.append(max(_norm(x), 1.0))
        lhs.append(total)
        rhs.append(bound)
        tails.append(c_tail)
        horizons.append(N)
    lhs, rhs = np.array(lhs), np.array(rhs)
    ratios = np.divide(lhs, rhs, out=np.zeros_like(lhs), where=rhs > 0)
    return RatioReport("gradpot", inputs, np.array(scales), lhs, rhs, ratios, skipped,
                       {"N_trunc": horizons, "C_tail": tails, "z0": z0})


def _grids_at(dist, checkpoints, cap=DEFAULT_GRID_CAP):
    """Yield (i, grid, radius) for the requested i, keeping one grid in memory."""
    checkpoints = sorted(set(int(i) for i in checkpoints))
    N = checkpoints[-1]
    W = dist.reach_inf * N
    if (2 * W + 1) ** 2 > cap:
        raise GridTooLarge(f"grid of radius {W} exceeds the cap")
    grid = np.zeros((2 * W + 1, 2 * W + 1))
    grid[W, W] = 1.0
    want = set(checkpoints)
    if 0 in want:
        yield 0, grid, W
    for i in range(1, N + 1):
        grid = _stencil_step(grid, dist, False)
        if i in want:
            yield i, grid, W


def weighted_kernel_sum(walk: WalkSpec, q: float, v, i_list) -> dict:
    """sum_x p_i(x) (1 + |x - v|)^(-q) for each i in i_list (exact grids)."""
    dist = walk.step
    out = {}
    for i, grid, W in _grids_at(dist, i_list):
        ax = np.arange(-W, W + 1)
        dx = ax[:, None] - v[0]
        dy = ax[None, :] - v[1]
        weight = (1.0 + np.hypot(dx, dy)) ** (-q)
        out[i] = float(np.sum(grid * weight))
    return out


def check_rwconv(walk: WalkSpec, q: float, v, i_list) -> RatioReport:
    """i^(q/2) * sum_x p_i(x) (1 + |x - v|)^(-q), which the bound keeps bounded in i."""
    if not 1 <= q < 2:
        raise ValueError("q must lie in [1,2)")
    i_list = [int(i) for i in i_list]
    if not i_list or min(i_list) < 1:
        raise ValueError("i_list entries must be >= 1")
    v = (int(v[0]), int(v[1]))
    sums = weighted_kernel_sum(walk, q, v, i_list)
    lhs = np.array([sums[i] for i in i_list])
    rhs = np.array([float(i) ** (-q / 2) for i in i_list])
    return RatioReport("rwconv", list(i_list), np.array(i_list, dtype=float), lhs, rhs, lhs / rhs,
                       extra={"q": q, "v": v})


@dataclass(frozen=True)
class RearrangementReport:
    trials: int
    length: int
    violations_majorized: int
    violations_sorted: int
    max_excess: float

    @property
    def violations(self) -> int:
        return self.violations_majorized + self.violations_sorted

    def summary(self) -> str:
        verdict = "PASS" if self.violations == 0 else "FAIL"
        return f"{verdict} rearrangement: violations: {self.violations} ({self.trials} trials, length {self.length})"


def majorizing_transform(b: np.ndarray, gen) -> np.ndarray:
    """A random c whose prefix sums dominate those of b (row-wise).

    Part of every entry is moved to a uniformly chosen earlier position, and
    random extra mass is added; both only increase prefix sums.
    """
    trials, length = b.shape
    frac = gen.random((trials, length))
    dest = np.floor(gen.random((trials, length)) * (np.arange(length) + 1)).astype(np.int64)
    c = b * (1.0 - frac)
    rows = np.repeat(np.arange(trials), length)
    np.add.at(c, (rows, dest.ravel()), (b * frac).ravel())
    extra = gen.random((trials, length)) * (gen.random((trials, length)) < 0.1)
    return c + extra


def rearrangement_slack(lhs, rhs) -> np.ndarray:
    return lhs - rhs - 1e-12 * np.maximum(1.0, np.abs(rhs))


def check_rearrangement(trials: int, length: int, master_seed: int, *, label: str = "rearrangement") -> RearrangementReport:
    """Randomized check of sum a b <= sum a c (c majorizes b) and sum a b <= sum a sort(b)."""
    if length < 1:
        raise ValueError("length must be >= 1")
    gen = generator(master_seed, label, length)
    a = -np.sort(-gen.exponential(size=(trials, length)), axis=1)
    b = gen.exponential(size=(trials, length)) * (gen.random((trials, length)) < 0.8)
    c = majorizing_transform(b, gen)
    ab = np.sum(a * b, axis=1)
    excess1 = rearrangement_slack(ab, np.sum(a * c, axis=1))
    excess2 = rearrangement_slack(ab, np.sum(a * -np.sort(-b, axis=1), axis=1))
    return RearrangementReport(
        trials, length, int(np.count_nonzero(excess1 > 0)), int(np.count_nonzero(excess2 > 0)),
        float(max(excess1.max(initial=-np.inf), excess2.max(initial=-np.inf))),
    )


@dataclass(frozen=True)
class MomentScan:
    """Normalized moments (c L_n / log n)^k with c the local-time constant."""

    walk: WalkSpec
    n_grid: list
    k_max: int
    constant: float
    raw: np.ndarray  # (len(n_grid), k_max + 1)
    normalized: np.ndarray

    def deviation(self) -> np.ndarray:
        fact = np.array([math.factorial(k) for k in range(self.k_max + 1)], dtype=float)
        return np.abs(self.normalized / fact[None, :] - 1.0)

    def rows(self):
        dev = self.deviation()
        for i, n in enumerate(self.n_grid):
            for k in range(self.k_max + 1):
                yield n, k, float(self.normalized[i, k]), math.factorial(k), float(dev[i, k])


def moment_convergence_scan(z_walk: WalkSpec, n_grid, k_max: int, *, method: str = "factorial") -> MomentScan:
    """Exact E[L_n^k] normalized by (c / log n)^k over a grid of horizons.

    ``method="factorial"`` uses the factorial-moment identity on p_j(0);
    ``method="pmf"`` sums over the exact local-time law. The two agree to
    rounding and the first is much cheaper at large n.
    """
    if not z_walk.is_discrete:
        raise ValueError("moment scans are defined for discrete-time walks")
    n_grid = [int(n) for n in n_grid]
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])) or n_grid[0] < 2:
        raise ValueError("n_grid must be increasing with n >= 2")
    c = et_constant(z_walk)
    raw = np.zeros((len(n_grid), k_max + 1))
    for i, n in enumerate(n_grid):
        if method == "factorial":
            raw[i] = exact_moments(z_walk, n, k_max)
        elif method == "pmf":
            pmf = local_time_pmf(z_walk, n)
            raw[i] = [1.0] + [pmf.moment(k) for k in range(1, k_max + 1)]
        else:
            raise ValueError(f"unknown method {method!r}")
    scale = np.array([[(c / math.log(n)) ** k for k in range(k_max + 1)] for n in n_grid])
    normalized = raw * scale
    normalized[:, 0] = 1.0
    return MomentScan(z_walk, n_grid, k_max, c, raw, normalized)
