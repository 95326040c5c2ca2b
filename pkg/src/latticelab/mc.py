"""Monte Carlo estimators for one- and two-walk local times.

Each replica draws from its own keyed stream (see :mod:`latticelab.rng`)
and samples are reduced in replica order, so every estimate is a pure
function of its inputs and the master seed, whatever the worker count.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import stats

from . import _kernels_py
from ._backend import kernels
from .errors import HorizonExceeded, InsufficientEnvironments, MixedTimeKinds
from .exact import first_return_law
from .parallel import blocks, ordered_map
from .rng import bit_generator, generator
from .walk import WalkSpec, difference_walk, et_constant

DEFAULT_Z = 3.0
BLOCK = 1024


# -- data types -------------------------------------------------------------------

@dataclass(frozen=True)
class EnvironmentPath:
    """A stored realization of the environment walk Y.

    Discrete time: ``positions[i] = Y_i`` for i = 0..horizon and ``times`` is
    None. Continuous time: ``times[0] = 0`` followed by the jump times in
    (0, horizon], and ``positions[j]`` is Y on [times[j], times[j+1]).
    """

    spec: WalkSpec
    horizon: float
    positions: np.ndarray = field(repr=False)
    times: np.ndarray | None = field(default=None, repr=False)
    master_seed: int | None = None
    env_index: int | None = None

    def __post_init__(self):
        pos = self.positions
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] == 0:
            raise ValueError("positions must have shape (n, 2)")
        if pos[0, 0] != 0 or pos[0, 1] != 0:
            raise ValueError("environment must start at the origin")
        if self.spec.is_discrete:
            if self.times is not None or pos.shape[0] != int(self.horizon) + 1:
                raise ValueError("discrete path needs horizon + 1 positions and no times")
        else:
            t = self.times
            if t is None or t.shape[0] != pos.shape[0] or t[0] != 0.0:
                raise ValueError("continuous path needs times[0] = 0 and one time per position")
            if np.any(np.diff(t) <= 0) or (t.size > 1 and t[-1] > self.horizon):
                raise ValueError("jump times must be strictly increasing within the horizon")

    @property
    def is_discrete(self) -> bool:
        return self.spec.is_discrete

    @property
    def num_jumps(self) -> int:
        return self.positions.shape[0] - 1

    def increments(self) -> np.ndarray:
        return np.diff(self.positions, axis=0)

    def position_at(self, s: float) -> np.ndarray:
        if self.is_discrete:
            return self.positions[int(s)]
        return self.positions[np.searchsorted(self.times, s, side="right") - 1]

    def pieces(self, t: float | None = None, reverse: bool = False):
        """(start times, positions) of the path on [0, t]; optionally of s -> Y_{t-s}."""
        t = self.horizon if t is None else t
        if t > self.horizon:
            raise HorizonExceeded(f"t={t} beyond environment horizon {self.horizon}")
        if self.is_discrete:
            pos = self.positions[: int(t) + 1]
            return None, (pos[::-1] if reverse else pos).copy()
        k = int(np.searchsorted(self.times, t, side="left"))
        times = self.times[:k]
        pos = self.positions[:k]
        if not reverse:
            return times.copy(), pos.copy()
        ends = np.append(times[1:], t)
        return (t - ends)[::-1].copy(), pos[::-1].copy()

    def time_at(self, x, t: float | None = None) -> float:
        """Time (or number of indices) the path spends at site x during [0, t]."""
        times, pos = self.pieces(t)
        hit = (pos[:, 0] == x[0]) & (pos[:, 1] == x[1])
        if times is None:
            return float(np.count_nonzero(hit))
        t = self.horizon if t is None else t
        ends = np.append(times[1:], t)
        return float(np.sum((ends - times)[hit]))


@dataclass(frozen=True)
class EstimateWithCI:
    estimate: float
    stderr: float
    M: int
    seed: int | None = None
    z: float = DEFAULT_Z

    @property
    def degenerate(self) -> bool:
        return not math.isfinite(self.stderr)

    @property
    def ci(self) -> tuple[float, float]:
        return self.estimate - self.z * self.stderr, self.estimate + self.z * self.stderr

    def contains(self, value: float) -> bool:
        lo, hi = self.ci
        return lo <= value <= hi


def estimate_mean(samples, seed=None, z: float = DEFAULT_Z) -> EstimateWithCI:
    x = np.asarray(samples, dtype=float)
    m = x.size
    se = float(x.std(ddof=1) / math.sqrt(m)) if m >= 2 else math.inf
    return EstimateWithCI(float(x.mean()), se, m, seed, z)


@dataclass(frozen=True)
class MomentEstimates:
    """Moment estimates of a local-time sample for k = 1..k_max."""

    t: float
    normalizer: float
    raw: list
    normalized: list
    samples: np.ndarray = field(repr=False)

    @property
    def k_max(self) -> int:
        return len(self.raw)

    def normalized_samples(self) -> np.ndarray:
        return self.normalizer * self.samples / math.log(self.t)


def _moments(samples, t, k_max, normalizer, seed, z=DEFAULT_Z) -> MomentEstimates:
    samples = np.asarray(samples, dtype=float)
    raw, norm = [], []
    scale = normalizer / math.log(t) if t > 1 else math.nan
    for k in range(1, k_max + 1):
        raw.append(estimate_mean(samples**k, seed, z))
        norm.append(estimate_mean((scale * samples) ** k, seed, z))
    return MomentEstimates(t, normalizer, raw, norm, samples)


# -- environments ------------------------------------------------------------------

def sample_environment(spec: WalkSpec, t, master_seed: int, env_index: int, label: str = "env") -> EnvironmentPath:
    """Deterministic environment path on [0, t] for (spec, t, master_seed, env_index)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    bg = bit_generator(master_seed, label, "env", env_index)
    dist = spec.step
    if spec.is_discrete:
        pos = _kernels_py._discrete_path(bg, dist.sampling_cdf, dist.steps, int(t))
        return EnvironmentPath(spec, int(t), pos, None, master_seed, env_index)
    times, pos = _kernels_py._continuous_path(bg, float(spec.rate), dist.sampling_cdf, dist.steps, 0, 0, float(t))
    return EnvironmentPath(spec, float(t), pos, times, master_seed, env_index)


def origin_environment(spec: WalkSpec, t) -> EnvironmentPath:
    """The frozen path Y = 0 on [0, t]."""
    if spec.is_discrete:
        return EnvironmentPath(spec, int(t), np.zeros((int(t) + 1, 2), dtype=np.int64))
    return EnvironmentPath(spec, float(t), np.zeros((1, 2), dtype=np.int64), np.zeros(1))


# -- collision sampling ------------------------------------------------------------

def _check_envs(x_spec: WalkSpec, envs, t):
    for env in envs:
        if env.is_discrete != x_spec.is_discrete:
            raise MixedTimeKinds("walk and environment must share the time kind")
        if t > env.horizon:
            raise HorizonExceeded(f"t={t} beyond environment horizon {env.horizon}")


def _pack_envs(envs, t, discrete, reverse=False):
    if discrete:
        n = int(t)
        return np.ascontiguousarray(np.stack([e.pieces(n, reverse)[1] for e in envs]), dtype=np.int64)
    parts = [e.pieces(t, reverse) for e in envs]
    times = np.ascontiguousarray(np.concatenate([p[0] for p in parts]), dtype=float)
    pos = np.ascontiguousarray(np.concatenate([p[1] for p in parts]), dtype=np.int64)
    offsets = np.zeros(len(parts) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([p[0].size for p in parts])
    return times, pos, offsets


def _collision_block(task):
    """Collision local times for replicas [r0, r1): array of shape (r1 - r0, n_env)."""
    x_spec, packed, t, seed, label, tag, r0, r1, start = task
    dist = x_spec.step
    cdf, steps = dist.sampling_cdf, dist.steps
    if x_spec.is_discrete:
        out = np.empty((r1 - r0, packed.shape[0]), dtype=np.int64)
        for r in range(r0, r1):
            kernels.discrete_collisions(bit_generator(seed, label, tag, r), cdf, steps, packed, int(t), out[r - r0])
        return out
    times, pos, offsets = packed
    out = np.empty((r1 - r0, offsets.size - 1))
    for r in range(r0, r1):
        kernels.continuous_collisions(bit_generator(seed, label, tag, r), float(x_spec.rate), cdf, steps,
                                      int(start[0]), int(start[1]), float(t), times, pos, offsets, out[r - r0])
    return out


def collision_samples(x_spec: WalkSpec, envs, t, M: int, master_seed: int, *, label: str = "quenched",
                      tag=0, start=(0, 0), reverse: bool = False, workers=1) -> np.ndarray:
    """Collision local times of M independent X replicas with each env; shape (M, len(envs)).

    A discrete X always starts at the origin; a continuous X starts at ``start``.
    ``reverse`` replaces each environment by its time reversal on [0, t].
    """
    envs = list(envs)
    _check_envs(x_spec, envs, t)
    packed = _pack_envs(envs, t, x_spec.is_discrete, reverse)
    tasks = [(x_spec, packed, t, master_seed, label, tag, a, b, start) for a, b in blocks(M, BLOCK)]
    parts = ordered_map(_collision_block, tasks, workers)
    if not parts:
        return np.zeros((0, len(envs)))
    return np.concatenate(parts, axis=0)


def local_time_two_walks(x_spec: WalkSpec, env: EnvironmentPath, t, rng_stream) -> float:
    """L_t(X, Y) for one X sample drawn from ``rng_stream`` (a numpy BitGenerator).

    Discrete: number of i in [0, t] with X_i = Y_i. Continuous: Lebesgue
    measure of {s <= t : X_s = Y_s}.
    """
    _check_envs(x_spec, [env], t)
    packed = _pack_envs([env], t, x_spec.is_discrete)
    dist = x_spec.step
    if x_spec.is_discrete:
        out = np.empty(1, dtype=np.int64)
        kernels.discrete_collisions(rng_stream, dist.sampling_cdf, dist.steps, packed, int(t), out)
        return int(out[0])
    times, pos, offsets = packed
    out = np.empty(1)
    kernels.continuous_collisions(rng_stream, float(x_spec.rate), dist.sampling_cdf, dist.steps, 0, 0,
                                  float(t), times, pos, offsets, out)
    return float(out[0])


# -- annealed ----------------------------------------------------------------------

def _as_difference(z_or_pair) -> WalkSpec:
    if isinstance(z_or_pair, WalkSpec):
        return z_or_pair
    x, y = z_or_pair
    return difference_walk(x, y)


def _origin_block(task):
    z, t, seed, label, r0, r1 = task
    dist = z.step
    cdf, steps = dist.sampling_cdf, dist.steps
    if z.is_discrete:
        return np.array([kernels.origin_visits(bit_generator(seed, label, "z", r), cdf, steps, int(t))
                         for r in range(r0, r1)], dtype=np.int64)
    times = np.zeros(1)
    pos = np.zeros((1, 2), dtype=np.int64)
    offsets = np.array([0, 1], dtype=np.int64)
    out = np.empty(r1 - r0)
    for r in range(r0, r1):
        kernels.continuous_collisions(bit_generator(seed, label, "z", r), float(z.rate), cdf, steps, 0, 0,
                                      float(t), times, pos, offsets, out[r - r0 : r - r0 + 1])
    return out


class RenewalSampler:
    """Exact sampler of the origin local time built from the first-return law.

    Discrete time: L = 1 + number of returns by step n. Continuous time: the
    walk holds Exp(r) at the origin, returns after J jumps with J drawn from
    the jump chain's first-return law, spending Gamma(J - 1, r) away.
    """

    def __init__(self, z: WalkSpec, t):
        self.z = z
        self.t = t
        if z.is_discrete:
            jmax = int(t)
        else:
            mu = float(z.rate) * t
            # more jumps than this take longer than t with overwhelming probability
            jmax = int(mu + 12 * math.sqrt(mu) + 100)
        f = first_return_law(z, jmax) if jmax > 0 else np.zeros(1)
        self.cdf = np.cumsum(f)
        self.jmax = jmax

    def _draw_return(self, gen) -> int | None:
        j = int(np.searchsorted(self.cdf, gen.random(), side="right"))
        return j if j <= self.jmax else None

    def sample(self, gen) -> float:
        if self.z.is_discrete:
            n, now, count = int(self.t), 0, 1
            while True:
                j = self._draw_return(gen)
                if j is None or now + j > n:
                    return count
                now += j
                count += 1
        r, t = float(self.z.rate), float(self.t)
        now, local = 0.0, 0.0
        while True:
            h = gen.exponential(1.0 / r)
            local += min(h, t - now)
            now += h
            if now >= t:
                return local
            j = self._draw_return(gen)
            if j is None:
                return local
            if j > 1:
                now += gen.gamma(j - 1, 1.0 / r)
            if now >= t:
                return local


def _renewal_block(task):
    sampler, seed, label, r0, r1 = task
    return np.array([sampler.sample(generator(seed, label, "renewal", r)) for r in range(r0, r1)])


def annealed_samples(z_or_pair, t, M: int, master_seed: int, *, method: str = "path",
                     label: str = "annealed", workers=1) -> np.ndarray:
    z = _as_difference(z_or_pair)
    if method == "path":
        tasks = [(z, t, master_seed, label, a, b) for a, b in blocks(M, BLOCK)]
        parts = ordered_map(_origin_block, tasks, workers)
    elif method == "renewal":
        sampler = RenewalSampler(z, t)
        tasks = [(sampler, master_seed, label, a, b) for a, b in blocks(M, BLOCK)]
        parts = ordered_map(_renewal_block, tasks, workers)
    else:
        raise ValueError(f"unknown method {method!r}")
    return np.concatenate(parts) if parts else np.zeros(0)


def annealed_moments(z_or_pair, t, k_max: int, M: int, master_seed: int, *, method: str = "path",
                     label: str = "annealed", workers=1, z: float = DEFAULT_Z) -> MomentEstimates:
    """Moments of the annealed local time L_t(X, Y) = L_t(X - Y) and of its normalization.

    ``z_or_pair`` is the difference walk or an (X, Y) pair of walks. With
    ``method="path"`` every replica simulates the difference walk; with
    ``method="renewal"`` it is drawn exactly from the first-return law.
    """
    zw = _as_difference(z_or_pair)
    samples = annealed_samples(zw, t, M, master_seed, method=method, label=label, workers=workers)
    return _moments(samples, t, k_max, et_constant(zw), master_seed, z)


def ks_to_exponential(samples) -> float:
    """Kolmogorov-Smirnov distance between the sample and Exp(1)."""
    return float(stats.kstest(np.asarray(samples, dtype=float), "expon").statistic)


# -- quenched ----------------------------------------------------------------------

def quenched_moments(x_spec: WalkSpec, env: EnvironmentPath, t, k_max: int, M: int, master_seed: int, *,
                     label: str = "quenched", x_tag=None, workers=1, z: float = DEFAULT_Z) -> MomentEstimates:
    """Conditional moments E[L_t(X, Y)^k | Y] for one fixed environment.

    The X stream is keyed by ``x_tag`` (default: the environment index).
    """
    tag = env.env_index if x_tag is None else x_tag
    samples = collision_samples(x_spec, [env], t, M, master_seed, label=label, tag=tag, workers=workers)[:, 0]
    return _moments(samples, t, k_max, et_constant(difference_walk(x_spec, env.spec)), master_seed, z)


def _quenched_task(task):
    x_spec, y_spec, n, k, M, seed, label, i = task
    env = sample_environment(y_spec, n, seed, i, label=f"{label}/env/{n}")
    s = collision_samples(x_spec, [env], n, M, seed, label=f"{label}/x/{n}", tag=i)[:, 0].astype(float) ** k
    return float(s.mean()), float(s.std(ddof=1) / math.sqrt(M))


@dataclass(frozen=True)
class QuenchedScanResult:
    n_grid: list
    k: int
    eps: float
    estimates: np.ndarray  # (len(n_grid), num_env)
    stderrs: np.ndarray
    variance: np.ndarray  # debiased, per n
    raw_variance: np.ndarray
    normalizer: np.ndarray
    ratio: np.ndarray
    ratio_se: np.ndarray

    @property
    def inversions(self) -> list[int]:
        return [i for i in range(len(self.ratio) - 1) if self.ratio[i + 1] > self.ratio[i]]

    @property
    def non_increasing(self) -> bool:
        """No increase, or a single one within two combined bootstrap errors."""
        inv = self.inversions
        if not inv:
            return True
        if len(inv) > 1:
            return False
        i = inv[0]
        return self.ratio[i + 1] - self.ratio[i] <= 2.0 * math.hypot(self.ratio_se[i], self.ratio_se[i + 1])


def _debiased_variance(est, se):
    return est.var(ddof=1) - np.mean(se**2)


def quenched_variance_scan(x_spec: WalkSpec, y_spec: WalkSpec, n_grid, k: int, num_env: int, M: int,
                           eps: float, master_seed: int, *, label: str = "scan", workers=1,
                           n_boot: int = 1000) -> QuenchedScanResult:
    """Variance across environments of the quenched k-th moment, against log^(2k-1+eps) n.

    The within-environment Monte Carlo noise (mean squared standard error)
    is subtracted from the sample variance; the ratio error comes from a
    bootstrap over environments.
    """
    if num_env < 20:
        raise InsufficientEnvironments(f"num_env={num_env}; the scan needs at least 20 environments")
    n_grid = [int(n) for n in n_grid]
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be increasing")
    tasks = [(x_spec, y_spec, n, k, M, master_seed, label, i) for n in n_grid for i in range(num_env)]
    res = np.array(ordered_map(_quenched_task, tasks, workers)).reshape(len(n_grid), num_env, 2)
    est, se = res[..., 0], res[..., 1]
    norm = np.array([math.log(n) ** (2 * k - 1 + eps) for n in n_grid])
    raw_var = est.var(axis=1, ddof=1)
    var = np.array([_debiased_variance(est[i], se[i]) for i in range(len(n_grid))])
    gen = generator(master_seed, label, "bootstrap")
    idx = gen.integers(0, num_env, size=(n_boot, num_env))
    boot = np.array([[_debiased_variance(est[i, b], se[i, b]) for b in idx] for i in range(len(n_grid))])
    ratio_se = boot.std(axis=1, ddof=1) / norm
    return QuenchedScanResult(n_grid, k, eps, est, se, var, raw_var, norm, var / norm, ratio_se)


# -- joint moments ------------------------------------------------------------------

def multi_indices(width: int, max_order: int = 2):
    """All a in N^width with 1 <= |a| <= max_order, ordered by |a| then lexicographically (descending)."""
    out = []
    for order in range(1, max_order + 1):
        for a in itertools.product(range(order, -1, -1), repeat=width):
            if sum(a) == order:
                out.append(a)
    return out


@dataclass(frozen=True)
class JointMomentResult:
    t: float
    columns: list  # "origin" or env index
    scales: np.ndarray
    indices: list
    estimates: list
    predictions: list

    def ratios(self) -> list[EstimateWithCI]:
        return [EstimateWithCI(e.estimate / p, e.stderr / p, e.M, e.seed, e.z) for e, p in zip(self.estimates, self.predictions)]


def joint_conditional_moments(x_spec: WalkSpec, envs, t, M: int, master_seed: int, *, include_origin: bool = True,
                              label: str = "quenched", x_tag=None, max_order: int = 2, workers=1,
                              z: float = DEFAULT_Z) -> JointMomentResult:
    """Mixed normalized moments E[prod_i (c_i L_t(X, Y_i) / log t)^(a_i) | Y_1..Y_k].

    One X sample per replica is shared by all environments. With
    ``include_origin`` a frozen Y_0 = 0 column comes first. The X stream is
    keyed by ``x_tag`` (default: the first environment's index), so the
    marginal of the first environment reproduces :func:`quenched_moments`.
    Predictions are the products of a_i! expected for independent Exp(1)
    limits; the comparison is exploratory.
    """
    envs = list(envs)
    horizons = {e.horizon for e in envs}
    if len(horizons) > 1:
        raise ValueError("environments must share one horizon")
    cols = ([origin_environment(x_spec, t)] if include_origin else []) + envs
    names = (["origin"] if include_origin else []) + [e.env_index for e in envs]
    scales = []
    for c, e in zip(names, cols):
        w = x_spec if c == "origin" else difference_walk(x_spec, e.spec)
        scales.append(et_constant(w) / math.log(t))
    scales = np.array(scales)
    tag = (envs[0].env_index if envs else 0) if x_tag is None else x_tag
    L = collision_samples(x_spec, cols, t, M, master_seed, label=label, tag=tag, workers=workers).astype(float)
    Ln = L * scales[None, :]
    idx = multi_indices(len(cols), max_order)
    ests, preds = [], []
    for a in idx:
        prod = np.prod(Ln ** np.array(a)[None, :], axis=1)
        ests.append(estimate_mean(prod, master_seed, z))
        preds.append(float(np.prod([math.factorial(ai) for ai in a])))
    return JointMomentResult(t, names, scales, idx, ests, preds)
