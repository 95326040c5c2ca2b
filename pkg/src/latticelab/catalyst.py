"""Catalytic applications: a lattice heat equation with one moving point
source, and the pinning model of a walk attracted to a random path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import BoundaryMassExceeded, BoxTooSmall, HorizonExceeded
from .exact import _stencil_step
from .mc import EnvironmentPath, EstimateWithCI, collision_samples, estimate_mean, sample_environment
from .parallel import ordered_map
from .walk import PRESET_STEPS, WalkSpec

BAND = 2  # cells next to the box edge watched by the boundary diagnostic


# -- parabolic equation with a moving catalyst -------------------------------------------

@dataclass(frozen=True)
class PamConfig:
    """Parameters of du/dt = kappa Lap u + gamma delta_{Y_t} u on a box.

    ``rbox`` must be at least ``ceil(c sqrt(t))``; ``tol`` is the relative
    solver tolerance.
    """

    kappa: float
    gamma: float
    rho: float
    t: float
    rbox: int
    tol: float = 1e-11
    c: float = 3.0
    boundary_tol: float = 1e-8
    method: str = "DOP853"

    def __post_init__(self):
        if self.kappa < 0 or self.rho < 0:
            raise ValueError("kappa and rho must be >= 0")
        if self.t < 0 or self.tol <= 0:
            raise ValueError("need t >= 0 and tol > 0")
        if self.c < 3:
            raise ValueError("box constant c must be >= 3")
        if self.rbox < math.ceil(self.c * math.sqrt(self.t)):
            raise ValueError(f"rbox must be >= ceil({self.c} sqrt(t))")


@dataclass(frozen=True)
class PamField:
    u: np.ndarray = field(repr=False)  # u[R + x1, R + x2]
    rbox: int
    t: float
    boundary_ratio: float

    def at(self, x) -> float:
        return float(self.u[self.rbox + int(x[0]), self.rbox + int(x[1])])

    def rows(self):
        R = self.rbox
        for i in range(2 * R + 1):
            for j in range(2 * R + 1):
                yield i - R, j - R, float(self.u[i, j])


def _box_laplacian(u: np.ndarray) -> np.ndarray:
    """(1/4) sum over in-box neighbours of (u(y) - u(x)); no flux through the edge."""
    out = np.zeros_like(u)
    d = u[1:, :] - u[:-1, :]
    out[:-1, :] += d
    out[1:, :] -= d
    d = u[:, 1:] - u[:, :-1]
    out[:, :-1] += d
    out[:, 1:] -= d
    return 0.25 * out


def boundary_ratio(u: np.ndarray, band: int = BAND) -> float:
    """sum |u - 1| within ``band`` cells of the edge over the same sum inside."""
    dev = np.abs(u - 1.0)
    inner = dev[band:-band, band:-band].sum()
    edge = dev.sum() - inner
    if inner == 0:
        return 0.0 if edge == 0 else math.inf
    return float(edge / inner)


def pam_solve(cfg: PamConfig, env: EnvironmentPath) -> PamField:
    """u(t, .) on the box, integrating between the catalyst's jumps.

    Raises
    ------
    BoundaryMassExceeded
        When the catalyst leaves the box interior or the boundary diagnostic
        exceeds ``cfg.boundary_tol``.
    """
    if env.is_discrete:
        raise ValueError("the catalyst must be a continuous-time path")
    if cfg.t > env.horizon:
        raise HorizonExceeded(f"t={cfg.t} beyond environment horizon {env.horizon}")
    R = cfg.rbox
    times, pos = env.pieces(cfg.t)
    if np.abs(pos).max(initial=0) > R - BAND - 1:
        raise BoundaryMassExceeded("catalyst path leaves the box interior; enlarge rbox")
    shape = (2 * R + 1, 2 * R + 1)
    u = np.ones(shape)
    ends = np.append(times[1:], cfg.t)
    for s0, s1, y in zip(times, ends, pos):
        if s1 <= s0:
            continue
        site = (R + int(y[0]), R + int(y[1]))

        def rhs(_, v, site=site):
            w = v.reshape(shape)
            du = cfg.kappa * _box_laplacian(w)
            du[site] += cfg.gamma * w[site]
            return du.ravel()

        sol = solve_ivp(rhs, (s0, s1), u.ravel(), method=cfg.method, rtol=cfg.tol, atol=cfg.tol * 1e-2)
        if not sol.success:
            raise RuntimeError(sol.message)
        u = sol.y[:, -1].reshape(shape)
    ratio = boundary_ratio(u)
    if ratio > cfg.boundary_tol:
        raise BoundaryMassExceeded(f"boundary diagnostic {ratio:.3g} > {cfg.boundary_tol}; enlarge rbox")
    return PamField(u, R, cfg.t, ratio)


def pam_closed_form(cfg: PamConfig, env: EnvironmentPath, x) -> float:
    """u(t, x) for kappa = 0: exp(gamma * time the catalyst spends at x)."""
    return math.exp(cfg.gamma * env.time_at(x, cfg.t))


def feynman_kac_samples(cfg: PamConfig, env: EnvironmentPath, x, M: int, master_seed: int, *,
                        reverse: bool = True, label: str = "feynman-kac", workers=1) -> np.ndarray:
    """exp(gamma * time X spends on the time-reversed catalyst), X a rate-kappa walk from x.

    ``reverse=False`` uses the catalyst forward in time, which is wrong in
    general and only kept to demonstrate that the reversal matters.
    """
    if cfg.t > env.horizon:
        raise HorizonExceeded(f"t={cfg.t} beyond environment horizon {env.horizon}")
    if cfg.kappa == 0:
        # X frozen at x; the time spent there is the same for the reversed path
        return np.full(M, math.exp(cfg.gamma * env.time_at(x, cfg.t)))
    x_spec = WalkSpec(PRESET_STEPS["srw"], "continuous", cfg.kappa)
    tau = collision_samples(x_spec, [env], cfg.t, M, master_seed, label=label, tag="x", start=tuple(x),
                            reverse=reverse, workers=workers)[:, 0]
    return np.exp(cfg.gamma * tau)


def pam_feynman_kac(cfg: PamConfig, env: EnvironmentPath, x, M: int, master_seed: int, *,
                    reverse: bool = True, workers=1) -> EstimateWithCI:
    """Monte Carlo estimate of u(t, x) from the Feynman-Kac formula."""
    s = feynman_kac_samples(cfg, env, x, M, master_seed, reverse=reverse, workers=workers)
    return estimate_mean(s, master_seed)


# -- pinning ---------------------------------------------------------------------

@dataclass(frozen=True)
class PinningConfig:
    gamma: float
    n: int
    x_spec: WalkSpec
    y_spec: WalkSpec
    box: int | None = None

    def __post_init__(self):
        if not (self.x_spec.is_discrete and self.y_spec.is_discrete):
            raise ValueError("exact pinning partition functions need discrete-time walks")
        if self.n < 0:
            raise ValueError("n must be >= 0")

    @property
    def radius(self) -> int:
        need = self.x_spec.step.reach_inf * self.n
        return need if self.box is None else self.box


def pinning_partition(cfg: PinningConfig, env: EnvironmentPath, constrained: bool = False) -> float:
    """log E[exp(gamma L_n(X, Y)) (1{X_n = Y_n} if constrained)] by transfer operator.

    Raises
    ------
    BoxTooSmall
        When the box does not cover every site X can reach by step n.
    """
    n = cfg.n
    if n > env.horizon:
        raise HorizonExceeded(f"n={n} beyond environment horizon {env.horizon}")
    need = cfg.x_spec.step.reach_inf * n
    B = cfg.radius
    if B < need:
        raise BoxTooSmall(f"box radius {B} < reach * n = {need}")
    size = 2 * B + 1
    y = env.positions
    dist = cfg.x_spec.step
    boost = math.exp(cfg.gamma)
    v = np.zeros((size, size))
    v[B, B] = 1.0
    log_scale = 0.0

    def tilt(v, j):
        a, b = B + int(y[j, 0]), B + int(y[j, 1])
        if 0 <= a < size and 0 <= b < size:
            v[a, b] *= boost

    tilt(v, 0)
    for j in range(1, n + 1):
        v = _stencil_step(v, dist, False)
        tilt(v, j)
        top = v.max()
        if top > 0:
            v /= top
            log_scale += math.log(top)
    if constrained:
        a, b = B + int(y[n, 0]), B + int(y[n, 1])
        val = v[a, b] if (0 <= a < size and 0 <= b < size) else 0.0
    else:
        val = v.sum()
    return log_scale + math.log(val) if val > 0 else -math.inf


@dataclass(frozen=True)
class FreeEnergyResult:
    gamma: float
    t_grid: list
    log_partitions: np.ndarray  # (len(t_grid), num_env), constrained
    estimates: list  # EstimateWithCI of (1/t) E log Z per t

    @property
    def lower_bound(self) -> float:
        """Largest finite-t estimate (the rate is a supremum over t)."""
        return max(e.estimate for e in self.estimates)

    def running_max(self) -> list:
        return list(np.maximum.accumulate([e.estimate for e in self.estimates]))

    def sign(self, i: int = -1, z: float = 3.0) -> str:
        e = self.estimates[i]
        if e.estimate - z * e.stderr > 0:
            return "positive"
        if e.estimate + z * e.stderr < 0:
            return "negative"
        return "undetermined"

    def rows(self):
        for i, t in enumerate(self.t_grid):
            for k, lz in enumerate(self.log_partitions[i]):
                yield t, k, float(lz), float(lz) / t


def _pinning_task(task):
    gamma, t, x_spec, y_spec, seed, i = task
    env = sample_environment(y_spec, t, seed, i, label=f"pinning/{t}")
    return pinning_partition(PinningConfig(gamma, t, x_spec, y_spec), env, constrained=True)


def free_energy_estimate(cfg: PinningConfig, t_grid, num_env: int, master_seed: int, *,
                         workers=1) -> FreeEnergyResult:
    """Average over environments of (1/t) log E[exp(gamma L_t) 1{X_t = Y_t} | Y] for each t.

    Environments depend on (master_seed, t, index) only, so results for
    different gamma use the same environments.
    """
    t_grid = [int(t) for t in t_grid]
    tasks = [(cfg.gamma, t, cfg.x_spec, cfg.y_spec, master_seed, i) for t in t_grid for i in range(num_env)]
    logs = np.array(ordered_map(_pinning_task, tasks, workers)).reshape(len(t_grid), num_env)
    ests = [estimate_mean(logs[i] / t, master_seed) for i, t in enumerate(t_grid)]
    return FreeEnergyResult(cfg.gamma, t_grid, logs, ests)


def catalyst_path(cfg: PamConfig, master_seed: int, env_index: int = 0) -> EnvironmentPath:
    """A rate-rho simple-walk catalyst on [0, t] (frozen at the origin when rho = 0)."""
    if cfg.rho == 0:
        spec = WalkSpec(PRESET_STEPS["srw"], "continuous", 1)
        return EnvironmentPath(spec, float(cfg.t), np.zeros((1, 2), dtype=np.int64), np.zeros(1))
    spec = WalkSpec(PRESET_STEPS["srw"], "continuous", cfg.rho)
    return sample_environment(spec, cfg.t, master_seed, env_index, label="catalyst")
