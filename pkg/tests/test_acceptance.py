"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import io
import itertools
import math
import time

import numpy as np
import pytest
from scipy.special import logsumexp

from latticelab import cli
from latticelab.catalyst import (
    PamConfig,
    PinningConfig,
    catalyst_path,
    free_energy_estimate,
    pam_closed_form,
    pam_feynman_kac,
    pam_solve,
    pinning_partition,
)
from latticelab.exact import local_time_pmf
from latticelab.lemmas import check_gradpot, check_rearrangement, check_rwconv, moment_convergence_scan
from latticelab.mc import annealed_moments, annealed_samples, ks_to_exponential, quenched_moments, quenched_variance_scan, sample_environment
from latticelab.spectral import origin_series
from latticelab.walk import difference_walk, et_constant, preset

from configs import SMALL, with_seed

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]


def srw_pair(kind="discrete", rate=1):
    return preset("srw", kind, rate), preset("srw", kind, rate)


def all_paths(steps, n):
    """Positions X_1..X_n of every n-step path, shape (len(steps)^n, n, 2)."""
    idx = np.array(list(itertools.product(range(len(steps)), repeat=n)), dtype=np.int64).reshape(-1, n)
    return np.cumsum(np.asarray(steps)[idx], axis=1), idx


def test_annealed_mean_matches_kernel_sum(verdict):
    pair = srw_pair()
    exact = float(origin_series(difference_walk(*pair).step, 1024).sum())
    start = time.perf_counter()
    est = annealed_moments(pair, 1024, 1, 10**5, 1, workers=1).raw[0]
    elapsed = time.perf_counter() - start
    ok = est.contains(exact) and elapsed < 300
    verdict(1, "annealed E[L_1024] vs exact", ok,
            f"{est.estimate:.5f} ± {est.stderr:.5f} vs {exact:.5f}, {abs(est.estimate - exact) / est.stderr:.2f} se, {elapsed:.1f} s")
    assert ok


def test_local_time_law_matches_enumeration(verdict):
    srw = preset("srw")
    steps = srw.step.steps
    worst = 0.0
    for n in range(0, 9):
        if n == 0:
            visits = np.array([1])
        else:
            pos, _ = all_paths(steps, n)
            visits = 1 + np.count_nonzero(np.all(pos == 0, axis=2), axis=1)
        counts = np.bincount(visits, minlength=n + 2) / visits.size  # every path has weight 4^-n
        pmf = local_time_pmf(srw, n)
        for m in range(1, n + 2):
            worst = max(worst, abs(pmf.prob(m) - counts[m]))
        for k in range(1, 5):
            want = float(np.dot(np.arange(counts.size) ** k, counts))
            worst = max(worst, abs(pmf.moment(k) - want) / want)
    ok = worst <= 1e-12
    verdict(2, "local-time law vs enumeration, n <= 8", ok, f"max discrepancy {worst:.2e}")
    assert ok


def test_normalized_moments_approach_factorials(verdict):
    lazy = preset("lazy-srw")
    start = time.perf_counter()
    scan = moment_convergence_scan(lazy, [2**16, 2**20], 2)
    elapsed = time.perf_counter() - start
    dev = scan.deviation()
    ok = all(dev[1, k] < 0.35 and dev[1, k] < dev[0, k] for k in (1, 2)) and elapsed < 1800
    verdict(3, "normalized moments vs k!", ok,
            f"deviation k=1 {dev[1, 1]:.4f} (was {dev[0, 1]:.4f}), k=2 {dev[1, 2]:.4f} (was {dev[0, 2]:.4f}), {elapsed:.1f} s")
    assert ok


def test_normalized_law_close_to_exponential(verdict):
    pair = srw_pair("continuous", 1)
    z = difference_walk(*pair)
    t = 2.0**20
    samples = annealed_samples(z, t, 10**5, 11, method="renewal")
    ks = ks_to_exponential(et_constant(z) * samples / math.log(t))
    # discrete-time companion: L >= 1 puts an atom at c / log n, so KS >= 1 - exp(-c / log n)
    zd = difference_walk(*srw_pair())
    n = 2**20
    disc = ks_to_exponential(et_constant(zd) * annealed_samples(zd, n, 10**5, 11, method="renewal") / math.log(n))
    floor = 1 - math.exp(-et_constant(zd) / math.log(n))
    ok = ks < 0.1
    verdict(4, "KS distance to Exp(1)", ok,
            f"continuous time t=2^20: {ks:.4f}; discrete time n=2^20 (not gated): {disc:.4f}, atom floor {floor:.4f}")
    assert ok


def test_quenched_variance_ratio_non_increasing(verdict):
    x, y = srw_pair()
    start = time.perf_counter()
    res = quenched_variance_scan(x, y, [2**8, 2**12, 2**16], 1, 200, 2000, 0.5, 5, workers=None)
    elapsed = time.perf_counter() - start
    ok = res.non_increasing and elapsed < 7200
    ratios = ", ".join(f"{r:.4g}±{s:.2g}" for r, s in zip(res.ratio, res.ratio_se))
    verdict(5, "quenched variance / log^1.5 n", ok, f"ratios {ratios}; {len(res.inversions)} inversion(s), {elapsed:.0f} s")
    assert ok


def test_tower_property(verdict):
    x, y = srw_pair()
    n = 1024
    exact = float(origin_series(difference_walk(x, y).step, n).sum())
    est = np.array([quenched_moments(x, sample_environment(y, n, 6, i), n, 1, 1000, 6).raw[0].estimate
                    for i in range(100)])
    se = est.std(ddof=1) / math.sqrt(est.size)
    ok = abs(est.mean() - exact) <= 3 * se
    verdict(6, "mean of 100 quenched estimates vs annealed exact", ok,
            f"{est.mean():.5f} ± {se:.5f} vs {exact:.5f}")
    assert ok


def test_gradient_bound_ratios_bounded(verdict):
    rep = check_gradpot(preset("lazy-srw"), (1, 0), [(4, 0), (8, 0), (16, 0), (32, 0)])
    ok = rep.passed(0.1) and rep.extra["N_trunc"] == [100, 324, 1156, 4356]
    verdict(7, "kernel gradient sum bounded", ok,
            f"ratios {np.round(rep.ratios, 4).tolist()}, slope {rep.slope:.4f}")
    assert ok


@pytest.mark.xfail(strict=True, reason="the i^(q/2)-scaled sum still grows at i <= 256 for v=(5,0); see notes")
def test_weighted_kernel_sum_bounded(verdict):
    rep = check_rwconv(preset("lazy-srw"), 1.5, (5, 0), [4, 16, 64, 256])
    ok = rep.passed(0.1)
    verdict(8, "i^(3/4) weighted kernel sum bounded", ok,
            f"ratios {np.round(rep.ratios, 4).tolist()}, slope {rep.slope:.4f} (limit 0.1)")
    assert ok


def test_rearrangement_inequality(verdict):
    rep = check_rearrangement(10**4, 64, 9)
    ok = rep.violations == 0
    verdict(9, "rearrangement inequality", ok, f"violations: {rep.violations}, max excess {rep.max_excess:.2e}")
    assert ok


def test_pinning_dp_matches_enumeration(verdict):
    srw = preset("srw")
    steps = srw.step.steps
    worst = 0.0
    for n in range(1, 9):
        pos, _ = all_paths(steps, n)
        logw = -n * math.log(4)
        for i in range(20):
            env = sample_environment(srw, n, 10, i, label=f"dp/{n}")
            y = env.positions
            hits = 1 + np.count_nonzero(np.all(pos == y[None, 1:], axis=2), axis=1)
            end = np.all(pos[:, -1] == y[n], axis=1)
            for gamma in (0.7, -0.4):
                free = logsumexp(logw + gamma * hits)
                pinned = logsumexp(logw + gamma * hits[end]) if end.any() else -math.inf
                cfg = PinningConfig(gamma, n, srw, srw)
                worst = max(worst, abs(pinning_partition(cfg, env) - free),
                            abs(pinning_partition(cfg, env, True) - pinned))
    ok = worst <= 1e-12
    verdict(10, "pinning partition vs enumeration", ok, f"max |log Z difference| {worst:.2e} over n <= 8, 20 environments")
    assert ok


def test_catalytic_equation_cross_checks(verdict):
    cfg = PamConfig(1.0, 1.0, 1.0, 4.0, 40)
    env = catalyst_path(cfg, 12)
    u = pam_solve(cfg, env).at((0, 0))
    fk = pam_feynman_kac(cfg, env, (0, 0), 10**5, 12)
    flat = pam_solve(PamConfig(1.0, 0.0, 1.0, 4.0, 40), env)
    flat_err = float(np.max(np.abs(flat.u - 1.0)))
    frozen_cfg = PamConfig(0.0, 1.0, 1.0, 4.0, 40)
    frozen = pam_solve(frozen_cfg, env)
    sites = np.unique(np.vstack([env.positions, [[0, 0], [3, 3]]]), axis=0)
    frozen_err = max(abs(frozen.at(s) - pam_closed_form(frozen_cfg, env, s)) for s in sites)
    ok = fk.contains(u) and flat_err <= 1e-11 and frozen_err <= 1e-8
    verdict(11, "catalytic heat equation", ok,
            f"solver {u:.6f} vs Feynman-Kac {fk.estimate:.6f} ± {fk.stderr:.6f}; "
            f"gamma=0 max|u-1| {flat_err:.1e}; kappa=0 max error {frozen_err:.1e}")
    assert ok


def test_free_energy_signs(verdict):
    srw = preset("srw")
    zero = free_energy_estimate(PinningConfig(0.0, 32, srw, srw), [32], 50, 13)
    five = free_energy_estimate(PinningConfig(5.0, 32, srw, srw), [32], 50, 13)
    e0, e5 = zero.estimates[0], five.estimates[0]
    ok = e0.estimate <= 0 and bool(np.all(zero.log_partitions <= 0)) and e5.estimate - 3 * e5.stderr > 0
    verdict(12, "free-energy signs", ok,
            f"gamma=0: {e0.estimate:.4f}; gamma=5: {e5.estimate:.4f} ± {e5.stderr:.4f}")
    assert ok


def test_outputs_identical_across_worker_counts(verdict, tmp_path, monkeypatch):
    differing = []
    for name in sorted(SMALL):
        files = []
        for w in (1, 4):
            monkeypatch.setenv("LATTICELAB_OUT", str(tmp_path / f"w{w}"))
            status, run_dir = cli.run(with_seed(name, seed=21, workers=w), stream=io.StringIO())
            assert status == 0, name
            files.append({p.name: p.read_bytes() for p in sorted(run_dir.glob("*.csv"))})
        if files[0] != files[1] or not files[0]:
            differing.append(name)
    ok = not differing
    verdict(13, "CSV outputs identical for workers 1 and 4", ok,
            f"{len(SMALL)} experiments" + (f"; differing: {differing}" if differing else ""))
    assert ok
