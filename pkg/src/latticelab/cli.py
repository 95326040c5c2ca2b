"""Command-line front end: ``latticelab {run,validate,report,presets}``.

An experiment is one JSON document; ``--set key=value`` and a few named
flags override its top-level fields. Results go to
``<root>/<experiment_id>/`` where root is ``$LATTICELAB_OUT``, else the
config's ``output_dir``, else ``./runs``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import re
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .errors import ConfigInvalid, LatticeLabError, ManifestCorrupt
from .walk import (
    PAIR_PRESETS,
    PRESET_STEPS,
    WalkSpec,
    covariance,
    difference_walk,
    et_constant,
    is_irreducible,
    load_walk,
    period,
    preset,
    reduced_covariance,
)

KINDS = ("annealed", "quenched", "variance-scan", "lemma-check", "moment-scan", "pam", "pinning", "joint")
CHECKS = ("gradpot", "rwconv", "rearrangement")
MAX_DISCRETE = 1 << 22
MAX_CONTINUOUS = 1e6
MANIFEST = "manifest.json"
SUMMARY = "summary.txt"
MC_HEADER = ["experiment_id", "n_or_t", "k", "env_index", "estimate", "stderr", "M", "seed"]
_ID_RE = re.compile(r"^[A-Za-z0-9._-]+$")


# -- walk resolution ------------------------------------------------------------------

def _pair_name(doc):
    if isinstance(doc, str) and doc in PAIR_PRESETS:
        return doc, None
    if isinstance(doc, dict) and doc.get("preset") in PAIR_PRESETS:
        return doc["preset"], doc.get("kind")
    return None, None


def resolve_pair(cfg) -> tuple[WalkSpec, WalkSpec]:
    """(X, Y) from a pair preset in ``walk`` or from ``x_walk``/``y_walk``."""
    if "x_walk" in cfg or "y_walk" in cfg:
        return load_walk(cfg["x_walk"]), load_walk(cfg["y_walk"])
    name, kind = _pair_name(cfg.get("walk"))
    if name is None:
        w = load_walk(cfg["walk"])
        return w, w
    xs, ys = PAIR_PRESETS[name]
    return load_walk({"preset": xs, "kind": kind}), load_walk({"preset": ys, "kind": kind})


def resolve_single(cfg) -> WalkSpec:
    """One walk; a pair preset or x/y walks yield their difference walk."""
    if "x_walk" in cfg or _pair_name(cfg.get("walk"))[0] is not None:
        return difference_walk(*resolve_pair(cfg))
    return load_walk(cfg["walk"])


# -- validation --------------------------------------------------------------------

def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _horizon(cfg):
    return cfg.get("n", cfg.get("t"))


def validate(cfg) -> list[str]:
    """Violations of the config, each naming the field and the reason; empty iff runnable."""
    out = []
    if not isinstance(cfg, dict):
        return ["config must be a JSON object"]
    seed = cfg.get("master_seed")
    if seed is None:
        out.append("master_seed required")
    elif not _is_int(seed) or seed < 0:
        out.append("master_seed must be a non-negative integer")
    kind = cfg.get("kind")
    if kind not in KINDS:
        out.append(f"kind must be one of {', '.join(KINDS)}")
        return out
    eid = cfg.get("experiment_id", kind)
    if not isinstance(eid, str) or not _ID_RE.match(eid):
        out.append("experiment_id must match [A-Za-z0-9._-]+")
    w = cfg.get("workers", 1)
    if not (w == "max" or (_is_int(w) and w >= 1)):
        out.append("workers must be a positive integer or \"max\"")
    if "output_dir" in cfg and not isinstance(cfg["output_dir"], str):
        out.append("output_dir must be a string")

    needs_m = kind in ("annealed", "quenched", "variance-scan", "joint")
    if needs_m or "M" in cfg:
        M = cfg.get("M")
        if M is None:
            out.append("M required")
        elif not _is_int(M) or M < 2:
            out.append("M ≥ 2")
        elif M > 10**8:
            out.append("M must be ≤ 100000000")

    walks = []
    if kind in ("annealed", "moment-scan") or (kind == "lemma-check" and cfg.get("check") in ("gradpot", "rwconv")):
        try:
            walks = [resolve_single(cfg)]
        except (KeyError, ValueError, LatticeLabError) as exc:
            out.append(f"walk: {exc}")
    elif kind in ("quenched", "variance-scan", "joint", "pinning"):
        try:
            walks = list(resolve_pair(cfg))
            if walks[0].is_discrete != walks[1].is_discrete:
                out.append("walk: X and Y must share the time kind")
        except (KeyError, ValueError, LatticeLabError) as exc:
            out.append(f"walk: {exc}")
    discrete = all(w.is_discrete for w in walks) if walks else True

    def check_horizon(name, value):
        cap = MAX_DISCRETE if discrete else MAX_CONTINUOUS
        if discrete and not (_is_int(value) and 0 <= value <= cap):
            out.append(f"{name} must be an integer in [0, {cap}]")
        elif not discrete and not (_is_num(value) and 0 <= value <= cap):
            out.append(f"{name} must be a number in [0, {cap:g}]")

    if kind in ("annealed", "quenched", "joint"):
        h = _horizon(cfg)
        if h is None:
            out.append("n required (t for continuous time)")
        else:
            check_horizon("n" if "n" in cfg else "t", h)
    if kind in ("annealed", "quenched"):
        k = cfg.get("k_max", 2)
        if not _is_int(k) or k < 1:
            out.append("k_max must be an integer ≥ 1")
    if kind in ("annealed",) and cfg.get("method", "path") not in ("path", "renewal"):
        out.append("method must be path or renewal")
    if kind in ("quenched", "joint"):
        ne = cfg.get("num_env", 1)
        if not _is_int(ne) or ne < 1:
            out.append("num_env must be an integer ≥ 1")
    if kind in ("variance-scan", "moment-scan"):
        grid = cfg.get("n_grid")
        if not isinstance(grid, list) or not grid:
            out.append("n_grid required")
        else:
            for v in grid:
                check_horizon("n_grid", v)
            if any(not _is_num(v) for v in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
                out.append("n_grid must be increasing")
            elif kind == "moment-scan" and grid[0] < 2:
                out.append("n_grid entries must be ≥ 2")
        if walks and not discrete:
            out.append("walk: scans need discrete-time walks")
    if kind == "variance-scan":
        ne = cfg.get("num_env")
        if not _is_int(ne) or ne < 20:
            out.append("num_env ≥ 20")
        if not _is_int(cfg.get("k", 1)) or cfg.get("k", 1) < 1:
            out.append("k must be an integer ≥ 1")
        if not _is_num(cfg.get("eps", 0.5)) or cfg.get("eps", 0.5) <= 0:
            out.append("eps must be > 0")
    if kind == "moment-scan":
        k = cfg.get("k_max", 2)
        if not _is_int(k) or k < 0:
            out.append("k_max must be an integer ≥ 0")
        tol = cfg.get("tolerance", 0.35)
        if not _is_num(tol) or tol <= 0:
            out.append("tolerance must be > 0")
    if kind == "lemma-check":
        check = cfg.get("check")
        if check not in CHECKS:
            out.append(f"check must be one of {', '.join(CHECKS)}")
        elif check == "rwconv":
            q = cfg.get("q")
            if not _is_num(q) or not 1 <= q < 2:
                out.append("q must lie in [1,2)")
            il = cfg.get("i_list")
            if not isinstance(il, list) or not il or not all(_is_int(i) and i >= 1 for i in il):
                out.append("i_list must be a non-empty list of integers ≥ 1")
            if not _is_site(cfg.get("v", [0, 0])):
                out.append("v must be an integer 2-vector")
        elif check == "gradpot":
            if not _is_site(cfg.get("z0")):
                out.append("z0 must be an integer 2-vector")
            xl = cfg.get("x_list")
            if not isinstance(xl, list) or not xl or not all(_is_site(x) for x in xl):
                out.append("x_list must be a non-empty list of integer 2-vectors")
            nt = cfg.get("N_trunc")
            if nt is not None and not (_is_int(nt) and nt >= 1):
                out.append("N_trunc must be a positive integer")
        else:
            for name in ("trials", "length"):
                v = cfg.get(name)
                if not _is_int(v) or v < 1:
                    out.append(f"{name} must be an integer ≥ 1")
    if kind == "pam":
        for name in ("kappa", "rho", "gamma", "t"):
            v = cfg.get(name)
            if not _is_num(v):
                out.append(f"{name} required (number)")
            elif name != "gamma" and v < 0:
                out.append(f"{name} must be ≥ 0")
        t = cfg.get("t")
        rb = cfg.get("rbox")
        if not _is_int(rb):
            out.append("rbox required (integer)")
        elif _is_num(t) and t >= 0 and rb < math.ceil(3 * math.sqrt(t)):
            out.append("rbox must be ≥ ceil(3 sqrt(t))")
        tol = cfg.get("tol", 1e-11)
        if not _is_num(tol) or tol <= 0:
            out.append("tol must be > 0")
    if kind == "pinning":
        if not _is_num(cfg.get("gamma")):
            out.append("gamma required (number)")
        tg = cfg.get("t_grid")
        if not isinstance(tg, list) or not tg or not all(_is_int(t) and 1 <= t <= 4096 for t in tg):
            out.append("t_grid must be a non-empty list of integers in [1, 4096]")
        ne = cfg.get("num_env")
        if not _is_int(ne) or ne < 1:
            out.append("num_env must be an integer ≥ 1")
        if walks and not discrete:
            out.append("walk: pinning needs discrete-time walks")
    return out


def _is_site(v) -> bool:
    return isinstance(v, (list, tuple)) and len(v) == 2 and all(_is_int(a) for a in v)


# -- outputs --------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float) or isinstance(v, np.floating):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    if isinstance(v, (tuple, list)):
        return " ".join(_fmt(a) for a in v)
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


class Outputs:
    """Collects output files in memory; written only when the run completes."""

    def __init__(self):
        self.files: dict[str, str] = {}
        self.lines: list[str] = []
        self.verdicts: list[bool] = []

    def csv(self, name, header, rows):
        self.files[name] = csv_text(header, rows)

    def say(self, line: str):
        self.lines.append(line)

    def verdict(self, ok: bool, line: str):
        self.verdicts.append(bool(ok))
        self.lines.append(("PASS " if ok else "FAIL ") + line)


def _mc_rows(eid, t, est_list, env_label, offset=1):
    for k, e in enumerate(est_list, start=offset):
        yield eid, t, k, env_label, e.estimate, e.stderr, e.M, e.seed


# -- experiment runners -----------------------------------------------------------------

def _run_annealed(cfg, out, workers):
    from .exact import exact_moments_continuous
    from .mc import annealed_moments, ks_to_exponential
    from .spectral import origin_series

    z = resolve_single(cfg)
    eid, seed, M = cfg["experiment_id"], cfg["master_seed"], cfg["M"]
    t = _horizon(cfg)
    res = annealed_moments(z, t, cfg.get("k_max", 2), M, seed, method=cfg.get("method", "path"),
                           label=eid, workers=workers)
    out.csv("results.csv", MC_HEADER, _mc_rows(eid, t, res.raw, "annealed"))
    out.csv("normalized.csv", MC_HEADER, _mc_rows(eid, t, res.normalized, "annealed"))
    if t > 1:
        out.say(f"KS distance of normalized sample to Exp(1): {ks_to_exponential(res.normalized_samples()):.6f}")
    exact = None
    if z.is_discrete:
        p0 = origin_series(z.step, int(t))
        exact = float(p0.sum())
        out.csv("kernel.csv", ["j", "p_j_0"], enumerate(p0))
    elif t <= 1e4:
        step = min(1.0, t / 64) if t > 0 else 1.0
        exact = exact_moments_continuous(z, t, 1, t / max(1, round(t / step))).value if t > 0 else 0.0
    e1 = res.raw[0]
    if exact is None:
        out.say(f"k=1 estimate {e1.estimate:.6f} ± {e1.stderr:.6f} (no exact oracle at this horizon)")
    else:
        out.verdict(e1.contains(exact), f"k=1 estimate {e1.estimate:.6f} ± {e1.stderr:.6f} vs exact {exact:.6f} (3 se)")
    limit = cfg.get("ks_limit")
    if limit is not None and t > 1:
        ks = ks_to_exponential(res.normalized_samples())
        out.verdict(ks < limit, f"KS distance {ks:.6f} < {limit}")


def _sample_envs(cfg, y, t, label):
    from .mc import sample_environment

    return [sample_environment(y, t, cfg["master_seed"], i, label=label) for i in range(cfg.get("num_env", 1))]


def _run_quenched(cfg, out, workers):
    from .mc import quenched_moments
    from .spectral import origin_series

    x, y = resolve_pair(cfg)
    eid, seed, M = cfg["experiment_id"], cfg["master_seed"], cfg["M"]
    t = _horizon(cfg)
    rows, firsts = [], []
    for env in _sample_envs(cfg, y, t, f"{eid}/env"):
        q = quenched_moments(x, env, t, cfg.get("k_max", 1), M, seed, label=eid, workers=workers)
        rows.extend(_mc_rows(eid, t, q.raw, env.env_index))
        firsts.append(q.raw[0].estimate)
    out.csv("results.csv", MC_HEADER, rows)
    firsts = np.array(firsts)
    if x.is_discrete and firsts.size >= 2:
        exact = float(origin_series(difference_walk(x, y).step, int(t)).sum())
        se = firsts.std(ddof=1) / math.sqrt(firsts.size)
        out.verdict(abs(firsts.mean() - exact) <= 3 * se,
                    f"tower: mean of {firsts.size} quenched k=1 estimates {firsts.mean():.6f} ± {se:.6f} vs annealed exact {exact:.6f}")


def _run_variance_scan(cfg, out, workers):
    from .mc import quenched_variance_scan

    x, y = resolve_pair(cfg)
    eid, seed = cfg["experiment_id"], cfg["master_seed"]
    k = cfg.get("k", 1)
    res = quenched_variance_scan(x, y, cfg["n_grid"], k, cfg["num_env"], cfg["M"], cfg.get("eps", 0.5), seed,
                                 label=eid, workers=workers)
    rows = []
    for i, n in enumerate(res.n_grid):
        for e in range(res.estimates.shape[1]):
            rows.append((eid, n, k, e, res.estimates[i, e], res.stderrs[i, e], cfg["M"], seed))
    out.csv("results.csv", MC_HEADER, rows)
    out.csv("scan.csv", ["n", "variance", "raw_variance", "normalizer", "ratio", "ratio_se"],
            zip(res.n_grid, res.variance, res.raw_variance, res.normalizer, res.ratio, res.ratio_se))
    out.verdict(res.non_increasing, f"variance ratio non-increasing over n={res.n_grid} "
                f"(inversions: {len(res.inversions)})")


def _run_joint(cfg, out, workers):
    from .mc import joint_conditional_moments

    x, y = resolve_pair(cfg)
    eid, seed = cfg["experiment_id"], cfg["master_seed"]
    t = _horizon(cfg)
    envs = _sample_envs(cfg, y, t, f"{eid}/env")
    res = joint_conditional_moments(x, envs, t, cfg["M"], seed, include_origin=cfg.get("include_origin", True),
                                    label=eid, workers=workers)
    rows = []
    for a, e, p, r in zip(res.indices, res.estimates, res.predictions, res.ratios()):
        rows.append(("-".join(map(str, a)), e.estimate, e.stderr, p, r.estimate, r.stderr, e.M, seed))
    out.csv("joint.csv", ["multi_index", "estimate", "stderr", "prediction", "ratio", "ratio_stderr", "M", "seed"], rows)
    out.say(f"columns: {', '.join(map(str, res.columns))}; comparison with independent Exp(1) limits is exploratory")


def _run_lemma(cfg, out, workers):
    from . import lemmas

    check = cfg["check"]
    if check == "rearrangement":
        rep = lemmas.check_rearrangement(cfg["trials"], cfg["length"], cfg["master_seed"])
        out.csv("lemma.csv", ["trials", "length", "violations_majorized", "violations_sorted", "max_excess"],
                [(rep.trials, rep.length, rep.violations_majorized, rep.violations_sorted, rep.max_excess)])
        out.verdict(rep.violations == 0, f"rearrangement violations: {rep.violations}")
        return
    walk = resolve_single(cfg)
    if check == "gradpot":
        rep = lemmas.check_gradpot(walk, cfg["z0"], cfg["x_list"], cfg.get("N_trunc"))
    else:
        rep = lemmas.check_rwconv(walk, cfg["q"], cfg.get("v", [0, 0]), cfg["i_list"])
    out.csv("lemma.csv", ["input", "lhs", "rhs", "ratio"], rep.rows())
    limit = cfg.get("slope_limit", lemmas.TREND_LIMIT)
    for x in rep.skipped:
        out.say(f"skipped {x}: sites never carry mass at a common time")
    out.verdict(rep.passed(limit), f"{rep.name}: max ratio {rep.max_ratio:.6g}, trend slope {rep.slope:.4f} (limit {limit})")


def _run_moment_scan(cfg, out, workers):
    from .exact import local_time_pmf
    from .lemmas import moment_convergence_scan
    from .spectral import origin_series

    z = resolve_single(cfg)
    k_max = cfg.get("k_max", 2)
    scan = moment_convergence_scan(z, cfg["n_grid"], k_max, method=cfg.get("method", "factorial"))
    out.csv("moments.csv", ["n", "k", "normalized", "k_factorial", "deviation"], scan.rows())
    nmax = scan.n_grid[-1]
    if cfg.get("export_kernel", False):
        out.csv("kernel.csv", ["j", "p_j_0"], enumerate(origin_series(z.step, nmax)))
    if cfg.get("export_pmf", False):
        pmf = local_time_pmf(z, nmax)
        out.csv("pmf.csv", ["m", "prob"], zip(pmf.support, pmf.probs))
    dev = scan.deviation()
    tol = cfg.get("tolerance", 0.35)
    for k in range(1, k_max + 1):
        ok = dev[-1, k] < tol and (len(scan.n_grid) < 2 or dev[-1, k] < dev[-2, k])
        prev = f", {dev[-2, k]:.4f} at n={scan.n_grid[-2]}" if len(scan.n_grid) > 1 else ""
        out.verdict(ok, f"k={k}: relative deviation {dev[-1, k]:.4f} at n={nmax}{prev} (limit {tol})")


def _run_pam(cfg, out, workers):
    from .catalyst import PamConfig, catalyst_path, pam_feynman_kac, pam_solve

    pc = PamConfig(cfg["kappa"], cfg["gamma"], cfg["rho"], float(cfg["t"]), cfg["rbox"], tol=cfg.get("tol", 1e-11))
    env = catalyst_path(pc, cfg["master_seed"], cfg.get("env_index", 0))
    field = pam_solve(pc, env)
    out.csv("field.csv", ["x", "y", "u"], field.rows())
    out.csv("catalyst.csv", ["time", "x", "y"], ((t, p[0], p[1]) for t, p in zip(*env.pieces(pc.t))))
    u0 = field.at((0, 0))
    out.say(f"u(t,0) = {u0!r}; boundary diagnostic {field.boundary_ratio:.3g}")
    if "M" in cfg:
        fk = pam_feynman_kac(pc, env, (0, 0), cfg["M"], cfg["master_seed"], workers=workers)
        out.csv("fk.csv", ["x", "y", "estimate", "stderr", "M", "seed"], [(0, 0, fk.estimate, fk.stderr, fk.M, fk.seed)])
        ok = abs(fk.estimate - u0) <= 3 * fk.stderr or (fk.stderr == 0 and abs(fk.estimate - u0) <= 1e-8 * max(1, u0))
        out.verdict(ok, f"Feynman-Kac {fk.estimate:.6f} ± {fk.stderr:.6f} vs solver {u0:.6f} (3 se)")


def _run_pinning(cfg, out, workers):
    from .catalyst import PinningConfig, free_energy_estimate

    x, y = resolve_pair(cfg)
    pc = PinningConfig(cfg["gamma"], max(cfg["t_grid"]), x, y)
    res = free_energy_estimate(pc, cfg["t_grid"], cfg["num_env"], cfg["master_seed"], workers=workers)
    out.csv("pinning.csv", ["t", "env_index", "log_partition", "per_time_rate"], res.rows())
    for t, e in zip(res.t_grid, res.estimates):
        out.say(f"t={t}: (1/t) E log Z = {e.estimate:.6f} ± {e.stderr:.6f}")
    out.say(f"lower bound for the free energy (max over t): {res.lower_bound:.6f}; sign at largest t: {res.sign()}")
    expect = cfg.get("expect_sign")
    if expect is not None:
        out.verdict(res.sign() == expect or (expect == "nonpositive" and res.lower_bound <= 0),
                    f"sign {res.sign()} (expected {expect})")


RUNNERS = {
    "annealed": _run_annealed,
    "quenched": _run_quenched,
    "variance-scan": _run_variance_scan,
    "joint": _run_joint,
    "lemma-check": _run_lemma,
    "moment-scan": _run_moment_scan,
    "pam": _run_pam,
    "pinning": _run_pinning,
}


# -- run / report ------------------------------------------------------------------------

def output_root(cfg) -> Path:
    env = os.environ.get("LATTICELAB_OUT")
    if env:
        return Path(env)
    return Path(cfg.get("output_dir", "runs"))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def run(cfg: dict, *, stream=None) -> tuple[int, Path | None]:
    """Run an experiment; returns (exit status, run directory)."""
    stream = stream or sys.stdout
    problems = validate(cfg)
    if problems:
        for p in problems:
            print(f"config error: {p}", file=stream)
        return 2, None
    cfg = dict(cfg)
    cfg.setdefault("experiment_id", cfg["kind"])
    workers = cfg.get("workers", 1)
    started = _now()
    out = Outputs()
    try:
        RUNNERS[cfg["kind"]](cfg, out, 0 if workers == "max" else workers)
    except LatticeLabError as exc:
        print(f"error in {cfg['kind']} experiment {cfg['experiment_id']!r}: {type(exc).__name__}: {exc}", file=stream)
        return 1, None
    run_dir = output_root(cfg) / cfg["experiment_id"]
    run_dir.mkdir(parents=True, exist_ok=True)
    out.files[SUMMARY] = "".join(line + "\n" for line in out.lines)
    sums = {}
    for name, text in out.files.items():
        p = run_dir / name
        p.write_text(text)
        sums[name] = _sha256(p)
    verdict = "n/a" if not out.verdicts else ("PASS" if all(out.verdicts) else "FAIL")
    manifest = {
        "experiment_id": cfg["experiment_id"],
        "kind": cfg["kind"],
        "config": cfg,
        "tool_version": __version__,
        "backend": BACKEND,
        "started": started,
        "finished": _now(),
        "verdict": verdict,
        "outputs": sums,
    }
    (run_dir / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for line in out.lines:
        print(line, file=stream)
    print(f"results written to {run_dir}", file=stream)
    return (1 if verdict == "FAIL" else 0), run_dir


def load_manifest(run_dir) -> dict:
    run_dir = Path(run_dir)
    path = run_dir / MANIFEST
    if not path.is_file():
        raise ManifestCorrupt(f"no {MANIFEST} in {run_dir}")
    try:
        manifest = json.loads(path.read_text())
        outputs = manifest["outputs"]
    except (ValueError, KeyError, TypeError) as exc:
        raise ManifestCorrupt(f"unreadable manifest: {exc}") from None
    for name, digest in outputs.items():
        p = run_dir / name
        if not p.is_file():
            raise ManifestCorrupt(f"missing output {name}")
        if _sha256(p) != digest:
            raise ManifestCorrupt(f"checksum mismatch for {name}")
    return manifest


def _read_csv(path: Path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _table(header, rows) -> str:
    cells = [list(map(str, header))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells)


def report(run_dir) -> str:
    """Human-readable summary of a finished run (checksums verified first)."""
    run_dir = Path(run_dir)
    m = load_manifest(run_dir)
    kind = m["kind"]
    parts = [f"experiment {m['experiment_id']} ({kind}), tool {m['tool_version']}, backend {m.get('backend')}",
             f"started {m['started']}, finished {m['finished']}"]
    if kind == "moment-scan":
        rows = _read_csv(run_dir / "moments.csv")
        parts.append(_table(["n", "k", "normalized", "k!", "rel. deviation"],
                            [(r["n"], r["k"], f"{float(r['normalized']):.6f}", r["k_factorial"],
                              f"{float(r['deviation']):.4f}") for r in rows]))
    elif kind == "variance-scan":
        rows = _read_csv(run_dir / "scan.csv")
        ratios = [float(r["ratio"]) for r in rows]
        ses = [float(r["ratio_se"]) for r in rows]
        parts.append(_table(["n", "variance", "ratio", "ratio se"],
                            [(r["n"], f"{float(r['variance']):.6g}", f"{float(r['ratio']):.6g}",
                              f"{float(r['ratio_se']):.3g}") for r in rows]))
        inv = [i for i in range(len(ratios) - 1) if ratios[i + 1] > ratios[i]]
        ok = not inv or (len(inv) == 1 and ratios[inv[0] + 1] - ratios[inv[0]] <= 2 * math.hypot(ses[inv[0]], ses[inv[0] + 1]))
        parts.append(f"monotonicity: {'non-increasing' if ok else 'increasing'} ({len(inv)} inversion(s))")
    elif kind in ("annealed", "quenched"):
        rows = _read_csv(run_dir / "results.csv")
        shown = rows[:40]
        parts.append(_table(["n_or_t", "k", "env", "estimate", "stderr", "M"],
                            [(r["n_or_t"], r["k"], r["env_index"], f"{float(r['estimate']):.6f}",
                              f"{float(r['stderr']):.6f}", r["M"]) for r in shown]))
        if len(rows) > len(shown):
            parts.append(f"... {len(rows) - len(shown)} more rows")
    elif kind == "lemma-check":
        rows = _read_csv(run_dir / "lemma.csv")
        parts.append(_table(list(rows[0].keys()), [list(r.values()) for r in rows]) if rows else "(no rows)")
    elif kind == "joint":
        rows = _read_csv(run_dir / "joint.csv")
        parts.append(_table(["a", "estimate", "stderr", "prediction", "ratio"],
                            [(r["multi_index"], f"{float(r['estimate']):.5f}", f"{float(r['stderr']):.5f}",
                              r["prediction"], f"{float(r['ratio']):.4f}") for r in rows]))
    summary = run_dir / SUMMARY
    if summary.is_file():
        parts.append(summary.read_text().rstrip())
    parts.append(f"verdict: {m['verdict']}")
    return "\n".join(parts)


def presets_text(as_json: bool = False) -> str:
    docs = {}
    for name, step in PRESET_STEPS.items():
        w = preset(name)
        q = covariance(step)
        entry = {"support": w.to_doc()["support"], "Q": [[str(q.q11), str(q.q12)], [str(q.q12), str(q.q22)]],
                 "irreducible": is_irreducible(step) if not step.is_point_mass() else False,
                 "period": period(step) if not step.is_point_mass() else None}
        try:
            entry["local_time_constant"] = et_constant(w)
        except LatticeLabError:
            entry["local_time_constant"] = None
        docs[name] = entry
    for name, (a, b) in PAIR_PRESETS.items():
        z = difference_walk(preset(a), preset(b))
        rq = reduced_covariance(z.step)
        docs[name] = {"x": a, "y": b, "difference_support": z.to_doc()["support"],
                      "reduced_det_Q": str(rq.det), "local_time_constant": et_constant(z)}
    if as_json:
        return json.dumps(docs, indent=2)
    lines = []
    for name, d in docs.items():
        if "x" in d:
            lines.append(f"{name:10s} pair X={d['x']} Y={d['y']}; difference walk constant {d['local_time_constant']:.6f}")
        else:
            c = d["local_time_constant"]
            cs = "n/a" if c is None else f"{c:.6f}"
            lines.append(f"{name:10s} {len(d['support'])} steps, Q={d['Q']}, period {d['period']}, constant {cs}")
    return "\n".join(lines)


# -- argument parsing ---------------------------------------------------------------------

def _parse_value(text: str):
    try:
        return json.loads(text)
    except ValueError:
        return text


def load_config(path: str, args) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigInvalid([f"config: cannot read {path}: {exc.strerror}"]) from None
    except ValueError as exc:
        raise ConfigInvalid([f"config: invalid JSON ({exc})"]) from None
    if not isinstance(cfg, dict):
        raise ConfigInvalid(["config must be a JSON object"])
    for item in args.set or []:
        if "=" not in item:
            raise ConfigInvalid([f"--set expects key=value, got {item!r}"])
        key, value = item.split("=", 1)
        cfg[key.strip()] = _parse_value(value)
    if args.master_seed is not None:
        cfg["master_seed"] = args.master_seed
    if args.workers is not None:
        cfg["workers"] = _parse_value(args.workers)
    if args.output_dir is not None:
        cfg["output_dir"] = args.output_dir
    if args.experiment_id is not None:
        cfg["experiment_id"] = args.experiment_id
    return cfg


def _add_overrides(p):
    p.add_argument("config", help="experiment config (JSON)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a top-level field (JSON value)")
    p.add_argument("--master-seed", type=int)
    p.add_argument("--workers", help="worker processes (integer or 'max')")
    p.add_argument("--output-dir")
    p.add_argument("--experiment-id")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latticelab", description="Local-time laboratory for planar lattice walks")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_overrides(sub.add_parser("run", help="run an experiment"))
    _add_overrides(sub.add_parser("validate", help="check a config without running it"))
    rp = sub.add_parser("report", help="summarize a finished run")
    rp.add_argument("run_dir")
    pp = sub.add_parser("presets", help="list built-in walks")
    pp.add_argument("--json", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        print(presets_text(args.json))
        return 0
    if args.command == "report":
        try:
            print(report(args.run_dir))
        except ManifestCorrupt as exc:
            print(f"error: manifest corrupt: {exc}", file=sys.stderr)
            return 1
        return 0
    try:
        cfg = load_config(args.config, args)
    except ConfigInvalid as exc:
        for v in exc.violations:
            print(f"config error: {v}")
        return 2
    if args.command == "validate":
        problems = validate(cfg)
        for p in problems:
            print(p)
        if not problems:
            print("config ok")
        return 2 if problems else 0
    status, _ = run(cfg)
    return status


if __name__ == "__main__":
    sys.exit(main())
