"""Step distributions on Z^2, walk specifications and sublattice reduction.

Weights are kept as :class:`fractions.Fraction` whenever every weight was
given exactly (ints, Fractions or ``"num/den"`` strings); a single float
weight switches the whole distribution to double precision.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateCovariance,
    InvalidDistribution,
    MixedTimeKinds,
    RankDeficient,
)

Site = tuple[int, int]

_FLOAT_SUM_TOL = 1e-15
_MEAN_TOL = 1e-12


def _as_weight(w):
    if isinstance(w, bool):
        raise InvalidDistribution(f"weight {w!r} is not a number")
    if isinstance(w, Fraction):
        return w
    if isinstance(w, int):
        return Fraction(w)
    if isinstance(w, str):
        return Fraction(w.strip())
    return float(w)


@dataclass(frozen=True)
class StepDistribution:
    """Finite-support probability kernel on Z^2.

    The support is stored sorted with duplicate sites merged and zero
    weights dropped, so two distributions describing the same kernel
    compare equal regardless of how they were listed.
    """

    support: tuple[Site, ...]
    weights: tuple

    def __post_init__(self):
        if len(self.support) != len(self.weights):
            raise InvalidDistribution("support and weights differ in length")
        raw = [_as_weight(w) for w in self.weights]
        exact = all(isinstance(w, Fraction) for w in raw)
        if not exact:
            raw = [float(w) for w in raw]
        merged: dict[Site, object] = {}
        for site, w in zip(self.support, raw):
            if len(site) != 2:
                raise InvalidDistribution(f"site {site!r} is not a 2-vector")
            key = (int(site[0]), int(site[1]))
            if key[0] != site[0] or key[1] != site[1]:
                raise InvalidDistribution(f"site {site!r} is not integer")
            if w < 0:
                raise InvalidDistribution(f"negative weight {w} at {key}")
            merged[key] = merged.get(key, 0) + w
        items = sorted((s, w) for s, w in merged.items() if w != 0)
        if not items:
            raise InvalidDistribution("empty support")
        total = sum(w for _, w in items) if exact else math.fsum(w for _, w in items)
        if exact and total != 1:
            raise InvalidDistribution(f"weights sum to {total}, not 1")
        if not exact and abs(total - 1.0) > _FLOAT_SUM_TOL:
            raise InvalidDistribution(f"weights sum to {total!r}, not 1")
        object.__setattr__(self, "support", tuple(s for s, _ in items))
        object.__setattr__(self, "weights", tuple(w for _, w in items))

    @classmethod
    def from_mapping(cls, mapping: Mapping[Site, object]) -> "StepDistribution":
        return cls(tuple(mapping.keys()), tuple(mapping.values()))

    @classmethod
    def centered(cls, mapping: Mapping[Site, object]) -> "StepDistribution":
        """Build a distribution and insist that its mean vanishes."""
        dist = cls.from_mapping(mapping)
        m = dist.mean()
        if max(abs(float(m[0])), abs(float(m[1]))) > _MEAN_TOL:
            raise InvalidDistribution(f"mean {m} is not zero")
        return dist

    @classmethod
    def point_mass(cls) -> "StepDistribution":
        return cls(((0, 0),), (Fraction(1),))

    @property
    def exact(self) -> bool:
        return isinstance(self.weights[0], Fraction)

    def __len__(self) -> int:
        return len(self.support)

    def items(self):
        return zip(self.support, self.weights)

    def mean(self):
        return (
            sum(w * s[0] for s, w in self.items()),
            sum(w * s[1] for s, w in self.items()),
        )

    def is_point_mass(self) -> bool:
        return self.support == ((0, 0),)

    def is_symmetric(self) -> bool:
        table = dict(self.items())
        return all(table.get((-s[0], -s[1])) == w for s, w in self.items())

    def reflected(self) -> "StepDistribution":
        return StepDistribution(tuple((-a, -b) for a, b in self.support), self.weights)

    def to_float(self) -> "StepDistribution":
        return StepDistribution(self.support, tuple(float(w) for w in self.weights))

    @cached_property
    def steps(self) -> np.ndarray:
        """Support as an int64 array of shape (K, 2)."""
        arr = np.array(self.support, dtype=np.int64).reshape(-1, 2)
        arr.setflags(write=False)
        return arr

    @cached_property
    def probs(self) -> np.ndarray:
        arr = np.array([float(w) for w in self.weights])
        arr.setflags(write=False)
        return arr

    @cached_property
    def sampling_cdf(self) -> np.ndarray:
        """Cumulative weights used for inverse-CDF step selection.

        The last entry is forced to exactly 1.0 so a uniform draw in [0, 1)
        always selects a support point.
        """
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        cdf.setflags(write=False)
        return cdf

    @property
    def reach(self) -> float:
        """Largest Euclidean norm of a support point."""
        return max(math.hypot(a, b) for a, b in self.support)

    @property
    def reach_inf(self) -> int:
        return max(max(abs(a), abs(b)) for a, b in self.support)

    def characteristic(self, t1, t2) -> np.ndarray:
        """Characteristic function sum_x p(x) exp(i theta . x) at (t1, t2)."""
        t1 = np.asarray(t1, dtype=float)
        t2 = np.asarray(t2, dtype=float)
        out = np.zeros(np.broadcast(t1, t2).shape, dtype=complex)
        for (a, b), w in zip(self.support, self.probs):
            out += w * np.exp(1j * (a * t1 + b * t2))
        return out

    def to_doc(self) -> dict:
        return {"support": [[a, b, _weight_to_json(w)] for (a, b), w in self.items()]}


def _weight_to_json(w):
    if isinstance(w, Fraction):
        return f"{w.numerator}/{w.denominator}"
    return w


@dataclass(frozen=True)
class CovarianceMatrix:
    """Symmetric 2x2 second-moment matrix stored as three scalars."""

    q11: object
    q12: object
    q22: object

    @property
    def det(self):
        return self.q11 * self.q22 - self.q12 * self.q12

    def as_array(self) -> np.ndarray:
        return np.array(
            [[float(self.q11), float(self.q12)], [float(self.q12), float(self.q22)]]
        )

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.as_array())

    @property
    def nondegenerate(self) -> bool:
        return self.det > 0

    def inverse_quadratic(self, x) -> float:
        """x . Q^{-1} x for a 2-vector (or an array of shape (..., 2))."""
        det = float(self.det)
        if det <= 0:
            raise DegenerateCovariance(f"det Q = {det}")
        x = np.asarray(x, dtype=float)
        a, b, c = float(self.q11), float(self.q12), float(self.q22)
        return (c * x[..., 0] ** 2 - 2 * b * x[..., 0] * x[..., 1] + a * x[..., 1] ** 2) / det

    def transformed(self, m: Sequence[Sequence]) -> "CovarianceMatrix":
        """Covariance of the linear image M x, i.e. M Q M^T."""
        (a, b), (c, d) = m
        q11, q12, q22 = self.q11, self.q12, self.q22
        return CovarianceMatrix(
            a * a * q11 + 2 * a * b * q12 + b * b * q22,
            a * c * q11 + (a * d + b * c) * q12 + b * d * q22,
            c * c * q11 + 2 * c * d * q12 + d * d * q22,
        )


def covariance(dist: StepDistribution) -> CovarianceMatrix:
    """Q_ij = sum_x p(x) x_i x_j."""
    q11 = sum(w * a * a for (a, b), w in dist.items())
    q12 = sum(w * a * b for (a, b), w in dist.items())
    q22 = sum(w * b * b for (a, b), w in dist.items())
    return CovarianceMatrix(q11, q12, q22)


@dataclass(frozen=True)
class WalkSpec:
    step: StepDistribution
    kind: str = "discrete"
    rate: object = 1

    def __post_init__(self):
        if self.kind not in ("discrete", "continuous"):
            raise ValueError(f"unknown time kind {self.kind!r}")
        if self.kind == "discrete":
            object.__setattr__(self, "rate", 1)
        elif not self.rate > 0:
            raise ValueError(f"continuous walks need a positive jump rate, got {self.rate}")

    @classmethod
    def discrete(cls, step: StepDistribution) -> "WalkSpec":
        return cls(step, "discrete", 1)

    @classmethod
    def continuous(cls, step: StepDistribution, rate=1) -> "WalkSpec":
        return cls(step, "continuous", rate)

    @property
    def is_discrete(self) -> bool:
        return self.kind == "discrete"

    def to_doc(self) -> dict:
        doc = self.step.to_doc()
        doc["kind"] = "discrete" if self.is_discrete else {"continuous": _weight_to_json(self.rate)}
        return doc


# -- integer lattices -------------------------------------------------------


def _egcd(a: int, b: int) -> tuple[int, int, int]:
    """(g, s, t) with s*a + t*b = g = gcd(a, b) >= 0."""
    s0, s1, t0, t1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        s0, s1 = s1, s0 - q * s1
        t0, t1 = t1, t0 - q * t1
    if a < 0:
        a, s0, t0 = -a, -s0, -t0
    return a, s0, t0


def hermite_basis(vectors: Iterable[Sequence[int]]) -> tuple[tuple[int, int], tuple[int, int]]:
    """Lower-triangular Hermite normal form of the group generated by ``vectors``.

    Returns the 2x2 matrix ``((a, 0), (b, c))`` whose columns ``(a, b)`` and
    ``(0, c)`` form a basis, with ``a, c > 0`` and ``0 <= b < c``.
    """
    u: tuple[int, int] | None = None
    c = 0
    for v in vectors:
        v1, v2 = int(v[0]), int(v[1])
        if v1 == 0:
            c = math.gcd(c, v2)
            continue
        if u is None:
            u = (v1, v2) if v1 > 0 else (-v1, -v2)
            continue
        a = u[0]
        g, s, t = _egcd(a, v1)
        k1, k2 = v1 // g, a // g
        new_u = (s * u[0] + t * v1, s * u[1] + t * v2)
        # (k1*u - k2*v) has zero first coordinate
        c = math.gcd(c, k1 * u[1] - k2 * v2)
        u = new_u
    if u is None or c == 0:
        raise RankDeficient("vectors do not span a rank-2 lattice")
    a, b = u
    return ((a, 0), (b % c, c))


@dataclass(frozen=True)
class LatticeMap:
    """Linear bijection between the lattice B Z^2 and Z^2.

    ``basis`` is the 2x2 integer matrix B; its columns generate the lattice.
    """

    basis: tuple[tuple[int, int], tuple[int, int]] = ((1, 0), (0, 1))

    @property
    def det(self) -> int:
        (a, b), (c, d) = self.basis
        return a * d - b * c

    @property
    def columns(self) -> tuple[tuple[int, int], tuple[int, int]]:
        (a, b), (c, d) = self.basis
        return (a, c), (b, d)

    def is_identity(self) -> bool:
        return self.basis == ((1, 0), (0, 1))

    def inverse_matrix(self) -> tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction]]:
        (a, b), (c, d) = self.basis
        det = Fraction(self.det)
        return ((d / det, -b / det), (-c / det, a / det))

    def to_image(self, v: Sequence[int]) -> tuple[int, int]:
        """B^{-1} v; raises if v is not in the lattice."""
        (a, b), (c, d) = self.inverse_matrix()
        w1 = a * v[0] + b * v[1]
        w2 = c * v[0] + d * v[1]
        if w1.denominator != 1 or w2.denominator != 1:
            raise ValueError(f"{tuple(v)} is not in the lattice spanned by {self.columns}")
        return (int(w1), int(w2))

    def from_image(self, w: Sequence[int]) -> tuple[int, int]:
        (a, b), (c, d) = self.basis
        return (a * w[0] + b * w[1], c * w[0] + d * w[1])


def sublattice_reduce(dist: StepDistribution) -> tuple[LatticeMap, StepDistribution]:
    """Map the group generated by the nonzero support bijectively onto Z^2.

    Returns the Hermite basis B of that group and the image distribution with
    support B^{-1}(support).
    """
    gens = [s for s in dist.support if s != (0, 0)]
    basis = hermite_basis(gens)
    lmap = LatticeMap(basis)
    if lmap.is_identity():
        return lmap, dist
    image = StepDistribution(tuple(lmap.to_image(s) for s in dist.support), dist.weights)
    return lmap, image


def is_irreducible(dist: StepDistribution) -> bool:
    """True iff the nonzero support generates all of Z^2."""
    try:
        return LatticeMap(hermite_basis(s for s in dist.support if s != (0, 0))).det == 1
    except RankDeficient:
        return False


def difference_lattice(dist: StepDistribution) -> LatticeMap:
    """Hermite basis of the group generated by differences of support points."""
    x0 = dist.support[0]
    return LatticeMap(hermite_basis((a - x0[0], b - x0[1]) for a, b in dist.support[1:]))


def period(dist: StepDistribution) -> int | None:
    """Period of return times to the origin of the discrete-time walk.

    The smallest d with d*x0 in the difference lattice (x0 any support point);
    ``None`` when the differences do not span a rank-2 lattice.
    """
    try:
        lmap = difference_lattice(dist)
    except RankDeficient:
        return None
    x0 = dist.support[0]
    for d in range(1, abs(lmap.det) + 1):
        try:
            lmap.to_image((d * x0[0], d * x0[1]))
            return d
        except ValueError:
            continue
    raise AssertionError("unreachable: det(B) * x0 always lies in the lattice")


def _convolve(p: StepDistribution, q: StepDistribution) -> StepDistribution:
    out: dict[Site, object] = {}
    for (a, b), w in p.items():
        for (c, d), v in q.items():
            key = (a + c, b + d)
            out[key] = out.get(key, 0) + w * v
    return StepDistribution.from_mapping(out)


def difference_walk(x: WalkSpec, y: WalkSpec) -> WalkSpec:
    """The walk Z = X - Y.

    Discrete time: one X-step and one Y-step per tick, so the step law is the
    convolution of p_X with the reflected p_Y. Continuous time: Z jumps at rate
    kappa + rho, with the jump drawn from p_X or from the reflected p_Y in
    proportion to the two rates.
    """
    if x.kind != y.kind:
        raise MixedTimeKinds(f"cannot combine a {x.kind} walk with a {y.kind} walk")
    if x.is_discrete:
        return WalkSpec.discrete(_convolve(x.step, y.step.reflected()))
    kappa, rho = x.rate, y.rate
    total = kappa + rho
    exact = x.step.exact and y.step.exact and all(
        isinstance(r, (int, Fraction)) for r in (kappa, rho)
    )
    if exact:
        wx, wy = Fraction(kappa) / total, Fraction(rho) / total
    else:
        wx, wy = float(kappa) / float(total), float(rho) / float(total)
    mix: dict[Site, object] = {}
    for s, w in x.step.items():
        mix[s] = mix.get(s, 0) + wx * w
    for s, w in y.step.reflected().items():
        mix[s] = mix.get(s, 0) + wy * w
    if not exact:
        mix = {s: float(w) for s, w in mix.items()}
    return WalkSpec.continuous(StepDistribution.from_mapping(mix), total)


def reduced_covariance(dist: StepDistribution) -> CovarianceMatrix:
    """Covariance of the image walk after sublattice reduction."""
    _, image = sublattice_reduce(dist)
    return covariance(image)


def et_constant(walk: WalkSpec, cov: CovarianceMatrix | None = None) -> float:
    """Normalising constant 2*pi*r*sqrt(det Q) of the local time.

    ``walk`` is either a single walk (r its jump rate) or a difference walk
    returned by :func:`difference_walk` (r = kappa + rho). Without an explicit
    ``cov`` the covariance of the sublattice image walk is used; discrete walks
    have r = 1.
    """
    if cov is None:
        try:
            cov = reduced_covariance(walk.step)
        except RankDeficient as exc:
            raise DegenerateCovariance(str(exc)) from exc
    det = cov.det
    if not det > 0:
        raise DegenerateCovariance(f"det Q = {det}")
    return 2.0 * math.pi * float(walk.rate) * math.sqrt(float(det))


# -- presets and JSON documents ---------------------------------------------

_Q = Fraction

PRESET_STEPS: dict[str, StepDistribution] = {
    "srw": StepDistribution.centered(
        {(1, 0): _Q(1, 4), (-1, 0): _Q(1, 4), (0, 1): _Q(1, 4), (0, -1): _Q(1, 4)}
    ),
    "lazy-srw": StepDistribution.centered(
        {(0, 0): _Q(1, 2), (1, 0): _Q(1, 8), (-1, 0): _Q(1, 8), (0, 1): _Q(1, 8), (0, -1): _Q(1, 8)}
    ),
    "diag": StepDistribution.centered(
        {(1, 1): _Q(1, 4), (-1, -1): _Q(1, 4), (1, -1): _Q(1, 4), (-1, 1): _Q(1, 4)}
    ),
    "origin": StepDistribution.point_mass(),
}

PAIR_PRESETS: dict[str, tuple[str, str]] = {
    "srw-pair": ("srw", "srw"),
    "lazy-pair": ("lazy-srw", "lazy-srw"),
}


def preset(name: str, kind="discrete", rate=1) -> WalkSpec:
    try:
        step = PRESET_STEPS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {sorted(PRESET_STEPS)}") from None
    return WalkSpec(step, kind, rate)


def _parse_kind(kind) -> tuple[str, object]:
    if kind is None or kind == "discrete":
        return "discrete", 1
    if isinstance(kind, Mapping) and set(kind) == {"continuous"}:
        return "continuous", _as_weight(kind["continuous"])
    if kind == "continuous":
        return "continuous", 1
    raise ValueError(f"bad time kind {kind!r}")


def load_walk(doc) -> WalkSpec:
    """Parse a walk from a preset name or a JSON-style document.

    Accepted forms: ``"srw"``; ``{"preset": "srw", "kind": {"continuous": 2}}``;
    ``{"support": [[dx, dy, "1/4"], ...], "kind": "discrete"}``.
    """
    if isinstance(doc, str):
        text = doc.strip()
        if text.startswith("{"):
            return load_walk(json.loads(text))
        return preset(text)
    if not isinstance(doc, Mapping):
        raise ValueError(f"cannot interpret {doc!r} as a walk")
    kind, rate = _parse_kind(doc.get("kind"))
    if "preset" in doc:
        return preset(doc["preset"], kind, rate)
    rows = doc.get("support")
    if not rows:
        raise ValueError("walk document needs 'support' or 'preset'")
    support, weights = [], []
    for row in rows:
        if len(row) != 3:
            raise ValueError(f"support row {row!r} must be [dx, dy, weight]")
        support.append((int(row[0]), int(row[1])))
        weights.append(row[2])
    return WalkSpec(StepDistribution(tuple(support), tuple(weights)), kind, rate)
