import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from latticelab.errors import DegenerateCovariance, InvalidDistribution, MixedTimeKinds, RankDeficient
from latticelab.walk import (
    CovarianceMatrix,
    LatticeMap,
    StepDistribution,
    WalkSpec,
    covariance,
    difference_walk,
    et_constant,
    hermite_basis,
    is_irreducible,
    load_walk,
    period,
    preset,
    sublattice_reduce,
)

F = Fraction


def dist_of(mapping):
    return StepDistribution.from_mapping(mapping)


# random finite distributions with rational weights
sites = st.tuples(st.integers(-3, 3), st.integers(-3, 3))
dists = st.lists(st.tuples(sites, st.integers(1, 9)), min_size=1, max_size=7).map(
    lambda items: StepDistribution(tuple(s for s, _ in items), tuple(F(w, sum(v for _, v in items)) for _, w in items))
)


def symmetrize(d):
    half = [(s, w / 2) for s, w in d.items()] + [((-s[0], -s[1]), w / 2) for s, w in d.items()]
    return StepDistribution(tuple(s for s, _ in half), tuple(w for _, w in half))


class TestStepDistribution:
    def test_canonical_form_merges_and_sorts(self):
        d = StepDistribution(((1, 0), (0, 1), (1, 0), (2, 2)), (F(1, 4), F(1, 2), F(1, 4), 0))
        assert d.support == ((0, 1), (1, 0))
        assert d.weights == (F(1, 2), F(1, 2))
        assert d.exact

    def test_float_weights_tolerance(self):
        StepDistribution(((0, 0), (1, 0)), (0.3, 0.7))
        with pytest.raises(InvalidDistribution):
            StepDistribution(((0, 0), (1, 0)), (0.3, 0.7 + 1e-12))

    def test_exact_weights_must_sum_to_one(self):
        with pytest.raises(InvalidDistribution):
            StepDistribution(((0, 0), (1, 0)), (F(1, 3), F(1, 3)))

    @pytest.mark.parametrize("support,weights", [((), ()), (((0, 0),), (-1,)), (((0.5, 0),), (1,))])
    def test_rejects_invalid(self, support, weights):
        with pytest.raises(InvalidDistribution):
            StepDistribution(support, weights)

    def test_centered_requires_zero_mean(self):
        with pytest.raises(InvalidDistribution):
            StepDistribution.centered({(1, 0): F(1)})
        StepDistribution.centered({(1, 0): F(1, 2), (-1, 0): F(1, 2)})

    def test_sampling_cdf_ends_at_one(self, lazy):
        cdf = lazy.step.sampling_cdf
        assert cdf[-1] == 1.0 and np.all(np.diff(cdf) > 0)


class TestCovariance:
    def test_simple_walk(self, srw):
        q = covariance(srw.step)
        assert (q.q11, q.q12, q.q22) == (F(1, 2), 0, F(1, 2))

    def test_point_mass_is_zero(self):
        q = covariance(StepDistribution.point_mass())
        assert (q.q11, q.q12, q.q22) == (0, 0, 0)
        assert not q.nondegenerate

    def test_diagonal_walk_is_identity(self):
        q = covariance(preset("diag").step)
        assert (q.q11, q.q12, q.q22) == (1, 0, 1)

    @given(dists)
    def test_symmetric_psd(self, d):
        q = covariance(d)
        arr = q.as_array()
        assert np.array_equal(arr, arr.T)
        assert q.eigenvalues().min() >= -1e-12

    def test_inverse_quadratic(self):
        q = CovarianceMatrix(F(1, 2), 0, F(1, 2))
        assert q.inverse_quadratic((1, 1)) == pytest.approx(4.0)


class TestDifferenceWalk:
    def test_two_discrete_simple_walks(self, srw):
        z = difference_walk(srw, srw)
        expected = {(0, 0): F(1, 4)}
        for s in [(2, 0), (-2, 0), (0, 2), (0, -2)]:
            expected[s] = F(1, 16)
        for s in [(1, 1), (1, -1), (-1, 1), (-1, -1)]:
            expected[s] = F(1, 8)
        assert z.step == dist_of(expected)
        q = covariance(z.step)
        assert (q.q11, q.q12, q.q22) == (1, 0, 1)

    def test_two_continuous_simple_walks(self):
        c = preset("srw", "continuous", 1)
        z = difference_walk(c, c)
        assert z.rate == 2 and z.step == c.step
        q = covariance(z.step)
        assert (q.q11, q.q22) == (F(1, 2), F(1, 2))

    def test_origin_environment_is_identity(self, srw):
        assert difference_walk(srw, preset("origin")).step == srw.step

    def test_mixed_kinds(self, srw):
        with pytest.raises(MixedTimeKinds):
            difference_walk(srw, preset("srw", "continuous", 1))

    def test_continuous_rate_must_be_positive(self, srw):
        with pytest.raises(ValueError):
            WalkSpec(srw.step, "continuous", 0)

    @given(dists, dists)
    def test_weights_and_mean(self, a, b):
        a, b = symmetrize(a), symmetrize(b)
        z = difference_walk(WalkSpec.discrete(a), WalkSpec.discrete(b))
        assert abs(float(sum(z.step.weights)) - 1) <= 1e-12
        assert z.step.mean() == (0, 0)
        cz = difference_walk(WalkSpec.continuous(a, 2), WalkSpec.continuous(b, F(1, 3)))
        assert cz.rate == F(7, 3) and sum(cz.step.weights) == 1


class TestSublattice:
    def test_simple_walk_unchanged(self, srw):
        lmap, image = sublattice_reduce(srw.step)
        assert lmap.is_identity() and image == srw.step

    def test_diagonal_walk(self):
        lmap, image = sublattice_reduce(preset("diag").step)
        assert lmap.columns == ((1, 1), (0, 2))
        # the image is a unimodular copy of the simple walk
        assert is_irreducible(image)
        assert len(image) == 4 and set(image.weights) == {F(1, 4)}
        assert covariance(image).det == F(1, 4)

    def test_pair_difference_walk(self, srw):
        z = difference_walk(srw, srw)
        lmap, image = sublattice_reduce(z.step)
        assert lmap.columns == ((1, 1), (0, 2))
        assert covariance(image).det == F(1, 4)
        assert et_constant(z) == pytest.approx(math.pi)

    def test_rank_deficient(self):
        with pytest.raises(RankDeficient):
            sublattice_reduce(dist_of({(1, 0): F(1, 2), (-1, 0): F(1, 2)}))

    def test_hermite_convention(self):
        (a, zero), (b, c) = hermite_basis([(2, 0), (0, 3), (1, 1)])
        assert zero == 0 and a > 0 and c > 0 and 0 <= b < c
        assert abs(a * c) == 1

    @given(dists)
    def test_reduction_properties(self, d):
        try:
            lmap, image = sublattice_reduce(d)
        except RankDeficient:
            return
        assert abs(lmap.det) >= 1
        for s in d.support:
            if s != (0, 0):
                w = lmap.to_image(s)
                assert lmap.from_image(w) == s
        again, image2 = sublattice_reduce(image)
        assert again.is_identity() and image2 == image
        assert is_irreducible(image)

    def test_lattice_map_rejects_outside(self):
        with pytest.raises(ValueError):
            LatticeMap(((1, 0), (1, 2))).to_image((1, 0))


class TestEtConstant:
    def test_continuous_simple_walk(self):
        assert et_constant(preset("srw", "continuous", 1)) == pytest.approx(math.pi)

    def test_two_continuous_walks(self):
        c = preset("srw", "continuous", 1)
        assert et_constant(difference_walk(c, c)) == pytest.approx(2 * math.pi)

    def test_degenerate(self):
        with pytest.raises(DegenerateCovariance):
            et_constant(WalkSpec.discrete(dist_of({(1, 0): F(1, 2), (-1, 0): F(1, 2)})))
        with pytest.raises(DegenerateCovariance):
            et_constant(preset("origin"))

    @given(dists, st.randoms())
    def test_relabeling_and_double_reduction(self, d, rnd):
        d = symmetrize(d)
        try:
            c = et_constant(WalkSpec.discrete(d))
        except DegenerateCovariance:
            return
        items = list(d.items())
        rnd.shuffle(items)
        shuffled = StepDistribution(tuple(s for s, _ in items), tuple(w for _, w in items))
        assert et_constant(WalkSpec.discrete(shuffled)) == c
        _, image = sublattice_reduce(d)
        assert et_constant(WalkSpec.discrete(image)) == pytest.approx(c, rel=1e-12)


def test_period():
    assert period(preset("srw").step) == 2
    assert period(preset("lazy-srw").step) == 1
    assert period(preset("diag").step) == 2


class TestLoading:
    def test_presets(self):
        lazy = preset("lazy-srw")
        assert dict(lazy.step.items())[(0, 0)] == F(1, 2)
        assert dict(lazy.step.items())[(1, 0)] == F(1, 8)

    def test_json_document(self):
        doc = {"support": [[1, 0, "1/2"], [-1, 0, "1/4"], [-1, 0, 0.25]], "kind": {"continuous": 3}}
        w = load_walk(json.dumps(doc))
        assert w.kind == "continuous" and w.rate == 3
        assert not w.step.exact

    def test_round_trip(self, lazy):
        w = WalkSpec.continuous(lazy.step, F(3, 2))
        assert load_walk(json.loads(json.dumps(w.to_doc()))) == w

    def test_unknown_preset(self):
        with pytest.raises(KeyError):
            load_walk("nope")
