"""Stochastic feature maps: sampling law, scales, unbiased kernel estimation.

Statistical assertions run on fixed seeds, so verdicts are reproducible;
tolerances are 3-4 standard errors wide where sampling noise is involved.
"""

import math

import numpy as np
import pytest

from kcov.covariance import ExpDotKernel, LinearKernel, PolynomialKernel, kernel_eval
from kcov.errors import DimMismatchError, InvalidBaseError
from kcov.random_features import (
    DegreeGroup,
    RandomFeatureMap,
    apply_map,
    estimate_kernel,
    rademacher_moment_check,
    replicate_seed,
    sample_map,
)


class TestSampleMap:
    def test_linear_degrees_resampled(self):
        # only a_1 > 0, so every feature must land on degree 1; the scale
        # folds in the restricted degree law so the estimator stays unbiased
        fmap = sample_map(LinearKernel(), 4, 64, seed=3)
        assert set(fmap.degrees.tolist()) == {1}
        np.testing.assert_array_equal(fmap.scales, np.ones(64))

    def test_poly_with_offset_support(self):
        fmap = sample_map(PolynomialKernel(2, offset=1.0), 3, 256, seed=5)
        assert set(fmap.degrees.tolist()) <= {0, 2}
        assert {0, 2} == set(fmap.degrees.tolist())  # both strata show up

    def test_expdot_scales_at_base_two(self):
        kern = ExpDotKernel(1.0)
        fmap = sample_map(kern, 3, 128, seed=1)
        expected = np.sqrt(
            [kern.coefficient(int(n)) * 2.0 ** (n + 1) for n in fmap.degrees]
        )
        np.testing.assert_array_equal(fmap.scales, expected)

    def test_signs_are_rademacher(self):
        fmap = sample_map(ExpDotKernel(1.0), 5, 128, seed=2)
        for group in fmap.groups:
            assert set(np.unique(group.signs)) <= {-1.0, 1.0}
            assert group.signs.shape[1:] == (group.degree, 5)

    def test_deterministic(self):
        a = sample_map(ExpDotKernel(1.0), 4, 128, seed=9)
        b = sample_map(ExpDotKernel(1.0), 4, 128, seed=9)
        assert np.array_equal(a.degrees, b.degrees)
        assert np.array_equal(a.scales, b.scales)
        for ga, gb in zip(a.groups, b.groups):
            assert np.array_equal(ga.signs, gb.signs)

    def test_different_seeds_differ(self):
        a = sample_map(ExpDotKernel(1.0), 4, 128, seed=9)
        b = sample_map(ExpDotKernel(1.0), 4, 128, seed=10)
        assert not np.array_equal(a.degrees, b.degrees) or not all(
            np.array_equal(ga.signs, gb.signs) for ga, gb in zip(a.groups, b.groups)
        )

    def test_invalid_base(self):
        with pytest.raises(InvalidBaseError):
            sample_map(LinearKernel(), 3, 8, p=1.0)


class TestApplyMap:
    def test_zero_vector(self):
        fmap = sample_map(LinearKernel(), 4, 32, seed=0)  # all degrees >= 1
        np.testing.assert_array_equal(apply_map(fmap, np.zeros(4)), np.zeros(32))

    def test_single_feature_hand_case(self):
        # one feature, degree 1, all-ones signs, scale s: value is s/sqrt(M)
        s = 2.5
        fmap = RandomFeatureMap(
            kernel=LinearKernel(),
            dim=3,
            feature_count=1,
            base=2.0,
            seed=0,
            degrees=np.array([1]),
            scales=np.array([s]),
            groups=(
                DegreeGroup(degree=1, indices=np.array([0]), signs=np.ones((1, 1, 3))),
            ),
        )
        out = apply_map(fmap, np.array([1.0, 0.0, 0.0]))
        assert out[0] == pytest.approx(s)

    def test_degree_zero_is_constant(self):
        fmap = RandomFeatureMap(
            kernel=PolynomialKernel(1, offset=1.0),
            dim=2,
            feature_count=1,
            base=2.0,
            seed=0,
            degrees=np.array([0]),
            scales=np.array([3.0]),
            groups=(
                DegreeGroup(degree=0, indices=np.array([0]), signs=np.ones((1, 0, 2))),
            ),
        )
        np.testing.assert_array_equal(apply_map(fmap, np.array([9.0, -4.0])), [3.0])

    def test_dim_mismatch(self):
        fmap = sample_map(LinearKernel(), 4, 8, seed=0)
        with pytest.raises(DimMismatchError):
            apply_map(fmap, np.zeros(5))


class TestEstimateKernel:
    def _unit_pair(self, seed, dim=6):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=dim)
        x /= max(1.0, np.linalg.norm(x))
        z = rng.normal(size=dim)
        z /= max(1.0, np.linalg.norm(z))
        return x, z

    def test_linear_unbiased(self):
        x, z = self._unit_pair(11)
        rep = estimate_kernel(LinearKernel(), x, z, 256, 500, seed=21)
        assert rep.target == pytest.approx(float(x @ z))
        assert rep.within_3se

    def test_expdot_unit_vector(self):
        e1 = np.zeros(5)
        e1[0] = 1.0
        rep = estimate_kernel(ExpDotKernel(1.0), e1, e1, 1024, 500, seed=4)
        assert rep.target == pytest.approx(math.e)
        assert rep.within_3se

    def test_poly_with_offset_unbiased(self):
        x, z = self._unit_pair(7, dim=4)
        kern = PolynomialKernel(2, offset=0.5)
        rep = estimate_kernel(kern, x, z, 512, 400, seed=17)
        assert rep.target == pytest.approx(kernel_eval(kern, x, z))
        assert rep.within_3se

    def test_orthogonal_expdot_degree_strata(self):
        # for x orthogonal to z the target is exp(0) = 1; features of
        # degree >= 1 have zero-mean products, so the constant stratum
        # carries the whole expectation
        kern = ExpDotKernel(1.0)
        x = np.array([1.0, 0.0, 0.0, 0.0])
        z = np.array([0.0, 1.0, 0.0, 0.0])
        reps = 300
        zero_stratum = np.empty(reps)
        rest_stratum = np.empty(reps)
        for r in range(reps):
            fmap = sample_map(kern, 4, 512, seed=replicate_seed(99, r))
            prods = apply_map(fmap, x) * apply_map(fmap, z)
            zero = fmap.degrees == 0
            zero_stratum[r] = prods[zero].sum()
            rest_stratum[r] = prods[~zero].sum()
        se_zero = zero_stratum.std(ddof=1) / math.sqrt(reps)
        se_rest = rest_stratum.std(ddof=1) / math.sqrt(reps)
        assert abs(zero_stratum.mean() - 1.0) <= 4.0 * se_zero
        assert abs(rest_stratum.mean()) <= 4.0 * se_rest

    def test_variance_shrinks_with_features(self):
        kern = ExpDotKernel(1.0)
        small, large = [], []
        for k in range(5):
            x, z = self._unit_pair(30 + k, dim=5)
            small.append(
                estimate_kernel(kern, x, z, 64, 60, seed=k).estimate_stderr
            )
            large.append(
                estimate_kernel(kern, x, z, 1024, 60, seed=k).estimate_stderr
            )
        assert np.mean(large) < np.mean(small)

    def test_estimates_deterministic(self):
        x, z = self._unit_pair(2)
        a = estimate_kernel(LinearKernel(), x, z, 64, 50, seed=5)
        b = estimate_kernel(LinearKernel(), x, z, 64, 50, seed=5)
        assert a == b

    def test_replicate_floor(self):
        with pytest.raises(ValueError):
            estimate_kernel(LinearKernel(), [1.0], [1.0], 8, 10)

    def test_report_consistency(self):
        x, z = self._unit_pair(3)
        rep = estimate_kernel(LinearKernel(), x, z, 128, 60, seed=8)
        assert rep.estimate_stderr >= 0.0
        assert rep.within_3se == (
            abs(rep.estimate_mean - rep.target) <= 3.0 * rep.estimate_stderr
        )


class TestRademacherMoments:
    def test_d2_million_samples(self):
        assert rademacher_moment_check(2, 10**6, seed=0) is True

    def test_diagonal_moment_exact(self):
        # +-1 entries square to exactly 1, so E[w_i^2] has no sampling noise
        rng = np.random.default_rng(3)
        w = (rng.integers(0, 2, size=(50_000, 4)) * 2 - 1).astype(np.float64)
        emp = (w.T @ w) / w.shape[0]
        assert (np.diag(emp) == 1.0).all()

    def test_wide_dims_capped_at_8(self):
        assert rademacher_moment_check(40, 10**5, seed=1) is True

    def test_sample_floor(self):
        with pytest.raises(ValueError):
            rademacher_moment_check(3, 100)


def test_replicate_seed_is_64bit_and_spread():
    seeds = {replicate_seed(0, k) for k in range(1000)}
    assert len(seeds) == 1000
    assert all(0 <= s < 2**64 for s in seeds)
    assert replicate_seed(1, 5) != replicate_seed(2, 5)
