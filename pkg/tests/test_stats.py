import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldlab.errors import InsufficientSampleError, InvalidConfigError
from fieldlab.stats import (
    dagostino_pearson,
    descriptive,
    kl_divergence,
    kolmogorov_sf,
    ks_two_sample,
    mann_whitney_u,
    rankdata_mid,
)

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)
small_sample = st.lists(finite, min_size=1, max_size=8)


def oracle_u(a, b):
    """Independent midrank U for sample a, written as the naive pair count."""
    u = 0.0
    for x in a:
        for y in b:
            if x > y:
                u += 1.0
            elif x == y:
                u += 0.5
    return u


def oracle_exact_p(a, b, alternative):
    """Brute-force permutation tail probability over all group assignments."""
    pooled = list(a) + list(b)
    n1 = len(a)
    u_obs = oracle_u(a, b)
    ge = le = total = 0
    for idx in combinations(range(len(pooled)), n1):
        grp = [pooled[i] for i in idx]
        rest = [pooled[i] for i in range(len(pooled)) if i not in set(idx)]
        u = oracle_u(grp, rest)
        total += 1
        if u >= u_obs - 1e-9:
            ge += 1
        if u <= u_obs + 1e-9:
            le += 1
    if alternative == "greater":
        return ge / total
    if alternative == "less":
        return le / total
    return min(1.0, 2 * min(ge, le) / total)


def oracle_ks_d(a, b):
    """Brute-force sup over the pooled grid of ECDF differences."""
    best = 0.0
    for t in list(a) + list(b):
        fa = sum(1 for x in a if x <= t) / len(a)
        fb = sum(1 for y in b if y <= t) / len(b)
        best = max(best, abs(fa - fb))
    return best


class TestMannWhitney:
    def test_identical_samples_u_is_half_product(self):
        res = mann_whitney_u([1, 2, 3], [1, 2, 3])
        assert res.statistic == pytest.approx(4.5)
        assert res.method == "exact"

    def test_separated_samples_exact_one_tailed(self):
        res = mann_whitney_u([1, 2, 3], [4, 5, 6], alternative="less")
        assert res.statistic == 0.0
        assert res.p_value == pytest.approx(1 / math.comb(6, 3))

    @given(a=small_sample, b=small_sample)
    @settings(max_examples=60)
    def test_u_identity(self, a, b):
        u_ab = mann_whitney_u(a, b).statistic
        u_ba = mann_whitney_u(b, a).statistic
        assert u_ab + u_ba == pytest.approx(len(a) * len(b))

    @given(a=small_sample, b=small_sample)
    @settings(max_examples=40)
    def test_matches_pair_count_oracle(self, a, b):
        assert mann_whitney_u(a, b).statistic == pytest.approx(oracle_u(a, b))

    @given(
        a=st.lists(st.integers(min_value=0, max_value=5), min_size=2, max_size=6),
        b=st.lists(st.integers(min_value=0, max_value=5), min_size=2, max_size=6),
        alt=st.sampled_from(["two-sided", "greater", "less"]),
    )
    @settings(max_examples=30)
    def test_exact_p_matches_enumeration_oracle(self, a, b, alt):
        res = mann_whitney_u(a, b, alternative=alt)
        assert res.method == "exact"
        assert res.p_value == pytest.approx(oracle_exact_p(a, b, alt), abs=1e-12)

    @given(data=st.lists(st.integers(min_value=-100, max_value=100), min_size=4, max_size=12))
    @settings(max_examples=40)
    def test_invariance_under_increasing_transform(self, data):
        # integer values keep the transform exactly injective in floats
        half = len(data) // 2
        a, b = data[:half], data[half:]
        res = mann_whitney_u(a, b)
        res_t = mann_whitney_u([math.exp(x / 50.0) for x in a], [math.exp(x / 50.0) for x in b])
        assert res.statistic == pytest.approx(res_t.statistic)
        assert res.p_value == pytest.approx(res_t.p_value)

    def test_normal_vs_exact_agreement_at_boundary(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            a = list(rng.normal(size=8))
            b = list(rng.normal(0.5, size=8))
            exact = mann_whitney_u(a, b, alternative="greater").p_value
            # rerun through the normal path by inflating one sample size past
            # the cutoff with an equal tail of matched pairs is fiddly;
            # compare directly against the approximation formula instead
            pooled = np.array(a + b)
            from fieldlab.stats import _normal_sf, _u_statistic

            u = _u_statistic(rankdata_mid(pooled), 8)
            mu = 64 / 2
            var = 8 * 8 / 12 * (17)
            approx = _normal_sf((u - mu - 0.5) / math.sqrt(var))
            assert abs(exact - approx) < 0.03

    def test_rejects_empty_and_bad_alternative(self):
        with pytest.raises(InvalidConfigError):
            mann_whitney_u([], [1.0])
        with pytest.raises(InvalidConfigError):
            mann_whitney_u([1.0], [1.0], alternative="bigger")


class TestKolmogorovSmirnov:
    def test_identical_samples_d_zero(self):
        res = ks_two_sample([1, 2, 3, 4], [1, 2, 3, 4])
        assert res.statistic == 0.0
        assert res.p_value == pytest.approx(1.0, abs=1e-9)

    def test_fully_separated_d_one(self):
        res = ks_two_sample([1, 2], [10, 11])
        assert res.statistic == 1.0

    def test_half_overlap_example(self):
        res = ks_two_sample([1, 2, 3, 4], [3, 4, 5, 6])
        assert res.statistic == pytest.approx(0.5)

    @given(a=st.lists(finite, min_size=1, max_size=10), b=st.lists(finite, min_size=1, max_size=10))
    @settings(max_examples=60)
    def test_d_matches_sweep_oracle_and_bounds(self, a, b):
        res = ks_two_sample(a, b)
        assert res.statistic == pytest.approx(oracle_ks_d(a, b), abs=1e-12)
        assert 0.0 <= res.statistic <= 1.0

    @given(data=st.lists(st.integers(min_value=-100, max_value=100), min_size=4, max_size=16))
    @settings(max_examples=40)
    def test_d_invariant_under_increasing_transform(self, data):
        half = len(data) // 2
        a, b = data[:half], data[half:]
        d1 = ks_two_sample(a, b).statistic
        d2 = ks_two_sample([math.exp(x / 50.0) for x in a], [math.exp(x / 50.0) for x in b]).statistic
        assert d1 == pytest.approx(d2)

    def test_reference_tuple_shape(self):
        # n1 = n2 = 50, D = 0.16 sits in the clearly-not-significant range
        rng = np.random.default_rng(0)
        a = rng.normal(size=50)
        b = np.concatenate([a[:42] + 0.01, rng.normal(size=8)])
        res = ks_two_sample(list(a), list(b))
        assert res.n1 == res.n2 == 50
        assert res.p_value > 0.05

    def test_kolmogorov_sf_reference_points(self):
        # classical table values
        assert kolmogorov_sf(0.8232) == pytest.approx(0.5074, abs=5e-3)
        assert kolmogorov_sf(1.3581) == pytest.approx(0.05, abs=2e-3)
        assert kolmogorov_sf(0.0) == 1.0
        assert kolmogorov_sf(5.0) < 1e-10


class TestKL:
    def test_identical_is_zero(self):
        assert kl_divergence([0.25, 0.25, 0.5], [0.25, 0.25, 0.5]) == pytest.approx(0.0, abs=1e-12)

    def test_hand_computed_ln2(self):
        assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-6)

    def test_mismatched_support_rejected(self):
        with pytest.raises(InvalidConfigError):
            kl_divergence([1.0], [0.5, 0.5])
        with pytest.raises(InvalidConfigError):
            kl_divergence([0.7, 0.7], [0.5, 0.5])

    def test_nonnegative_on_random_pairs(self):
        rng = np.random.default_rng(1)
        raw = rng.random((100_000, 2, 4))
        for p, q in zip(raw[:, 0], raw[:, 1]):
            pass  # bulk-vectorized check below is the real assertion
        p = raw[:, 0] / raw[:, 0].sum(axis=1, keepdims=True)
        q = raw[:, 1] / raw[:, 1].sum(axis=1, keepdims=True)
        eps = 1e-9
        ps = (p + eps) / (p + eps).sum(axis=1, keepdims=True)
        qs = (q + eps) / (q + eps).sum(axis=1, keepdims=True)
        kl = (ps * np.log(ps / qs)).sum(axis=1)
        assert (kl >= -1e-15).all()
        # spot-check a few through the public function
        for i in range(0, 100_000, 9973):
            assert kl_divergence(p[i], q[i]) == pytest.approx(kl[i], abs=1e-12)

    def test_self_divergence_tiny(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            p = rng.random(6)
            p /= p.sum()
            assert abs(kl_divergence(p, p)) < 1e-12


class TestDagostinoPearson:
    def test_small_sample_rejected(self):
        with pytest.raises(InsufficientSampleError):
            dagostino_pearson(list(range(10)))

    def test_null_calibration(self):
        rng = np.random.default_rng(3)
        rejections = sum(
            dagostino_pearson(rng.normal(size=1000)).p_value < 0.05 for _ in range(1000)
        )
        assert abs(rejections / 1000 - 0.05) < 0.02

    def test_bimodal_mixture_rejected(self):
        rng = np.random.default_rng(4)
        x = np.concatenate([rng.normal(-4, 1, 500), rng.normal(4, 1, 500)])
        assert dagostino_pearson(x).p_value < 0.001

    def test_heavy_skew_rejected(self):
        rng = np.random.default_rng(5)
        assert dagostino_pearson(rng.exponential(size=500)).p_value < 0.001


class TestDescriptive:
    def test_constant_sample(self):
        d = descriptive([2.5, 2.5, 2.5])
        assert (d.mean, d.median, d.sd, d.min, d.max) == (2.5, 2.5, 0.0, 2.5, 2.5)

    def test_hand_computed(self):
        d = descriptive([0, 1, 2, 3])
        assert d.mean == 1.5
        assert d.median == 1.5
        assert d.sd == pytest.approx(1.2910, abs=1e-4)
        assert (d.min, d.max) == (0.0, 3.0)

    def test_empty_rejected(self):
        with pytest.raises(InvalidConfigError):
            descriptive([])


class TestNullCalibration:
    """Two-sided tests reject a true null at about the nominal rate."""

    def test_mwu_null_rejection_rate(self):
        rng = np.random.default_rng(6)
        rej = 0
        for _ in range(1000):
            a = rng.normal(size=30)
            b = rng.normal(size=30)
            rej += mann_whitney_u(list(a), list(b)).p_value < 0.05
        assert abs(rej / 1000 - 0.05) < 0.02

    def test_ks_null_rejection_rate(self):
        rng = np.random.default_rng(7)
        rej = 0
        for _ in range(1000):
            a = rng.normal(size=60)
            b = rng.normal(size=60)
            rej += ks_two_sample(list(a), list(b)).p_value < 0.05
        assert abs(rej / 1000 - 0.05) < 0.02
