import math

import mpmath

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from integrative_eb.kernel import NoiseSpec
from integrative_eb.oracle import (
    MeanSet,
    ObservationSet,
    oracle_correlated,
    oracle_integrative,
    oracle_regularized,
    oracle_univariate,
)


def direct_oracle(x1, x2, th1, th2, s1=1.0, s2=1.0, r=0.0, rho=0.0):
    """Plain loops over the true mean pairs in 50-digit arithmetic, no log-space tricks."""
    mp = mpmath.mp
    mp.dps = 50
    s1, s2, r, rho = mp.mpf(s1), mp.mpf(s2), mp.mpf(r), mp.mpf(rho)
    out = []
    for a, b in zip(x1, x2):
        a, b = mp.mpf(a), mp.mpf(b)
        num = den = mp.mpf(0)
        for u, v in zip(th1, th2):
            z1, z2 = (a - u) / s1, (b - v) / s2
            q = (z1 * z1 - 2 * r * z1 * z2 + z2 * z2) / (1 - r * r)
            p = mp.exp(-q / 2) / (2 * mp.pi * s1 * s2 * mp.sqrt(1 - r * r))
            num += (u - a) * p
            den += p
        out.append(float(a + num / (rho + den)))
    return np.array(out)


def make_instance(n, seed):
    rng = np.random.default_rng(seed)
    spread = rng.choice([0.5, 3.0, 6.0])
    x1, x2, th1, th2 = (rng.uniform(-spread, spread, n) for _ in range(4))
    if rng.random() < 0.5:
        th1 = np.round(th1)  # ties among the means
    return x1, x2, th1, th2, rng.uniform(0.3, 3), rng.uniform(0.3, 3)


def instances(max_n=8):
    return st.builds(make_instance, st.integers(1, max_n), st.integers(0, 2**63))


def in_hull(values, points, tol=1e-9):
    lo, hi = points.min(), points.max()
    span = tol * (1 + abs(lo) + abs(hi))
    return bool(np.all(values >= lo - span) and np.all(values <= hi + span))


class TestContainers:
    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            MeanSet([0.0, 1.0], [0.0])
        with pytest.raises(ValueError):
            ObservationSet([0.0], [0.0, 1.0])

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            ObservationSet([math.nan], [0.0])

    def test_pair_length_mismatch(self):
        obs = ObservationSet([0.0, 1.0], [0.0, 1.0])
        with pytest.raises(ValueError):
            oracle_integrative(obs, MeanSet([0.0], [0.0]))


class TestOracleIntegrative:
    def test_constant_means(self, rng):
        obs = ObservationSet(rng.normal(size=6), rng.normal(size=6))
        est = oracle_integrative(obs, MeanSet(np.full(6, 2.5), rng.normal(size=6)))
        np.testing.assert_allclose(est, 2.5, rtol=0, atol=1e-14)

    def test_single_mean(self):
        est = oracle_integrative(ObservationSet([3.0], [-1.0]), MeanSet([0.7], [4.0]))
        assert est[0] == pytest.approx(0.7, abs=1e-15)

    def test_symmetric_pair(self):
        obs = ObservationSet([0.0, 0.0], [0.0, 0.0])
        est = oracle_integrative(obs, MeanSet([1.7, -1.7], [0.0, 0.0]))
        np.testing.assert_allclose(est, 0.0, atol=1e-15)

    def test_rejects_correlated(self):
        obs = ObservationSet([0.0], [0.0], NoiseSpec(rho_corr=0.5))
        with pytest.raises(ValueError):
            oracle_integrative(obs, MeanSet([0.0], [0.0]))

    def test_far_observation_no_underflow(self):
        # every density is exp(-~5e5); the max-shift keeps the ratio exact
        obs = ObservationSet([1000.0, 1000.0], [0.0, 0.0])
        est = oracle_integrative(obs, MeanSet([0.0, 1.0], [0.0, 0.0]))
        assert est[0] == pytest.approx(1.0)

    @given(instances())
    def test_matches_direct_evaluation(self, inst):
        x1, x2, th1, th2, s1, s2 = inst
        obs = ObservationSet(x1, x2, NoiseSpec(s1, s2))
        expected = direct_oracle(x1, x2, th1, th2, s1, s2)
        got = oracle_integrative(obs, MeanSet(th1, th2))
        np.testing.assert_allclose(got, expected, rtol=1e-9, atol=1e-9)




class TestOracleRegularized:
    def test_zero_rho_matches_integrative(self, rng):
        obs = ObservationSet(rng.normal(size=20), rng.normal(size=20))
        means = MeanSet(rng.normal(size=20), rng.normal(size=20))
        np.testing.assert_allclose(oracle_regularized(obs, means, 0.0),
                                   oracle_integrative(obs, means), rtol=1e-12, atol=1e-13)

    def test_huge_rho_returns_observation(self):
        obs = ObservationSet([0.8], [-0.3])
        est = oracle_regularized(obs, MeanSet([2.0], [1.0]), 1e12)
        assert abs(est[0] - 0.8) <= 1e-6

    def test_single_point(self):
        est = oracle_regularized(ObservationSet([1.0], [2.0]), MeanSet([-0.5], [0.5]), 0.0)
        assert est[0] == pytest.approx(-0.5, abs=1e-14)

    def test_negative_rho(self):
        with pytest.raises(ValueError):
            oracle_regularized(ObservationSet([1.0], [2.0]), MeanSet([0.0], [0.0]), -1.0)

    @given(instances(), st.floats(0, 5))
    def test_matches_direct_evaluation(self, inst, rho):
        x1, x2, th1, th2, s1, s2 = inst
        obs = ObservationSet(x1, x2, NoiseSpec(s1, s2))
        expected = direct_oracle(x1, x2, th1, th2, s1, s2, rho=rho)
        got = oracle_regularized(obs, MeanSet(th1, th2), rho)
        np.testing.assert_allclose(got, expected, rtol=1e-9, atol=1e-9)



class TestOracleUnivariate:
    def test_two_point_midpoint(self):
        theta = np.array([0.0, 4.0])
        # oracle for the expected value: equal weights phi(2)
        w = math.exp(-0.5 * 4) / math.sqrt(2 * math.pi)
        expected = (0.0 * w + 4.0 * w) / (2 * w)
        assert oracle_univariate([2.0, 2.0], theta, 1.0)[0] == pytest.approx(expected, abs=1e-15)
        assert expected == 2.0

    def test_symmetric(self):
        assert oracle_univariate([0.0, 0.0], [3.0, -3.0], 1.0)[0] == pytest.approx(0.0, abs=1e-15)

    def test_constant(self):
        np.testing.assert_allclose(oracle_univariate([1.0, -9.0, 4.0], [0.3] * 3, 2.0), 0.3)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            oracle_univariate([1.0, 2.0], [0.0], 1.0)




class TestOracleCorrelated:
    def test_zero_correlation_matches_integrative(self, rng):
        obs = ObservationSet(rng.normal(size=15), rng.normal(size=15), NoiseSpec(1.2, 0.8))
        means = MeanSet(rng.normal(size=15), rng.normal(size=15))
        np.testing.assert_allclose(oracle_correlated(obs, means), oracle_integrative(obs, means),
                                   rtol=1e-12, atol=1e-13)

    def test_constant_means_any_correlation(self):
        obs = ObservationSet([1.0, -2.0], [0.5, 3.0], NoiseSpec(rho_corr=-0.8))
        np.testing.assert_allclose(oracle_correlated(obs, MeanSet([1.5, 1.5], [0.0, 2.0])), 1.5)

    def test_centroid_gives_midpoint(self):
        obs = ObservationSet([0.0, 0.0], [0.0, 0.0], NoiseSpec(rho_corr=0.9))
        est = oracle_correlated(obs, MeanSet([-1.0, 1.0], [-2.0, 2.0]))
        np.testing.assert_allclose(est, 0.0, atol=1e-14)

    @given(instances(), st.floats(-0.95, 0.95))
    def test_matches_direct_evaluation(self, inst, r):
        x1, x2, th1, th2, s1, s2 = inst
        obs = ObservationSet(x1, x2, NoiseSpec(s1, s2, r))
        expected = direct_oracle(x1, x2, th1, th2, s1, s2, r)
        np.testing.assert_allclose(oracle_correlated(obs, MeanSet(th1, th2)), expected,
                                   rtol=1e-8, atol=1e-8)


def _run(kind, x1, x2, th1, th2, s1, s2, rho, r):
    if kind == "univariate":
        return oracle_univariate(x1, th1, s1)
    obs = ObservationSet(x1, x2, NoiseSpec(s1, s2, r if kind == "correlated" else 0.0))
    means = MeanSet(th1, th2)
    if kind == "integrative":
        return oracle_integrative(obs, means)
    if kind == "regularized":
        return oracle_regularized(obs, means, rho)
    return oracle_correlated(obs, means)


def _max_gap(a, b):
    return float(np.max(np.abs(a - b)))


@pytest.mark.invariant
@pytest.mark.parametrize("kind", ["integrative", "regularized", "univariate", "correlated"])
@given(n=st.integers(1, 8), seed=st.integers(0, 2**63))
def test_oracle_invariants(kind, n, seed):
    x1, x2, th1, th2, s1, s2 = make_instance(n, seed)
    rng = np.random.default_rng([seed, 1])
    rho = rng.choice([0.0, rng.uniform(0, 5)])
    r = rng.uniform(-0.95, 0.95)
    c = rng.uniform(-30, 30)
    base = _run(kind, x1, x2, th1, th2, s1, s2, rho, r)

    # convex hull of the primary means (with the observation itself once rho > 0)
    if kind == "regularized" and rho > 0:
        for i in range(n):
            assert in_hull(base[i:i + 1], np.append(th1, x1[i]))
    else:
        assert in_hull(base, th1)

    # location equivariance in the primary coordinate
    moved = _run(kind, x1 + c, x2, th1 + c, th2, s1, s2, rho, r)
    assert _max_gap(moved, base + c) <= 1e-9 * (1 + abs(c))

    # joint permutation permutes; permuting the means alone changes nothing
    perm = rng.permutation(n)
    joint = _run(kind, x1[perm], x2[perm], th1[perm], th2[perm], s1, s2, rho, r)
    assert _max_gap(joint, base[perm]) <= 1e-12 * (1 + np.max(np.abs(base)))
    support_only = _run(kind, x1, x2, th1[perm], th2[perm], s1, s2, rho, r)
    assert _max_gap(support_only, base) <= 1e-12 * (1 + np.max(np.abs(base)))
