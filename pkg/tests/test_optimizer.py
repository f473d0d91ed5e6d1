import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from integrative_eb import optimizer
from integrative_eb.kernel import NoiseSpec
from integrative_eb.optimizer import (
    FitConfig,
    _search_order,
    candidate_grid,
    fit_integrative,
    fit_univariate,
    grid_offsets,
)
from integrative_eb.oracle import ObservationSet
from integrative_eb.risk import RuleParams, SupportVector, apply_rule, apply_rule_1d, sure, sure_1d

BACKENDS = sorted(optimizer.BACKENDS)


def make_problem(n, seed):
    rng = np.random.default_rng(seed)
    noise = NoiseSpec(rng.uniform(0.3, 2.0), rng.uniform(0.3, 2.0))
    config = FitConfig(
        rho=rng.choice([0.0, 0.0, 0.01]),
        box_halfwidth_m=rng.choice([1.0, 3.0, 5.0]),
        candidates_k=int(rng.integers(2, 8)),
        tol_epsilon=1e-5,
        max_sweeps=int(rng.integers(1, 31)),
    )
    return ObservationSet(rng.uniform(-4, 4, n), rng.uniform(-4, 4, n), noise), config


def exact_sure(result, obs, config):
    return sure(RuleParams(result.support, config.rho), obs)


class TestConfig:
    @pytest.mark.parametrize("kwargs", [
        {"rho": -1.0}, {"box_halfwidth_m": 0.0}, {"candidates_k": 1}, {"candidates_k": 2.5},
        {"tol_epsilon": 0.0}, {"max_sweeps": 0}, {"underflow_fallback_rho": 0.0},
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            FitConfig(**kwargs)


class TestCandidateGrid:
    def test_endpoints_only(self):
        np.testing.assert_array_equal(candidate_grid(0.0, 1.0, FitConfig(candidates_k=2)), [-5.0, 5.0])

    def test_unit_spacing(self):
        np.testing.assert_allclose(candidate_grid(0.0, 1.0, FitConfig(candidates_k=11)), np.arange(-5.0, 6.0))

    def test_shifted_and_scaled(self):
        np.testing.assert_allclose(candidate_grid(2.0, 0.5, FitConfig(candidates_k=2)), [-0.5, 4.5])

    def test_nonpositive_sigma(self):
        with pytest.raises(ValueError):
            candidate_grid(0.0, 0.0, FitConfig())

    def test_search_order_prefers_centre_then_smaller(self):
        assert list(_search_order(5)) == [2, 1, 3, 0, 4]
        assert list(_search_order(4)) == [1, 2, 0, 3]

    @pytest.mark.invariant
    @given(st.floats(-100, 100), st.floats(0.01, 10), st.floats(0.1, 10), st.integers(2, 60))
    def test_grid_inside_box(self, x, sigma, m, k):
        grid = candidate_grid(x, sigma, FitConfig(box_halfwidth_m=m, candidates_k=k))
        assert grid.size == k
        tol = 1e-12 * (abs(x) + m * sigma)
        assert grid.min() >= x - m * sigma - tol and grid.max() <= x + m * sigma + tol
        assert grid[0] == pytest.approx(x - m * sigma) and grid[-1] == pytest.approx(x + m * sigma)
        assert np.all(np.diff(grid) > 0)


@pytest.mark.parametrize("backend", BACKENDS)
class TestFitExamples:
    def test_single_observation(self, backend):
        res = fit_integrative(ObservationSet([1.3], [-0.4]), backend=backend)
        assert res.support.t1[0] == 1.3 and res.support.t2[0] == -0.4
        assert res.estimates[0] == pytest.approx(1.3, abs=1e-15)
        assert res.sure_value == pytest.approx(-1.0)
        res1 = fit_univariate([0.7], 2.0, backend=backend)
        assert res1.support.t1[0] == 0.7 and res1.support.t2 is None
        assert res1.estimates[0] == pytest.approx(0.7, abs=1e-15)

    def test_equal_observations(self, backend):
        res = fit_univariate(np.full(12, 2.25), 1.0, backend=backend)
        np.testing.assert_allclose(res.estimates, 2.25, atol=1e-6)
        res = fit_integrative(ObservationSet(np.full(8, -1.0), np.full(8, 4.0)), backend=backend)
        np.testing.assert_allclose(res.estimates, -1.0, atol=1e-6)

    def test_result_consistent_with_risk_module(self, backend, rng):
        obs = ObservationSet(rng.normal(size=80), rng.normal(size=80) * 2, NoiseSpec(1.0, 1.5))
        config = FitConfig(rho=0.0, candidates_k=9)
        res = fit_integrative(obs, config, backend=backend)
        params = RuleParams(res.support, config.rho)
        assert res.sure_value == pytest.approx(sure(params, obs), rel=1e-10, abs=1e-12)
        np.testing.assert_allclose(res.estimates, apply_rule(params, obs), rtol=1e-11, atol=1e-12)
        assert res.converged and res.sweeps_used == len(res.sure_trace)

    def test_univariate_consistent_with_risk_module(self, backend, rng):
        x = np.concatenate([rng.normal(size=40), 4 + rng.normal(size=20)])
        config = FitConfig(rho=0.05, candidates_k=15)
        res = fit_univariate(x, 0.8, config, backend=backend)
        assert res.sure_value == pytest.approx(sure_1d(res.support.t1, 0.05, x, 0.8), rel=1e-10, abs=1e-12)
        np.testing.assert_allclose(res.estimates, apply_rule_1d(res.support.t1, 0.05, x, 0.8), rtol=1e-11, atol=1e-12)

    def test_separated_clusters(self, backend):
        # remote clusters: other observations contribute nothing to a row, which
        # exercises the exact-recompute path for cancelled accumulators
        x1 = np.array([0.0, 0.1, 50.0, 50.2, 120.0])
        x2 = np.array([0.0, -0.1, 30.0, 30.0, -80.0])
        obs = ObservationSet(x1, x2)
        res = fit_integrative(obs, FitConfig(candidates_k=21), backend=backend)
        assert res.sure_value == pytest.approx(sure(RuleParams(res.support), obs), rel=1e-10, abs=1e-12)
        assert all(b <= a for a, b in zip(res.sure_trace, res.sure_trace[1:]))

    def test_max_sweeps_cap(self, backend, rng):
        obs = ObservationSet(rng.normal(size=50), rng.normal(size=50))
        res = fit_integrative(obs, FitConfig(max_sweeps=1, tol_epsilon=1e-300), backend=backend)
        assert res.sweeps_used == 1 and not res.converged


def test_backends_agree(rng):
    if len(BACKENDS) < 2:
        pytest.skip("compiled extension not built")
    for n in (5, 40, 150):
        obs = ObservationSet(rng.normal(size=n), 2 * rng.normal(size=n) ** 2)
        config = FitConfig(candidates_k=10)
        a = fit_integrative(obs, config, backend="cython")
        b = fit_integrative(obs, config, backend="python")
        np.testing.assert_allclose(a.support.t1, b.support.t1, rtol=0, atol=1e-12)
        np.testing.assert_allclose(a.support.t2, b.support.t2, rtol=0, atol=1e-12)
        np.testing.assert_allclose(a.sure_trace, b.sure_trace, rtol=1e-12)
        assert a.sweeps_used == b.sweeps_used


def test_unknown_backend():
    with pytest.raises(ValueError):
        fit_univariate([1.0, 2.0], 1.0, backend="fortran")


def test_rejects_correlated_noise():
    with pytest.raises(ValueError):
        fit_integrative(ObservationSet([0.0], [0.0], NoiseSpec(rho_corr=0.2)))


def test_local_minimum_in_every_coordinate(rng):
    # after convergence no single coordinate move on the grid lowers the estimate
    obs = ObservationSet(rng.normal(size=6), rng.normal(size=6))
    config = FitConfig(candidates_k=7, tol_epsilon=1e-13, max_sweeps=500)
    res = fit_integrative(obs, config)
    t = [res.support.t1.copy(), res.support.t2.copy()]
    base = sure(RuleParams(SupportVector(*t)), obs)
    xs = [obs.x1, obs.x2]
    sds = [obs.noise.sigma1, obs.noise.sigma2]
    for d, i in itertools.product(range(2), range(6)):
        for c in candidate_grid(xs[d][i], sds[d], config):
            trial = [t[0].copy(), t[1].copy()]
            trial[d][i] = c
            assert sure(RuleParams(SupportVector(*trial)), obs) >= base - 1e-9


def test_offsets_symmetric():
    off = grid_offsets(FitConfig(candidates_k=6, box_halfwidth_m=2.0))
    np.testing.assert_allclose(off, -off[::-1])


def _check_fit(res, support, obs_x, sds, start, config):
    trace = res.sure_trace
    # non-increasing exactly; the start comes from the log-space evaluator, so allow rounding there
    assert trace[0] <= start + 1e-12 * (1 + abs(start))
    assert all(b <= a for a, b in zip(trace, trace[1:]))
    assert res.sure_value == trace[-1]
    # every support coordinate inside its box
    m = config.box_halfwidth_m
    for t, x, s in zip(support, obs_x, sds):
        assert np.all(np.abs(t - x) <= m * s + 1e-12 * (1 + np.abs(x) + m * s))
    # termination and the converged flag
    assert 1 <= res.sweeps_used <= config.max_sweeps and len(trace) == res.sweeps_used
    assert res.converged or res.sweeps_used == config.max_sweeps


@pytest.mark.invariant
@given(st.integers(1, 6), st.integers(0, 2**63))
def test_integrative_fit_invariants(n, seed):
    obs, config = make_problem(n, seed)
    res = fit_integrative(obs, config)
    start = sure(RuleParams(SupportVector(obs.x1, obs.x2), config.rho), obs)
    _check_fit(res, (res.support.t1, res.support.t2), (obs.x1, obs.x2), (obs.noise.sigma1, obs.noise.sigma2), start, config)
    again = fit_integrative(obs, config)
    assert np.array_equal(again.support.t1, res.support.t1) and np.array_equal(again.support.t2, res.support.t2)
    assert np.array_equal(again.estimates, res.estimates) and again.sure_trace == res.sure_trace
    assert again.sweeps_used == res.sweeps_used and again.converged == res.converged


@pytest.mark.invariant
@given(st.integers(1, 6), st.integers(0, 2**63))
def test_univariate_fit_invariants(n, seed):
    obs, config = make_problem(n, seed)
    res = fit_univariate(obs.x1, obs.noise.sigma1, config)
    start = sure_1d(obs.x1, config.rho, obs.x1, obs.noise.sigma1)
    _check_fit(res, (res.support.t1,), (obs.x1,), (obs.noise.sigma1,), start, config)
    again = fit_univariate(obs.x1, obs.noise.sigma1, config)
    assert np.array_equal(again.support.t1, res.support.t1) and again.sure_trace == res.sure_trace
