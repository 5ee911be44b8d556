import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from balmatch.basis import BasisSpec, expand
from balmatch.data import Dataset
from balmatch.estimator import (ATT_CAVEAT, ate_matched, ate_weighted, att_matched, att_weighted,
                                estimate_ate, estimate_att, normal_ci, oracle_efficiency_bound,
                                variance_plugin)
from balmatch.simlab import DGPSpec, dgp_a, dgp_b, dgp_sample
from balmatch.solver import BalanceSpec, Direction, MatchSolution, solve_both_directions
from balmatch.weights import implied_weights
from helpers import identical_arms, tiny_instance

T2C, C2T = Direction.TREATED_TO_CONTROL, Direction.CONTROL_TO_TREATED


def _solve(ds, delta=0.01, basis="raw"):
    bm = expand(ds, BasisSpec.parse(basis))
    spec = BalanceSpec.uniform(delta, bm.K)
    return solve_both_directions(bm, ds.z, spec), bm


def test_identical_arms_hand_value():
    ds = identical_arms()
    sols, bm = _solve(ds)
    assert ate_matched(ds, sols) == 2.0
    assert ate_weighted(ds, implied_weights(sols, ds)) == 2.0
    assert att_matched(ds, sols[0]) == 2.0


def test_null_effect_twins():
    ds = Dataset.from_arrays([1, 1, 0, 0], [5.0, -2.0, 5.0, -2.0], [[0.0], [1.0], [0.0], [1.0]])
    sols, _ = _solve(ds, basis="raw")
    sols1 = solve_both_directions(expand(ds, BasisSpec("raw")), ds.z, BalanceSpec.uniform(0.01, 1),
                                  m_policy="fixed:1")
    assert ate_matched(ds, sols1) == 0.0
    assert att_matched(ds, sols1[0]) == 0.0


def test_two_units():
    ds = Dataset.from_arrays([1, 0], [4.0, 1.5], [[0.0], [0.0]])
    sols, _ = _solve(ds)
    assert ate_matched(ds, sols) == 2.5
    assert att_matched(ds, sols[0]) == 2.5


def test_uniform_weights_identical_arms_equal_mean_difference():
    ds = Dataset.from_arrays([1, 1, 0, 0], [1.0, 2.0, 0.5, 0.0], [[0.0], [1.0], [0.0], [1.0]])
    sols, _ = _solve(ds)
    w = implied_weights(sols, ds)
    diff = ds.y[ds.z == 1].mean() - ds.y[ds.z == 0].mean()
    assert ate_weighted(ds, w) == pytest.approx(diff, abs=1e-12)
    assert att_weighted(ds, implied_weights(sols[0], ds)) == pytest.approx(diff, abs=1e-12)


def test_estimate_result_contract():
    ds = dgp_sample(dgp_b(), 300, 5)
    bm = expand(ds, BasisSpec("raw"))
    sols = solve_both_directions(bm, ds.z, BalanceSpec.schedule(bm))
    res = estimate_ate(ds, sols, bm)
    lo, hi = res.ci
    assert lo < res.point < hi
    assert hi - lo == pytest.approx(2 * 1.959963984540054 * math.sqrt(res.variance / ds.n))
    att = estimate_att(ds, sols[0]).to_dict()
    assert "variance" not in att and att["diagnostics"]["caveat"] == ATT_CAVEAT


def test_constant_outcomes_zero_variance():
    ds = dgp_sample(dgp_b(), 200, 1).with_outcomes(np.full(200, 3.0))
    bm = expand(ds, BasisSpec("raw"))
    sols = solve_both_directions(bm, ds.z, BalanceSpec.schedule(bm))
    assert abs(variance_plugin(ds, sols, bm)) < 1e-8


def test_variance_scales_with_square():
    ds = dgp_sample(dgp_a(), 300, 2)
    bm = expand(ds, BasisSpec("polynomial", degree=2))
    sols = solve_both_directions(bm, ds.z, BalanceSpec.schedule(bm))
    v1 = variance_plugin(ds, sols, bm)
    v2 = variance_plugin(ds.with_outcomes(2 * ds.y), sols, bm)
    assert v2 == pytest.approx(4 * v1, rel=1e-8)


def test_normal_ci_width():
    lo, hi = normal_ci(1.0, 4.0, 100, 0.95)
    assert hi - lo == pytest.approx(2 * 1.959963984540054 * 0.2)


def _const_dgp(pi):
    return DGPSpec("const", 1, propensity=lambda x: np.full(len(x), pi),
                   mu0=lambda x: x[:, 0], mu1=lambda x: x[:, 0] + 1.0, sigma=1.0, ate=1.0)


@pytest.mark.parametrize("pi, expected", [(0.5, 4.0), (0.25, 16 / 3)])
def test_efficiency_bound_closed_forms(pi, expected):
    val, se = oracle_efficiency_bound(_const_dgp(pi), draws=1000, seed=0)
    assert val == pytest.approx(expected, abs=1e-12)
    assert se == pytest.approx(0.0, abs=1e-12)


def test_efficiency_bound_dgp_a_stable():
    a, sa = oracle_efficiency_bound(dgp_a(), draws=100_000, seed=1)
    b, sb = oracle_efficiency_bound(dgp_a(), draws=100_000, seed=2)
    assert 0 < a < np.inf
    assert abs(a - b) <= 3 * math.hypot(sa, sb)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-5, 5))
def test_identity_and_translation(seed, shift):
    ds, bm, spec = tiny_instance(np.random.default_rng(seed))
    sols = solve_both_directions(bm, ds.z, spec)
    if sols is None:
        return
    mu = ate_matched(ds, sols)
    assert abs(mu - ate_weighted(ds, implied_weights(sols, ds))) <= 1e-10
    assert abs(ate_matched(ds.with_outcomes(ds.y + shift), sols) - mu) <= 1e-10
    shifted = ds.with_outcomes(ds.y + shift * ds.z)
    assert abs(ate_matched(shifted, sols) - mu - shift) <= 1e-10
