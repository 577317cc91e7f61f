import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from decmac.fading import FadingDistribution, FadingGrid, quantize
from decmac.interference import InterferenceDistribution
from decmac.oracles import waterfilling_single_user
from decmac.policy import PowerPolicy, average_power, check_monotone, has_single_threshold
from decmac.solver import (
    CalibrationError,
    SolverConfig,
    am_solve,
    best_response,
    calibrate_lambda,
    kkt_residual,
    sum_rate,
)

ONE = FadingGrid.from_atoms([(1.0, 1.0)])
TWO = FadingGrid.from_atoms([(0.5, 0.5), (1.5, 0.5)])
RAYLEIGH = FadingDistribution.exponential(1.0)
TIGHT = SolverConfig(eps_rate=1e-12, kkt_tol=1e-9)


def test_sum_rate_examples():
    assert sum_rate([PowerPolicy(ONE, [1.0])] * 2) == pytest.approx(math.log(3), rel=1e-15)
    assert sum_rate([PowerPolicy(ONE, [1.0]), PowerPolicy.zero(ONE)]) == pytest.approx(math.log(2))
    # joint states sum to 1, 2, 2, 3 with equal probability
    expected = (math.log(2) + 2 * math.log(3) + math.log(4)) / 4
    assert sum_rate([PowerPolicy.constant(TWO, 1.0)] * 2) == pytest.approx(expected, rel=1e-14)
    with pytest.raises(ValueError):
        sum_rate([])


def test_best_response_alone_is_waterfilling():
    grid = FadingGrid.from_atoms([(0.5, 0.5), (2.0, 0.5)])
    pol = best_response([], 4 / 9, grid)
    np.testing.assert_allclose(pol.powers, [0.25, 1.75], rtol=1e-12)


def test_best_response_against_point_interference():
    # a constant interferer only raises the noise floor to 1 + y
    y = 0.5
    other = PowerPolicy(ONE, [y])
    grid = FadingGrid.from_atoms([(0.5, 0.2), (1.0, 0.3), (3.0, 0.5)])
    lam = 0.4
    pol = best_response([other], lam, grid)
    np.testing.assert_allclose(pol.powers, np.maximum(1 / lam - (1 + y) / grid.gains, 0),
                               rtol=1e-12, atol=1e-14)
    assert pol.powers[0] == 0.0


def test_best_response_two_point_interference():
    Y = InterferenceDistribution.from_atoms([(0.0, 0.5), (2.0, 0.5)])
    pol = best_response([], 0.5, ONE, interference=Y)
    assert pol.powers[0] == pytest.approx(math.sqrt(2) - 1, abs=1e-12)
    assert best_response([], 1.0, ONE, interference=Y).powers[0] == 0.0
    with pytest.raises(ValueError):
        best_response([], 0.0, ONE)


def test_calibrate_examples():
    lam, pol = calibrate_lambda([], ONE, 1.0)
    assert lam == pytest.approx(0.5, rel=1e-10) and pol.powers[0] == pytest.approx(1.0)
    lam, pol = calibrate_lambda([], FadingGrid.from_atoms([(0.5, 0.5), (2.0, 0.5)]), 1.0)
    assert lam == pytest.approx(4 / 9, rel=1e-10)
    np.testing.assert_allclose(pol.powers, [0.25, 1.75], rtol=1e-9)
    lam, pol = calibrate_lambda([], TWO, 0.0)
    assert lam == math.inf and pol.silent and np.all(pol.powers == 0)


def test_calibrate_matches_waterfilling():
    grid = quantize(RAYLEIGH, 200)
    for p in (0.1, 1.0, 10.0, 100.0):
        lam, pol = calibrate_lambda([], grid, p)
        wf, _ = waterfilling_single_user(grid, p)
        assert lam == pytest.approx(wf.lam, rel=1e-9)
        assert np.max(np.abs(pol.powers - wf.powers)) <= 1e-8 * (1 + p)


def test_calibration_error_reports_state():
    cfg = SolverConfig(lambda_mode="paper-step", delta=1e-6, max_lambda_iters=3)
    with pytest.raises(CalibrationError) as info:
        calibrate_lambda([PowerPolicy(ONE, [1.0])], TWO, 5.0, cfg, lam0=0.5)
    err = info.value
    assert err.target == 5.0 and abs(err.achieved - 5.0) > 1e-3


def test_kkt_residual_examples():
    # single user waterfilling is exactly stationary
    grid = quantize(RAYLEIGH, 50)
    wf, _ = waterfilling_single_user(grid, 1.0)
    assert kkt_residual([wf]) <= 1e-10
    # a constant policy is not
    const = PowerPolicy.constant(grid, 1.0)
    assert kkt_residual([const], [wf.lam]) > 0.01
    assert kkt_residual([PowerPolicy.zero(grid)]) == 0.0


def test_deterministic_solve_exact():
    res = am_solve([(FadingDistribution.deterministic(1.0), 1.0)] * 2)
    assert res.converged
    assert res.capacity == pytest.approx(math.log(3), abs=1e-12)
    for pol in res.policies:
        assert pol.powers[0] == pytest.approx(1.0, abs=1e-12)


# frozen from a converged run at eps_rate=1e-12, kkt_tol=1e-9
TWO_STATE_K2 = 1.1801241881347906


def test_two_state_k2_frozen():
    res = am_solve([(TWO, 1.0)] * 2, TIGHT)
    assert res.converged and res.kkt_residual <= 1e-9
    assert res.capacity == pytest.approx(TWO_STATE_K2, abs=1e-9)


def test_solve_validation():
    with pytest.raises(ValueError):
        am_solve([])
    with pytest.raises(ValueError):
        am_solve([(TWO, -1.0)])
    with pytest.raises(ValueError):
        am_solve([(TWO, 1.0)], init="random")
    with pytest.raises(ValueError):
        SolverConfig(lambda_mode="newton")
    with pytest.raises(ValueError):
        SolverConfig(eps_rate=0.0)


def test_zero_budget_user_is_silent():
    res = am_solve([(RAYLEIGH, 1.0), (RAYLEIGH, 0.0)], SolverConfig(n_bins=50))
    assert res.converged
    assert res.lambdas[1] == math.inf and np.all(res.policies[1].powers == 0)
    _, wf = waterfilling_single_user(quantize(RAYLEIGH, 50), 1.0)
    assert res.capacity == pytest.approx(wf, abs=1e-9)


def test_explicit_initialization_accepted():
    grid = quantize(RAYLEIGH, 40)
    init = [np.linspace(0, 2, 40), np.full(40, 1.0)]
    init = [p * (1.0 / (grid.probs @ p)) for p in init]
    res = am_solve([(grid, 1.0)] * 2, TIGHT, init=init)
    ref = am_solve([(grid, 1.0)] * 2, TIGHT)
    assert res.capacity == pytest.approx(ref.capacity, abs=1e-9)


instances = st.tuples(
    st.integers(2, 3),
    st.lists(st.floats(-10, 15), min_size=3, max_size=3),
    st.lists(st.floats(0.5, 2.0), min_size=3, max_size=3),
)


def _problem(K, dbs, means, n_bins=30):
    return [(quantize(FadingDistribution.exponential(m), n_bins), 10 ** (d / 10))
            for m, d in zip(means[:K], dbs[:K])]


@settings(max_examples=15, deadline=None)
@given(instances)
def test_solver_invariants(inst):
    K, dbs, means = inst
    problem = _problem(K, dbs, means)
    res = am_solve(problem, SolverConfig())
    assert res.converged
    traj = np.array(res.rate_trajectory)
    assert np.all(np.diff(traj) >= -1e-9)
    assert res.kkt_residual <= 1e-5
    for pol, (_, p) in zip(res.policies, problem):
        assert abs(average_power(pol) - p) <= 1e-6 * p
        assert check_monotone(pol)[0] and has_single_threshold(pol.powers)


@settings(max_examples=8, deadline=None)
@given(instances, st.permutations(range(3)))
def test_user_order_irrelevant(inst, perm):
    K, dbs, means = inst
    problem = _problem(3, dbs, means)
    a = am_solve(problem, TIGHT).capacity
    b = am_solve([problem[i] for i in perm], TIGHT).capacity
    assert a == pytest.approx(b, abs=1e-8)


@pytest.mark.parametrize("K", [2, 3])
def test_symmetric_users_get_symmetric_policies(K):
    res = am_solve([(RAYLEIGH, 1.0)] * K, TIGHT)
    for pol in res.policies[1:]:
        assert np.max(np.abs(pol.powers - res.policies[0].powers)) <= 1e-6


def test_init_independence_two_state():
    a = am_solve([(TWO, 1.0)] * 2, TIGHT)
    b = am_solve([(TWO, 1.0)] * 2, TIGHT, init="two-level")
    assert a.capacity == pytest.approx(b.capacity, abs=1e-9)


def test_paper_step_mode_agrees():
    ref = am_solve([(RAYLEIGH, 1.0)] * 2, SolverConfig(n_bins=60))
    for delta in (1e-2, 1e-3):
        alt = am_solve([(RAYLEIGH, 1.0)] * 2,
                       SolverConfig(n_bins=60, lambda_mode="paper-step", delta=delta))
        assert alt.converged
        assert alt.capacity == pytest.approx(ref.capacity, abs=1e-6)


def test_warm_start_lambdas():
    cold = am_solve([(RAYLEIGH, 2.0)] * 2, TIGHT)
    warm = am_solve([(RAYLEIGH, 2.0)] * 2, TIGHT, lambdas=[0.3, 0.3])
    assert warm.capacity == pytest.approx(cold.capacity, abs=1e-9)


def test_paper_step_default_eps_dip_is_bounded():
    # budgets met only to eps_power, so a sweep may lose up to sum lam_j eps p_j
    cfg = SolverConfig(lambda_mode="paper-step", delta=1e-3)
    res = am_solve([(RAYLEIGH, 1.0)] * 2, cfg)
    assert res.converged
    bound = sum(res.lambdas) * cfg.eps_power * 1.0
    assert np.min(np.diff(res.rate_trajectory)) >= -bound
