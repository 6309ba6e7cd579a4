import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsportal.ada import (AdaConfig, Exp3pState, FeasibleGrids, exp3p_distribution, exp3p_init, exp3p_update,
                          feasible_sets, run_ada_portal)
from nsportal.env import Environment, ScenarioConfig, build_scenario
from nsportal.errors import RewardOutOfRange
from nsportal.rng import stream


def test_degenerate_single_round():
    g = feasible_sets(1, 1, 1)
    assert (g.M, g.M_W, g.M_tau) == (1, 1, 1)
    assert g.n_arms == 1 and g.arm_values(0) == (1, 1)


def test_hand_evaluated_window_grid():
    g = feasible_sets(1, 1, 1000)
    assert g.M_W == 10 and g.J_W == 2
    assert g.W_grid == (1, 3, 10)
    assert g.M_tau == 100 and g.tau_grid == (1, 3, 10, 31, 100)


@settings(max_examples=200)
@given(st.integers(1, 8), st.integers(1, 10), st.integers(1, 100_000))
def test_grids_monotone_and_clamped(d, H, K):
    g = feasible_sets(d, H, K)
    for grid in (g.W_grid, g.tau_grid):
        assert list(grid) == sorted(grid)
        assert 1 <= grid[0] and grid[-1] <= K
    assert 1 <= g.M <= K


def test_uniform_distribution_cases():
    s = exp3p_init(5, 10)
    assert np.allclose(exp3p_distribution(s), 0.2)
    s = Exp3pState(alpha=1.0, beta=0.0, gamma=1.0, q=np.array([0.0, 3.0, 9.0]))
    assert np.allclose(exp3p_distribution(s), 1 / 3)


def test_distribution_by_formula():
    s = Exp3pState(alpha=1.0, beta=0.0, gamma=0.1, q=np.array([0.0, 10.0]))
    e = np.exp([0.0, 10.0])
    assert np.abs(exp3p_distribution(s) - (0.9 * e / e.sum() + 0.05)).max() < 1e-12


@settings(max_examples=100)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20), st.floats(0.0, 1.0), st.floats(0, 10))
def test_distribution_is_floored_simplex(q, gamma, alpha):
    s = Exp3pState(alpha, 0.0, gamma, np.array(q))
    u = exp3p_distribution(s)
    assert abs(u.sum() - 1.0) < 1e-12
    assert (u >= gamma / len(q) - 1e-15).all()


def test_update_examples():
    s = exp3p_init(4, 3)
    s.beta = 0.0
    exp3p_update(s, 1, 0.0, 10, np.full(4, 0.25))
    assert not s.q.any()
    s = Exp3pState(alpha=0.1, beta=0.2, gamma=1.0, q=np.zeros(4))
    exp3p_update(s, 2, 10.0, 10, np.full(4, 0.25))
    assert np.allclose(s.q, [0.8, 0.8, 4.8, 0.8])
    with pytest.raises(RewardOutOfRange):
        exp3p_update(s, 0, 15.0, 10, np.full(4, 0.25))


def test_init_constants():
    s = exp3p_init(4, 9)
    assert s.alpha == pytest.approx(0.95 * math.sqrt(math.log(4) / 36))
    assert s.beta == pytest.approx(math.sqrt(math.log(4) / 36))
    assert s.gamma == pytest.approx(min(1.0, 1.05 * math.sqrt(4 * math.log(4) / 9)))
    assert exp3p_init(100, 2).gamma == 1.0


def test_two_block_toy_prefers_rewarded_arm():
    s = Exp3pState(alpha=0.5, beta=0.0, gamma=0.2, q=np.zeros(2))
    u = exp3p_distribution(s)
    exp3p_update(s, 0, 1.0, 1, u)  # arm A earns 1, arm B is unplayed
    u2 = exp3p_distribution(s)
    assert u2[0] > u2[1]


def _world(K, kind="stationary", seed=0, **kw):
    from nsportal.learning import random_model_class
    mc = random_model_class(3, 3, 3, 2, 2, 2, stream(seed, "class"))
    sc = build_scenario(ScenarioConfig(kind, K=K, **kw), mc, stream(seed, "scenario"))
    return mc, sc, Environment(sc, stream(seed, "exploration"), stream(seed, "evaluation"))


def test_single_arm_grid_is_blockwise_portal():
    mc, sc, env = _world(12)
    grids = FeasibleGrids(1, 1, 4, 0, 0, (1,), (1,))
    log = run_ada_portal(env, mc, 12, stream(0, "ada-master"), AdaConfig(grids=grids))
    assert set(log.block) == {1, 2, 3} and set(log.W) == {1} and set(log.tau) == {1}
    assert all(np.array_equal(u, [1.0]) for u in log.distributions)


def test_run_logs_valid_distributions():
    mc, sc, env = _world(40, "abrupt-switch", switch_every=10)
    log = run_ada_portal(env, mc, 40, stream(0, "ada-master"))
    g = feasible_sets(mc.dim, mc.shape[0], 40)
    assert log.K == 40 and len(log.distributions) == math.ceil(40 / g.M)
    for u, gamma in zip(log.distributions, log.gammas):
        assert abs(u.sum() - 1) < 1e-12 and (u >= gamma / len(u) - 1e-15).all()
    assert env.usage == [(mc.shape[0], 1)] * 40


def test_arm_frequency_floor():
    # every arm keeps at least gamma / J probability, so none starves
    mc, sc, env = _world(200)
    log = run_ada_portal(env, mc, 200, stream(1, "ada-master"))
    for u, gamma in zip(log.distributions, log.gammas):
        assert u.min() >= gamma / len(u) - 1e-15
