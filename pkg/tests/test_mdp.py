import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import deterministic_policies, enumerate_value, random_kernel
from nsportal.errors import InvalidStopStep, KernelValidationError, ShapeMismatch
from nsportal.mdp import (kernel_from_factors, optimal_planning, policy_evaluation, sample_episode,
                          state_distributions, tv_distance, uniform_policy)


def test_rank_one_uniform_kernel():
    H, S, A = 2, 4, 3
    phi = np.zeros((H, S, A, 1)); phi[..., 0] = 1.0
    mu = np.full((H, S, 1), 1.0 / S)
    k = kernel_from_factors(phi, mu)
    assert np.allclose(k.P, 1.0 / S)


def test_non_simplex_row_rejected():
    phi = np.ones((1, 2, 1, 1))
    mu = np.array([[[0.5], [0.4]]])  # sums to 0.9
    with pytest.raises(KernelValidationError) as err:
        kernel_from_factors(phi, mu)
    assert "non_simplex" in err.value.kinds()


def test_bounds_reported_together(rng):
    phi = np.ones((1, 2, 1, 1))
    mu = np.array([[[0.99], [0.01]]])
    with pytest.raises(KernelValidationError) as err:
        kernel_from_factors(phi, mu, B=0.9, p_min=0.05)
    assert {"density_bound", "reachability"} <= set(err.value.kinds())


def test_factor_shapes_checked():
    with pytest.raises(ShapeMismatch):
        kernel_from_factors(np.ones((1, 2, 1, 2)), np.ones((1, 3, 2)))


def test_kernel_matches_inner_products(rng):
    H, S, A, d = 2, 3, 2, 2
    phi = rng.dirichlet(np.ones(d), size=(H, S, A))
    mu = np.swapaxes(rng.dirichlet(np.ones(S), size=(H, d)), 1, 2)
    P = kernel_from_factors(phi, mu).P
    for h in range(H):
        for s in range(S):
            for a in range(A):
                for t in range(S):
                    assert P[h, s, a, t] == pytest.approx(sum(phi[h, s, a, i] * mu[h, t, i] for i in range(d)),
                                                          abs=1e-15)


def test_zero_reward_zero_values(rng):
    P = random_kernel(rng, 3, 3, 2)
    vt = policy_evaluation(P, np.zeros((3, 3, 2)), uniform_policy(3, 3, 2))
    assert not vt.V.any() and not vt.Q.any()


def test_one_step_constant_reward(rng):
    P = random_kernel(rng, 1, 3, 2)
    vt = policy_evaluation(P, np.full((1, 3, 2), 0.7), uniform_policy(1, 3, 2))
    assert np.allclose(vt.Q, 0.7) and np.allclose(vt.V[0], 0.7)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_evaluation_matches_trajectory_enumeration(seed):
    rng = np.random.default_rng(seed)
    P = random_kernel(rng, 2, 2, 2)
    r = rng.uniform(0, 0.5, (2, 2, 2))
    pi = rng.dirichlet(np.ones(2), size=(2, 2))
    assert policy_evaluation(P, r, pi).V[0, 0] == pytest.approx(enumerate_value(P, r, pi), abs=1e-12)


def test_planning_zero_reward(rng):
    P = random_kernel(rng, 2, 3, 2)
    _, vt = optimal_planning(P, np.zeros((2, 3, 2)))
    assert not vt.V.any()


def test_planning_single_action(rng):
    P = random_kernel(rng, 3, 3, 1)
    r = rng.uniform(0, 1 / 3, (3, 3, 1))
    pi, vt = optimal_planning(P, r)
    assert np.array_equal(pi, np.ones((3, 3, 1)))
    assert np.allclose(vt.V, policy_evaluation(P, r, pi).V)


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_planning_beats_every_deterministic_policy(seed):
    rng = np.random.default_rng(seed)
    H, S, A = 3, 3, 2
    P = random_kernel(rng, H, S, A)
    r = rng.uniform(0, 1 / H, (H, S, A))
    _, vt = optimal_planning(P, r)
    best = max(policy_evaluation(P, r, pi).V[0, 0] for pi in deterministic_policies(H, S, A))
    assert vt.V[0, 0] >= best - 1e-12
    assert vt.V[0, 0] == pytest.approx(best, abs=1e-12)


def test_planning_ties_go_to_lowest_action(rng):
    P = random_kernel(rng, 2, 2, 3)
    pi, _ = optimal_planning(P, np.zeros((2, 2, 3)))
    assert (pi[..., 0] == 1.0).all()


def test_deterministic_rollout_is_unique_path():
    H, S, A = 3, 3, 2
    P = np.zeros((H, S, A, S))
    for s in range(S):
        P[:, s, :, (s + 1) % S] = 1.0
    pi = np.zeros((H, S, A)); pi[..., 1] = 1.0
    traj = sample_episode(P, pi, np.random.default_rng(0))
    assert list(traj.states) == [0, 1, 2, 0] and list(traj.actions) == [1, 1, 1]


def test_uniform_tail_action_frequencies():
    # every action after stop_step is uniform; frequencies within 3 sigma of 1/A
    H, S, A = 2, 2, 3
    P = random_kernel(np.random.default_rng(1), H, S, A)
    pi = np.zeros((H, S, A)); pi[..., 0] = 1.0
    n = 100_000
    rng = np.random.default_rng(2)
    counts = np.zeros((2, A))
    for _ in range(n):
        traj = sample_episode(P, pi, rng, stop_step=0, uniform_tail=2)
        counts[0, traj.actions[0]] += 1
        counts[1, traj.actions[1]] += 1
    sigma = np.sqrt(n * (1 / A) * (1 - 1 / A))
    assert np.abs(counts - n / A).max() < 3 * sigma


def test_sampling_determinism(rng):
    P = random_kernel(rng, 4, 3, 2)
    pi = uniform_policy(4, 3, 2)
    a = sample_episode(P, pi, np.random.default_rng(5))
    b = sample_episode(P, pi, np.random.default_rng(5))
    assert np.array_equal(a.states, b.states) and np.array_equal(a.actions, b.actions)


def test_episode_lengths(rng):
    P = random_kernel(rng, 3, 2, 2)
    pi = uniform_policy(3, 2, 2)
    full = sample_episode(P, pi, rng)
    assert len(full.actions) == 3 and len(full.states) == 4
    cut = sample_episode(P, pi, rng, stop_step=1, uniform_tail=2)
    assert len(cut.actions) == 3
    with pytest.raises(InvalidStopStep):
        sample_episode(P, pi, rng, stop_step=2, uniform_tail=2)


def test_empirical_value_matches_exact():
    rng = np.random.default_rng(3)
    H, S, A = 3, 3, 2
    P = random_kernel(rng, H, S, A)
    r = rng.uniform(0, 1 / H, (H, S, A))
    pi = rng.dirichlet(np.ones(A), size=(H, S))
    rets = []
    for _ in range(20_000):
        t = sample_episode(P, pi, rng)
        rets.append(r[np.arange(H), t.states[:-1], t.actions].sum())
    exact = policy_evaluation(P, r, pi).V[0, 0]
    assert abs(np.mean(rets) - exact) < 3 * np.std(rets) / np.sqrt(len(rets))


def test_state_distributions_sum_to_one(rng):
    P = random_kernel(rng, 4, 3, 2)
    d = state_distributions(P, uniform_policy(4, 3, 2))
    assert np.allclose(d.sum(axis=1), 1.0)


def test_tv_trivial_cases(rng):
    P = random_kernel(rng, 2, 3, 2)
    assert not tv_distance(P, P).any()
    P1 = np.zeros((1, 2, 1, 2)); P1[..., 0] = 1
    P2 = np.zeros((1, 2, 1, 2)); P2[..., 1] = 1
    assert np.all(tv_distance(P1, P2) == 1.0)


def test_tv_matches_direct_sum(rng):
    P1, P2 = random_kernel(rng, 2, 4, 3), random_kernel(rng, 2, 4, 3)
    f = tv_distance(P1, P2)
    for h, s, a in np.ndindex(2, 4, 3):
        assert f[h, s, a] == pytest.approx(0.5 * sum(abs(P1[h, s, a, t] - P2[h, s, a, t]) for t in range(4)))
