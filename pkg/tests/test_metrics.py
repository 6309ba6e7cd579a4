import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_kernel
from nsportal.env import Environment, ScenarioConfig, build_scenario, scenario_from_tables
from nsportal.errors import LengthMismatch
from nsportal.mdp import LowRankKernel, sample_episode, tv_distance, uniform_policy
from nsportal.metrics import (RUNLOG_COLUMNS, ADA_COLUMNS, bounded_difference_slack, elliptical_potential,
                              expected_under, gap_ave, lemma_oracles, max_tv_error, model_error_profile,
                              random_feature_sequence, random_instance, reachable_mask,
                              simulation_lemma_residuals, write_runlog_csv)
from nsportal.portal import PortalHyperparams, run_portal
from nsportal.rng import stream


def test_optimal_policies_have_zero_gap(small_class):
    sc = build_scenario(ScenarioConfig("abrupt-switch", K=9, switch_every=3), small_class, stream(0, "scenario"))
    rep = gap_ave(sc, [sc.optimal_policy(k) for k in range(1, 10)])
    assert rep.gap_ave == 0.0


def test_one_step_gap_by_hand():
    H = 1
    P = np.ones((1, 1, 2, 1))
    sc = scenario_from_tables([LowRankKernel(P)], [np.array([[[1.0, 0.0]]]) / H])
    rep = gap_ave(sc, [uniform_policy(1, 1, 2)])
    assert rep.gap_ave == pytest.approx(0.5 / H)


def test_gap_average_is_mean(small_class):
    sc = build_scenario(ScenarioConfig("abrupt-switch", K=12, switch_every=4), small_class, stream(1, "scenario"))
    rng = np.random.default_rng(0)
    pols = [rng.dirichlet(np.ones(2), size=(3, 3)) for _ in range(12)]
    rep = gap_ave(sc, pols)
    assert abs(rep.gap_ave - rep.gaps.mean()) < 1e-12 and (rep.gaps >= 0).all()
    with pytest.raises(LengthMismatch):
        gap_ave(sc, pols[:-1])


def test_model_error_profile_basics(small_class):
    sc = build_scenario(ScenarioConfig(K=4), small_class, stream(2, "scenario"))
    exact = [sc.kernel(k) for k in range(1, 5)]
    assert not model_error_profile(sc, exact).max_tv.any()
    other = [small_class.kernel(2, 3)] * 4
    prof = model_error_profile(sc, other, [uniform_policy(3, 3, 2)] * 4)
    assert (0 <= prof.max_tv).all() and (prof.max_tv <= 1).all()
    assert (0 <= prof.expected_tv).all() and (prof.expected_tv <= 1).all()


def test_expected_tv_matches_monte_carlo():
    rng = np.random.default_rng(11)
    H, S, A = 3, 3, 2
    P, P_hat = random_kernel(rng, H, S, A), random_kernel(rng, H, S, A)
    pi = rng.dirichlet(np.ones(A), size=(H, S))
    f = tv_distance(P_hat, P)
    exact = expected_under(P, pi, f)
    n = 100_000
    samples = np.empty((n, H))
    for i in range(n):
        t = sample_episode(P, pi, rng)
        samples[i] = f[np.arange(H), t.states[:-1], t.actions]
    se = samples.std(axis=0) / np.sqrt(n)
    assert (np.abs(samples.mean(axis=0) - exact) <= 3 * se + 1e-12).all()


def test_reachability_of_first_step(small_class):
    P = small_class.kernel(0, 0)
    mask = reachable_mask(P, initial_state=1)
    assert mask[0].tolist() == [False, True, False] and mask[1:].all()
    P_hat = P.copy()
    P_hat[0, 0] = P[0, 2]  # corrupt an unreachable row only
    assert max_tv_error(P_hat, P, 1) == 0.0 and max_tv_error(P_hat, P, 1, reachable_only=False) > 0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lemma_identities_on_random_instances(seed):
    rng = np.random.default_rng(seed)
    P1, P2, r1, r2, pi = random_instance(rng)
    assert max(simulation_lemma_residuals(P1, r1, P2, r2, pi)) <= 1e-9
    assert bounded_difference_slack(P1, P2, r1, pi) >= -1e-9


def test_bounded_difference_degenerate(rng):
    P1, _, r1, _, pi = random_instance(rng)
    assert bounded_difference_slack(P1, P1, r1, pi) == 0.0


def test_elliptical_zero_features():
    lhs, logdet, rhs = elliptical_potential(np.zeros((20, 3)), 0.1)
    assert lhs == 0.0 and logdet == 0.0 and rhs > 0


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 500), st.sampled_from([1.0, 2.0, 10.0]))
def test_elliptical_bound_for_unit_regulariser(seed, d, N, lam0):
    X = random_feature_sequence(np.random.default_rng(seed), d, N)
    lhs, logdet, rhs = elliptical_potential(X, lam0)
    assert lhs <= logdet + 1e-9 and logdet <= rhs + 1e-9


def test_elliptical_bound_fails_for_small_regulariser():
    # with lam0 < 1 a single unit vector already has tr(X M0^-1) = 1 / lam0 > 2 d log(1 + 1 / (d lam0))
    lhs, _, rhs = elliptical_potential(np.array([[1.0]]), 0.1)
    assert lhs == pytest.approx(10.0) and rhs == pytest.approx(2 * np.log(11.0))
    assert lhs > rhs


def test_oracle_report_simulation_and_bounded_difference():
    rep = lemma_oracles(100, stream(0, "oracles-test"))
    assert rep.passed["simulation_lemma"] and rep.passed["bounded_difference"]


def test_runlog_csv_columns(tmp_path, small_class):
    sc = build_scenario(ScenarioConfig(K=5), small_class, stream(0, "scenario"))
    log = run_portal(Environment(sc, stream(0, "exploration")), small_class, PortalHyperparams(5, 5, 2), seed=0)
    path = tmp_path / "run.csv"
    rep = write_runlog_csv(path, log, sc)
    rows = list(csv.reader(path.open()))
    assert rows[0] == RUNLOG_COLUMNS and len(rows) == 6
    assert [int(r[5]) for r in rows[1:]] == [1, 0, 1, 0, 1]
    assert float(rows[1][1]) == rep.gaps[0]
    assert not set(ADA_COLUMNS) & set(rows[0])
