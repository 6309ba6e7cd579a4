"""Ground-truth measurement: suboptimality gaps, model errors, lemma checks."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .env import ScenarioSequence
from .errors import LengthMismatch, ShapeMismatch
from .learning import truncated_value_dp
from .mdp import policy_evaluation, state_distributions, tv_distance

NEG_GAP_TOL = 1e-10


def reachable_mask(P: np.ndarray, initial_state: int = 0) -> np.ndarray:
    """(H, S) mask of states some policy reaches with positive probability.

    The uniform policy puts mass on every action, so its forward state
    distribution is positive exactly on the reachable set.
    """
    H, S, A, _ = P.shape
    return state_distributions(P, np.full((H, S, A), 1.0 / A), initial_state) > 0


def max_tv_error(P_hat: np.ndarray, P_true: np.ndarray, initial_state: int = 0,
                 reachable_only: bool = True) -> float:
    """Largest per-(h, s, a) TV distance, by default over reachable states only.

    Rows of unreachable states never produce data, so no estimator can identify them.
    """
    f = tv_distance(P_hat, P_true)
    if reachable_only:
        f = np.where(reachable_mask(P_true, initial_state)[:, :, None], f, 0.0)
    return float(f.max())


@dataclass(frozen=True)
class GapReport:
    gaps: np.ndarray
    V_star: np.ndarray
    V_pi: np.ndarray
    gap_ave: float
    max_tv: Optional[np.ndarray] = None

    def window_mean(self, first: int, last: int) -> float:
        """Mean gap over 1-based rounds first..last inclusive."""
        return float(self.gaps[first - 1:last].mean())


def gap_ave(scenario: ScenarioSequence, policies: Sequence[np.ndarray],
            model_estimates: Optional[Sequence[np.ndarray]] = None) -> GapReport:
    """Exact per-round gaps V*_k - V^{pi^k}_k and their average."""
    if len(policies) != scenario.K:
        raise LengthMismatch(f"{len(policies)} policies for {scenario.K} rounds")
    s1 = scenario.space.initial_state
    K = scenario.K
    v_star = np.empty(K)
    v_pi = np.empty(K)
    for k in range(1, K + 1):
        v_star[k - 1] = scenario.optimal_value(k)
        v_pi[k - 1] = policy_evaluation(scenario.kernel(k), scenario.reward(k), policies[k - 1]).V[0, s1]
    gaps = v_star - v_pi
    if gaps.min() < -NEG_GAP_TOL:
        k = int(gaps.argmin()) + 1
        raise ArithmeticError(f"negative gap {gaps.min():.3e} in round {k}: planner bug")
    gaps = np.clip(gaps, 0.0, None)
    max_tv = None
    if model_estimates is not None:
        s0 = scenario.space.initial_state
        max_tv = np.array([max_tv_error(P_hat, scenario.kernel(k), s0)
                           for k, P_hat in enumerate(model_estimates, start=1)])
    return GapReport(gaps, v_star, v_pi, float(gaps.mean()), max_tv)


@dataclass(frozen=True)
class ModelErrorProfile:
    max_tv: np.ndarray                 # (K, H), reachable states only
    expected_tv: Optional[np.ndarray]  # (K, H) under (P*, pi) when policies are given


def model_error_profile(scenario: ScenarioSequence, estimates: Sequence[np.ndarray],
                        policies: Optional[Sequence[np.ndarray]] = None) -> ModelErrorProfile:
    K = len(estimates)
    H = scenario.space.horizon
    max_tv = np.empty((K, H))
    exp_tv = np.empty((K, H)) if policies is not None else None
    for idx in range(K):
        P_true = scenario.kernel(idx + 1)
        if np.shape(estimates[idx]) != P_true.shape:
            raise ShapeMismatch(f"estimate {idx + 1} has shape {np.shape(estimates[idx])}")
        f = tv_distance(estimates[idx], P_true)
        reach = reachable_mask(P_true, scenario.space.initial_state)
        max_tv[idx] = np.where(reach[:, :, None], f, 0.0).max(axis=(1, 2))
        if policies is not None:
            exp_tv[idx] = expected_under(P_true, policies[idx], f, scenario.space.initial_state)
    return ModelErrorProfile(max_tv, exp_tv)


def expected_under(P: np.ndarray, policy: np.ndarray, f: np.ndarray, initial_state: int = 0) -> np.ndarray:
    """E_{(s_h, a_h) ~ (P, pi)}[f_h(s_h, a_h)] for every step, via forward state distributions."""
    d = state_distributions(P, policy, initial_state)
    return np.einsum("hs,hsa,hsa->h", d, policy, f)


# --------------------------------------------------------------------------
# lemma oracles

def _step_operator(P: np.ndarray, policy: np.ndarray) -> np.ndarray:
    """T[h][s, s'] = sum_a pi_h(a|s) P_h(s'|s,a)."""
    return np.einsum("hsa,hsat->hst", policy, P)


def simulation_lemma_residuals(P1, r1, P2, r2, policy) -> tuple[float, float]:
    """Max |(V1 - V2) - expansion| over (h, s) for both forms of the expansion.

    The expansions are accumulated forward with explicit multi-step state
    distributions, independently of the backward recursion that produced V.
    """
    H, S, A, _ = P1.shape
    V1 = policy_evaluation(P1, r1, policy).V
    V2 = policy_evaluation(P2, r2, policy).V
    diff = V1 - V2
    residuals = []
    for roll, V_ref in ((P2, V1), (P1, V2)):
        T = _step_operator(roll, policy)
        # g[h](s) = E_{a~pi}[r1 - r2 + (P1 - P2) V_ref_{h+1}](s)
        g = np.einsum("hsa,hsa->hs", policy, (r1 - r2) + np.einsum("hsat,ht->hsa", P1 - P2, V_ref[1:]))
        worst = 0.0
        for h in range(H):
            dist = np.eye(S)
            total = np.zeros(S)
            for hp in range(h, H):
                total += dist @ g[hp]
                dist = dist @ T[hp]
            worst = max(worst, float(np.abs(diff[h] - total).max()))
        residuals.append(worst)
    return residuals[0], residuals[1]


def bounded_difference_slack(P_true, P_hat, reward, policy) -> float:
    """min over (h, s) of  V-hat^pi_{P_hat, f}(s) - |V^pi_{P*}(s) - V^pi_{P_hat}(s)|  with f = TV table."""
    f = tv_distance(P_hat, P_true)
    V_true = policy_evaluation(P_true, reward, policy).V
    V_hat = policy_evaluation(P_hat, reward, policy).V
    bound = truncated_value_dp(P_hat, f, policy).V
    return float((bound - np.abs(V_true - V_hat))[:-1].min())


def elliptical_potential(features: np.ndarray, lam0: float) -> tuple[float, float, float]:
    """(sum_n tr(X_n M_{n-1}^{-1}), 2 log det M_N - 2 log det M_0, 2 d log(1 + N / (d lam0))).

    X_n = x_n x_n^T for the rows of ``features``.
    """
    X = np.atleast_2d(np.asarray(features, dtype=float))
    N, d = X.shape
    M = lam0 * np.eye(d)
    total = 0.0
    for x in X:
        total += float(x @ np.linalg.solve(M, x))
        M += np.outer(x, x)
    logdet = 2.0 * (np.linalg.slogdet(M)[1] - d * np.log(lam0))
    return total, float(logdet), float(2.0 * d * np.log1p(N / (d * lam0)))


def random_instance(rng: np.random.Generator, max_states: int = 5, max_actions: int = 3, max_horizon: int = 4,
                    dim: Optional[int] = None):
    """Random low-rank kernel pair, reward (sum over steps <= 1) and stochastic policy."""
    S = int(rng.integers(1, max_states + 1))
    A = int(rng.integers(1, max_actions + 1))
    H = int(rng.integers(1, max_horizon + 1))
    d = dim or int(rng.integers(1, 4))

    def kernel():
        phi = rng.dirichlet(np.ones(d), size=(H, S, A))
        mu = np.swapaxes(rng.dirichlet(np.ones(S), size=(H, d)), 1, 2)
        return np.einsum("hsad,htd->hsat", phi, mu)

    reward = rng.uniform(0, 1, (H, S, A)) / H
    reward2 = rng.uniform(0, 1, (H, S, A)) / H
    policy = rng.dirichlet(np.ones(A), size=(H, S))
    return kernel(), kernel(), reward, reward2, policy


@dataclass(frozen=True)
class OracleReport:
    n_instances: int
    simulation_max_residual: float
    bounded_difference_min_slack: float
    elliptical_max_excess: float
    tol: float = 1e-9

    @property
    def passed(self) -> dict:
        return {
            "simulation_lemma": self.simulation_max_residual <= self.tol,
            "bounded_difference": self.bounded_difference_min_slack >= -self.tol,
            "elliptical_potential": self.elliptical_max_excess <= self.tol,
        }


def random_feature_sequence(rng: np.random.Generator, d: int, N: int) -> np.ndarray:
    """N vectors uniform in the unit d-ball (so tr(x x^T) <= 1)."""
    g = rng.standard_normal((N, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.uniform(0, 1, (N, 1)) ** (1.0 / d)


def lemma_oracles(n_instances: int, rng: np.random.Generator, max_states: int = 5,
                  max_seq_len: int = 500) -> OracleReport:
    sim, slack, excess = 0.0, np.inf, -np.inf
    for _ in range(n_instances):
        P1, P2, r1, r2, pi = random_instance(rng, max_states=max_states)
        sim = max(sim, *simulation_lemma_residuals(P1, r1, P2, r2, pi))
        slack = min(slack, bounded_difference_slack(P1, P2, r1, pi))
        d = int(rng.integers(1, 5))
        N = int(rng.integers(1, max_seq_len + 1))
        lam0 = float(rng.choice([0.1, 1.0]))
        lhs, _, rhs = elliptical_potential(random_feature_sequence(rng, d, N), lam0)
        excess = max(excess, lhs - rhs)
    return OracleReport(n_instances, sim, float(slack), float(excess))


# --------------------------------------------------------------------------
# CSV emission

RUNLOG_COLUMNS = ["round", "gap", "V_star", "V_pi", "max_TV_err", "restart_flag", "W", "tau", "seed"]
ADA_COLUMNS = ["block", "arm_W", "arm_tau", "R_i", "u_entropy"]


def runlog_rows(log, scenario: ScenarioSequence,
                report: Optional[GapReport] = None) -> tuple[list[str], list[list]]:
    if report is None:
        report = gap_ave(scenario, log.policies, log.model_estimates)
    ada = bool(log.block)
    cols = RUNLOG_COLUMNS + (ADA_COLUMNS if ada else [])
    rows = []
    for i in range(log.K):
        row = [i + 1, report.gaps[i], report.V_star[i], report.V_pi[i], report.max_tv[i],
               int(log.restart[i]), log.W[i], log.tau[i], log.seed]
        if ada:
            row += [log.block[i], log.W[i], log.tau[i], log.R_block[i], log.u_entropy[i]]
        rows.append(row)
    return cols, rows


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_runlog_csv(path, log, scenario: ScenarioSequence) -> GapReport:
    report = gap_ave(scenario, log.policies, log.model_estimates)
    cols, rows = runlog_rows(log, scenario, report)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return report
