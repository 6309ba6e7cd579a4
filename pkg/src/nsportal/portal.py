"""PORTAL: off-policy exploration, windowed model learning, restarted mirror descent."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .env import Environment, RoundHandle
from .learning import EstimatedModel, ModelClass, WindowDataset, e2u, schedule_constants, update_windows
from .mdp import policy_evaluation, uniform_policy


def default_eta(K: int, tau: int, A: int) -> float:
    """sqrt(L log A / K) with L = ceil(K / tau) restart periods."""
    if A < 2:
        return 1.0  # a single action leaves nothing to update
    L = math.ceil(K / tau)
    return math.sqrt(L * math.log(A) / K)


@dataclass(frozen=True)
class PortalHyperparams:
    K: int
    W: int
    tau: int
    eta: Optional[float] = None
    delta: float = 0.1
    c_lambda: float = 1.0
    n_eval: int = 1
    restart_mode: str = "literal"  # "literal": evaluate, then reset on restart rounds; "early": reset before evaluating

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not 1 <= self.W <= self.K:
            raise ValueError(f"window W={self.W} must lie in [1, K={self.K}]")
        if not 1 <= self.tau <= self.K:
            raise ValueError(f"restart period tau={self.tau} must lie in [1, K={self.K}]")
        if self.eta is not None and self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.restart_mode not in ("literal", "early"):
            raise ValueError(f"unknown restart_mode {self.restart_mode!r}")

    def stepsize(self, A: int) -> float:
        return self.eta if self.eta is not None else default_eta(self.K, self.tau, A)


@dataclass
class RunLog:
    """Everything a run emits; gaps are filled in later from the ground truth."""

    W: list = field(default_factory=list)
    tau: list = field(default_factory=list)
    policies: list = field(default_factory=list)          # pi^k executed in round k
    model_estimates: list = field(default_factory=list)   # P-hat^k
    restart: list = field(default_factory=list)
    returns: list = field(default_factory=list)           # evaluation-episode returns
    explore_episodes: list = field(default_factory=list)
    eval_episodes: list = field(default_factory=list)
    window_sizes: list = field(default_factory=list)      # max per-step window length after the update
    window_oldest: list = field(default_factory=list)     # oldest round index still held
    seed: Optional[int] = None
    eta: list = field(default_factory=list)
    wall_clock: float = 0.0
    # populated by Ada-PORTAL only
    block: list = field(default_factory=list)
    R_block: list = field(default_factory=list)
    u_entropy: list = field(default_factory=list)
    distributions: list = field(default_factory=list)
    gammas: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return len(self.policies)


def collect_round_data(handle: RoundHandle, pi_explore: np.ndarray) -> list:
    """One sub-episode per step: roll in with the exploration policy, then act uniformly.

    Returns per step h a pair (first, second) of (s, a, s') triples; the first is
    None for h = 1 since there is no step-0 state.
    """
    out = []
    for h in range(handle.horizon):
        if h == 0:
            traj = handle.explore(pi_explore, stop_step=0, uniform_tail=1)
            first = None
        else:
            traj = handle.explore(pi_explore, stop_step=h - 1, uniform_tail=2)
            first = (int(traj.states[h - 1]), int(traj.actions[h - 1]), int(traj.states[h]))
        second = (int(traj.states[h]), int(traj.actions[h]), int(traj.states[h + 1]))
        out.append((first, second))
    return out


def evaluate_target_Q(P_hat: np.ndarray, reward: np.ndarray, policy: np.ndarray) -> np.ndarray:
    return policy_evaluation(P_hat, reward, policy).Q


def mirror_descent_update(policy: np.ndarray, Q: np.ndarray, eta: float) -> np.ndarray:
    """pi' proportional to pi * exp(eta * Q), row by row."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    logits = eta * Q
    logits = logits - logits.max(axis=-1, keepdims=True)
    w = policy * np.exp(logits)
    return w / w.sum(axis=-1, keepdims=True)


def is_restart_round(k: int, tau: int) -> bool:
    # "k mod tau = 1", read so that tau = 1 restarts every round
    return (k - 1) % tau == 0


class PortalAgent:
    """Stateful PORTAL instance driven one round at a time."""

    def __init__(self, model_class: ModelClass, hyper: PortalHyperparams):
        H, S, A = model_class.shape
        self.model_class = model_class
        self.hyper = hyper
        self.H, self.S, self.A = H, S, A
        self.eta = hyper.stepsize(A)
        self.k = 0
        self.policy = uniform_policy(H, S, A)           # pi^k for the upcoming round
        self.explore_policy = uniform_policy(H, S, A)   # pi~^{k-1}
        self.data = WindowDataset(H, S, A, hyper.W)
        self.Q_hat = np.zeros((H, S, A))
        self.model: Optional[EstimatedModel] = None

    def play_round(self, handle: RoundHandle) -> dict:
        hp = self.hyper
        self.k += 1
        k = self.k
        executed = self.policy

        triples = collect_round_data(handle, self.explore_policy)
        update_windows(self.data, k, triples)
        for _ in range(hp.n_eval):
            handle.evaluate(executed)
        handle.finish()
        reward = handle.reveal_rewards()

        consts = schedule_constants(k, hp.W, self.model_class.sizes, self.H, self.A,
                                    self.model_class.dim, hp.delta, hp.K, hp.c_lambda)
        self.model, self.explore_policy, _ = e2u(k, self.data, self.model_class, consts)

        restart = is_restart_round(k, hp.tau)
        pi = executed
        if restart and hp.restart_mode == "early":
            pi = uniform_policy(self.H, self.S, self.A)
        self.Q_hat = evaluate_target_Q(self.model.P, reward, pi)
        if restart and hp.restart_mode == "literal":
            self.Q_hat = np.zeros_like(self.Q_hat)
            pi = uniform_policy(self.H, self.S, self.A)
        self.policy = mirror_descent_update(pi, self.Q_hat, self.eta)

        oldest = min((q[0][0] for q in self.data.mle if q), default=k)
        return {
            "policy": executed, "P_hat": self.model.P, "restart": restart,
            "returns": handle.evaluation_returns(), "explore_used": handle.explore_used,
            "eval_used": handle.eval_used, "window": len(self.data), "oldest": oldest,
        }


def _record(log: RunLog, rec: dict, W: int, tau: int, eta: float) -> None:
    log.policies.append(rec["policy"])
    log.model_estimates.append(rec["P_hat"])
    log.restart.append(rec["restart"])
    log.returns.append(rec["returns"])
    log.explore_episodes.append(rec["explore_used"])
    log.eval_episodes.append(rec["eval_used"])
    log.window_sizes.append(rec["window"])
    log.window_oldest.append(rec["oldest"])
    log.W.append(W)
    log.tau.append(tau)
    log.eta.append(eta)


def run_portal(env: Environment, model_class: ModelClass, hyper: PortalHyperparams,
               seed: Optional[int] = None) -> RunLog:
    """Run K rounds of PORTAL against ``env`` and log every round."""
    if env.K < hyper.K:
        raise ValueError(f"environment has {env.K} rounds, need {hyper.K}")
    t0 = time.perf_counter()
    agent = PortalAgent(model_class, hyper)
    log = RunLog(seed=seed)
    for k in range(1, hyper.K + 1):
        handle = env.begin_round(k)
        _record(log, agent.play_round(handle), hyper.W, hyper.tau, agent.eta)
    env.close()
    log.wall_clock = time.perf_counter() - t0
    return log
