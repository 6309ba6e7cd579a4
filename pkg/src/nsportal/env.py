"""Round-indexed nonstationary environments.

A :class:`ScenarioSequence` is the ground truth (one kernel and reward per round).
Agents never see it directly: :class:`Environment` hands out one
:class:`RoundHandle` per round, which only samples episodes and reveals the
reward table once the agent has finished exploring.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (BudgetExhausted, InfeasibleDrift, InvalidConfig, OutOfOrderRound,
                     RewardNotYetRevealed)
from .learning import ModelClass
from .mdp import (LowRankKernel, StateActionSpace, Trajectory, kernel_from_factors,
                  optimal_planning, sample_episode, tv_distance)

DRIFT_KINDS = ("stationary", "abrupt-switch", "piecewise-drift", "embedding-only")
SCENARIO_FORMAT = "nsportal-scenario"
SCENARIO_VERSION = 1


@dataclass(frozen=True)
class ScenarioConfig:
    drift_kind: str = "stationary"
    K: int = 600
    switch_every: Optional[int] = None
    switch_rounds: tuple[int, ...] = ()
    n_regimes: int = 2
    members: tuple[tuple[int, int], ...] = ()
    reward_mode: str = "mirror"
    misspecified: bool = False

    def segment_starts(self) -> list[int]:
        """1-based first rounds of each constant segment (always starts with 1)."""
        if self.drift_kind == "stationary":
            return [1]
        if self.switch_rounds:
            starts = sorted(set(int(k) for k in self.switch_rounds))
        elif self.switch_every:
            starts = list(range(1 + self.switch_every, self.K + 1, self.switch_every))
        else:
            raise InvalidConfig(f"{self.drift_kind} needs switch_every or switch_rounds")
        if any(k < 2 or k > self.K for k in starts):
            raise InvalidConfig(f"switch rounds must lie in [2, K]: {starts}")
        return [1] + starts


@dataclass(frozen=True, eq=False)
class ScenarioSequence:
    space: StateActionSpace
    dim: int
    kernels: tuple[LowRankKernel, ...]
    rewards: tuple[np.ndarray, ...]
    members: tuple[Optional[tuple[int, int]], ...]
    drift_kind: str = "stationary"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.kernels) == len(self.rewards) == len(self.members)):
            raise InvalidConfig("kernels, rewards and members must have one entry per round")
        H, S, A = self.space.horizon, self.space.n_states, self.space.n_actions
        for kern, r in zip(self.kernels, self.rewards):
            if kern.P.shape != (H, S, A, S) or r.shape != (H, S, A):
                raise InvalidConfig("every round must share S, A and H")
            if kern.phi is not None and kern.phi.shape[-1] != self.dim:
                raise InvalidConfig("every round must share d")

    @property
    def K(self) -> int:
        return len(self.kernels)

    def kernel(self, k: int) -> np.ndarray:
        """Dense kernel of 1-based round k."""
        return self.kernels[k - 1].P

    def reward(self, k: int) -> np.ndarray:
        return self.rewards[k - 1]

    @cached_property
    def _optimal(self) -> list:
        out, memo = [], {}
        for kern, r in zip(self.kernels, self.rewards):
            key = (id(kern.P), id(r))
            if key not in memo:
                memo[key] = optimal_planning(kern.P, r)
            out.append(memo[key])
        return out

    def optimal_policy(self, k: int) -> np.ndarray:
        return self._optimal[k - 1][0]

    def optimal_value(self, k: int) -> float:
        return float(self._optimal[k - 1][1].V[0, self.space.initial_state])


# --------------------------------------------------------------------------
# scenario generation

def random_reward(H: int, S: int, A: int, rng: np.random.Generator) -> np.ndarray:
    # per-step cap 1/H keeps every trajectory's total reward <= 1
    return rng.uniform(0.0, 1.0, size=(H, S, A)) / H


def _check_member(model_class: ModelClass, member) -> tuple[int, int]:
    i, j = int(member[0]), int(member[1])
    n_phi, n_psi = model_class.sizes
    if not (0 <= i < n_phi and 0 <= j < n_psi) or not model_class.valid[i, j]:
        raise InfeasibleDrift(f"member {(i, j)} is not a valid pair of the model class")
    return i, j


def _draw_members(model_class: ModelClass, n: int, rng: np.random.Generator,
                  fixed_phi: Optional[int] = None) -> list[tuple[int, int]]:
    valid = np.argwhere(model_class.valid)
    if fixed_phi is not None:
        valid = valid[valid[:, 0] == fixed_phi]
    if len(valid) == 0:
        raise InfeasibleDrift("no valid member to draw from")
    out = []
    prev = None
    for _ in range(n):
        choices = valid
        if prev is not None and len(valid) > 1:
            # consecutive regimes differ in both factors when the class allows it
            mask = (valid[:, 1] != prev[1]) & ((valid[:, 0] != prev[0]) | (fixed_phi is not None))
            choices = valid[mask] if mask.any() else valid[(valid != prev).any(axis=1)]
        m = tuple(int(x) for x in choices[rng.integers(len(choices))])
        out.append(m)
        prev = m
    return out


def build_scenario(config: ScenarioConfig, model_class: ModelClass,
                   rng: np.random.Generator, initial_state: int = 0) -> ScenarioSequence:
    """Instantiate a K-round scenario whose kernels are drawn from ``model_class``."""
    if config.drift_kind not in DRIFT_KINDS:
        raise InvalidConfig(f"unknown drift_kind {config.drift_kind!r}")
    if config.K < 1:
        raise InvalidConfig("K must be >= 1")
    if config.reward_mode not in ("mirror", "independent"):
        raise InvalidConfig(f"unknown reward_mode {config.reward_mode!r}")
    H, S, A = model_class.shape
    space = StateActionSpace(S, A, H, initial_state)
    starts = config.segment_starts()
    n_seg = len(starts)
    n_regimes = 1 if config.drift_kind == "stationary" else max(1, config.n_regimes)
    if config.drift_kind == "piecewise-drift":
        n_regimes = n_seg

    if config.members:
        regimes = [_check_member(model_class, m) for m in config.members]
        if config.drift_kind == "embedding-only" and len({m[0] for m in regimes}) > 1:
            raise InfeasibleDrift("embedding-only drift requires a single representation")
        n_regimes = len(regimes) if config.drift_kind != "stationary" else 1
    elif config.drift_kind == "embedding-only":
        if model_class.sizes[1] < 2:
            raise InfeasibleDrift("embedding-only drift needs at least two embeddings")
        phi0 = int(np.argwhere(model_class.valid)[rng.integers(model_class.valid.sum())][0])
        regimes = _draw_members(model_class, n_regimes, rng, fixed_phi=phi0)
    else:
        regimes = _draw_members(model_class, n_regimes, rng)

    base_reward = random_reward(H, S, A, rng)
    if config.drift_kind == "embedding-only" or config.drift_kind == "stationary":
        regime_rewards = [base_reward] * n_regimes
    elif config.reward_mode == "mirror":
        mirrored = 1.0 / H - base_reward
        regime_rewards = [base_reward if r % 2 == 0 else mirrored for r in range(n_regimes)]
    else:
        regime_rewards = [base_reward] + [random_reward(H, S, A, rng) for _ in range(n_regimes - 1)]

    regime_kernels = [kernel_from_factors(model_class.phis[i], model_class.mus[j]) for i, j in regimes]

    kernels, rewards, members = [], [], []
    bounds = starts + [config.K + 1]
    for seg in range(n_seg):
        reg = seg % n_regimes
        length = bounds[seg + 1] - bounds[seg]
        for t in range(length):
            frac = t / length
            if config.misspecified and seg > 0:
                # off-class drift: the embedding slides linearly from the old regime's
                i, j = regimes[reg]
                _, j_prev = regimes[(seg - 1) % n_regimes]
                mu = (1.0 - frac) * model_class.mus[j_prev] + frac * model_class.mus[j]
                kernels.append(kernel_from_factors(model_class.phis[i], mu))
                members.append(None)
            else:
                kernels.append(regime_kernels[reg])
                members.append(regimes[reg])
            if config.drift_kind == "piecewise-drift" and t > 0 and seg + 1 < n_seg:
                # rewards slide toward the next segment's table within each segment
                nxt = regime_rewards[(seg + 1) % n_regimes]
                rewards.append((1.0 - frac) * regime_rewards[reg] + frac * nxt)
            else:
                rewards.append(regime_rewards[reg])

    meta = {"segment_starts": starts, "regimes": [list(m) for m in regimes],
            "misspecified": bool(config.misspecified), "reward_mode": config.reward_mode}
    return ScenarioSequence(space, model_class.dim, tuple(kernels), tuple(rewards), tuple(members),
                            config.drift_kind, meta)


# --------------------------------------------------------------------------
# variation budgets

@dataclass(frozen=True)
class VariationBudgets:
    delta_P: float = 0.0
    delta_sqrtP: float = 0.0
    delta_phi: float = 0.0
    delta_pi: float = 0.0
    delta_r: float = 0.0

    def as_dict(self) -> dict:
        return {"delta_P": self.delta_P, "delta_sqrtP": self.delta_sqrtP, "delta_phi": self.delta_phi,
                "delta_pi": self.delta_pi, "delta_r": self.delta_r}


def variation_budgets(scenario: ScenarioSequence, start: int = 1, stop: Optional[int] = None) -> VariationBudgets:
    """Exact budgets summed over the consecutive round pairs inside [start, stop].

    Splitting [1, K] at m gives [1, m] and [m, K], whose budgets add up.
    """
    stop = scenario.K if stop is None else stop
    dP = dsq = dphi = dpi = dr = 0.0
    for k in range(start, stop):
        a, b = scenario.kernels[k - 1], scenario.kernels[k]
        if a is b and scenario.rewards[k - 1] is scenario.rewards[k]:
            continue
        tv_max = tv_distance(b.P, a.P).max(axis=(1, 2))
        dP += float(tv_max.sum())
        dsq += float(np.sqrt(tv_max).sum())
        if a.phi is not None and b.phi is not None:
            dphi += float(np.linalg.norm(b.phi - a.phi, axis=3).max(axis=(1, 2)).sum())
        else:
            dphi = float("nan")
        dr += float(np.abs(scenario.rewards[k] - scenario.rewards[k - 1]).max(axis=(1, 2)).sum())
        pi_a, pi_b = scenario.optimal_policy(k), scenario.optimal_policy(k + 1)
        dpi += float((0.5 * np.abs(pi_b - pi_a).sum(axis=2)).max(axis=1).sum())
    return VariationBudgets(dP, dsq, dphi, dpi, dr)


# --------------------------------------------------------------------------
# agent-facing interaction

class RoundHandle:
    """Single-owner access to one round: sampling now, rewards after ``finish``."""

    def __init__(self, env: "Environment", k: int):
        self._env = env
        self.k = k
        self.explore_used = 0
        self.eval_used = 0
        self.finished = False
        self._eval_episodes: list[Trajectory] = []

    @property
    def horizon(self) -> int:
        return self._env.space.horizon

    @property
    def n_actions(self) -> int:
        return self._env.space.n_actions

    def _check_open(self):
        if self.finished:
            raise BudgetExhausted(f"round {self.k} already finished")
        if self._env._current is not self:
            raise OutOfOrderRound(f"round {self.k} is no longer current")

    def explore(self, policy: np.ndarray, stop_step: Optional[int] = None, uniform_tail: int = 0) -> Trajectory:
        self._check_open()
        if self.explore_used >= self._env.explore_cap:
            raise BudgetExhausted(f"exploration budget of {self._env.explore_cap} episodes used up")
        self.explore_used += 1
        env = self._env
        return sample_episode(env._scenario.kernel(self.k), policy, env._explore_rng, stop_step,
                              uniform_tail, env.space.initial_state)

    def evaluate(self, policy: np.ndarray) -> Trajectory:
        """Execute ``policy`` for a full episode; its return is known after reveal."""
        self._check_open()
        if self.eval_used >= self._env.eval_cap:
            raise BudgetExhausted(f"evaluation budget of {self._env.eval_cap} episodes used up")
        self.eval_used += 1
        env = self._env
        traj = sample_episode(env._scenario.kernel(self.k), policy, env._eval_rng, None, 0,
                              env.space.initial_state)
        self._eval_episodes.append(traj)
        return traj

    def finish(self) -> None:
        self.finished = True

    def reveal_rewards(self) -> np.ndarray:
        if not self.finished:
            raise RewardNotYetRevealed(f"round {self.k} rewards are revealed only after finish()")
        r = self._env._scenario.reward(self.k).view()
        r.flags.writeable = False
        return r

    def evaluation_returns(self) -> list[float]:
        r = self.reveal_rewards()
        return [float(r[np.arange(len(t.actions)), t.states[:-1], t.actions].sum()) for t in self._eval_episodes]


class Environment:
    """Serves rounds 1..K of a scenario in order."""

    def __init__(self, scenario: ScenarioSequence, explore_rng: np.random.Generator,
                 eval_rng: Optional[np.random.Generator] = None, n_eval: int = 1,
                 explore_cap: Optional[int] = None):
        self._scenario = scenario
        self.space = scenario.space
        self.K = scenario.K
        self._explore_rng = explore_rng
        self._eval_rng = eval_rng if eval_rng is not None else explore_rng
        self.explore_cap = scenario.space.horizon if explore_cap is None else explore_cap
        self.eval_cap = n_eval
        self._next = 1
        self._current: Optional[RoundHandle] = None
        self.usage: list[tuple[int, int]] = []

    def begin_round(self, k: int) -> RoundHandle:
        if k != self._next or not 1 <= k <= self.K:
            raise OutOfOrderRound(f"expected round {self._next}, got {k}")
        if self._current is not None:
            self.usage.append((self._current.explore_used, self._current.eval_used))
        self._next += 1
        self._current = RoundHandle(self, k)
        return self._current

    def close(self) -> None:
        if self._current is not None:
            self.usage.append((self._current.explore_used, self._current.eval_used))
            self._current = None


def begin_round(env: Environment, k: int) -> RoundHandle:
    return env.begin_round(k)


def reveal_rewards(handle: RoundHandle) -> np.ndarray:
    return handle.reveal_rewards()


# --------------------------------------------------------------------------
# export / import

def scenario_to_dict(scenario: ScenarioSequence) -> dict:
    models, rewards, index_m, index_r, rounds = [], [], {}, {}, []
    for kern, r, member in zip(scenario.kernels, scenario.rewards, scenario.members):
        if id(kern) not in index_m:
            index_m[id(kern)] = len(models)
            entry = {"phi": kern.phi.tolist(), "mu": kern.mu.tolist()} if kern.phi is not None \
                else {"P": kern.P.tolist()}
            models.append(entry)
        if id(r) not in index_r:
            index_r[id(r)] = len(rewards)
            rewards.append(r.tolist())
        rounds.append({"model": index_m[id(kern)], "reward": index_r[id(r)],
                       "member": list(member) if member is not None else None})
    sp = scenario.space
    return {
        "format": SCENARIO_FORMAT, "version": SCENARIO_VERSION,
        "n_states": sp.n_states, "n_actions": sp.n_actions, "horizon": sp.horizon,
        "initial_state": sp.initial_state, "dim": scenario.dim, "drift_kind": scenario.drift_kind,
        "metadata": scenario.metadata, "models": models, "rewards": rewards, "rounds": rounds,
    }


def scenario_from_dict(doc: dict) -> ScenarioSequence:
    if doc.get("format") != SCENARIO_FORMAT or doc.get("version") != SCENARIO_VERSION:
        raise InvalidConfig("not a version-1 nsportal scenario document")
    space = StateActionSpace(doc["n_states"], doc["n_actions"], doc["horizon"], doc.get("initial_state", 0))
    models = []
    for m in doc["models"]:
        if "phi" in m:
            models.append(kernel_from_factors(np.array(m["phi"]), np.array(m["mu"])))
        else:
            models.append(LowRankKernel(np.array(m["P"])))
    rewards = [np.array(r, dtype=float) for r in doc["rewards"]]
    rounds = doc["rounds"]
    return ScenarioSequence(
        space, int(doc["dim"]),
        tuple(models[e["model"]] for e in rounds),
        tuple(rewards[e["reward"]] for e in rounds),
        tuple(tuple(e["member"]) if e["member"] is not None else None for e in rounds),
        doc.get("drift_kind", "stationary"), dict(doc.get("metadata", {})))


def save_scenario(scenario: ScenarioSequence, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario)))


def load_scenario(path) -> ScenarioSequence:
    return scenario_from_dict(json.loads(Path(path).read_text()))


def scenario_from_tables(kernels: Sequence[LowRankKernel], rewards: Sequence[np.ndarray],
                         drift_kind: str = "stationary", initial_state: int = 0) -> ScenarioSequence:
    """Wrap hand-built per-round tables (used by tests and small studies)."""
    H, S, A, _ = kernels[0].P.shape
    dim = kernels[0].phi.shape[-1] if kernels[0].phi is not None else 0
    return ScenarioSequence(StateActionSpace(S, A, H, initial_state), dim, tuple(kernels),
                            tuple(np.asarray(r, dtype=float) for r in rewards),
                            tuple(None for _ in kernels), drift_kind, {})
