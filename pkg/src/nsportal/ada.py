"""Ada-PORTAL: EXP3-P over a (window, restart period) grid, one PORTAL run per block."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .env import Environment
from .errors import RewardOutOfRange
from .learning import ModelClass
from .portal import PortalAgent, PortalHyperparams, RunLog, _record


def _floor_power(base: float, exponent: float) -> int:
    # floor(base ** exponent) that survives 1000 ** (1/3) == 9.999999999999998
    v = base ** exponent
    r = round(v)
    return int(r) if abs(v - r) < 1e-9 * max(1.0, v) else math.floor(v)


def _clamp(x: int, K: int) -> int:
    return min(K, max(1, x))


def _grid(M_: int, J_: int) -> list[int]:
    if J_ == 0:
        return sorted({1, M_})
    return [_floor_power(M_, j / J_) for j in range(J_ + 1)]


@dataclass(frozen=True)
class FeasibleGrids:
    M_W: int
    M_tau: int
    M: int
    J_W: int
    J_tau: int
    W_grid: tuple[int, ...]
    tau_grid: tuple[int, ...]

    @property
    def arms(self) -> list[tuple[int, int]]:
        """(j, l) index pairs in row-major order."""
        return [(j, l) for j in range(len(self.W_grid)) for l in range(len(self.tau_grid))]

    @property
    def n_arms(self) -> int:
        return len(self.W_grid) * len(self.tau_grid)

    def arm_values(self, arm: int) -> tuple[int, int]:
        j, l = self.arms[arm]
        return self.W_grid[j], self.tau_grid[l]


def feasible_sets(d: int, H: int, K: int) -> FeasibleGrids:
    """Block length and the geometric (W, tau) grids, with natural logs."""
    M_W = _clamp(_floor_power(d * H * K, 1 / 3), K)
    M_tau = _clamp(_floor_power(K, 2 / 3), K)
    M = _clamp(_floor_power(d * H * K * K, 1 / 3), K)
    J_W = int(math.floor(math.log(M_W)))
    J_tau = int(math.floor(math.log(M_tau)))
    return FeasibleGrids(M_W, M_tau, M, J_W, J_tau, tuple(_grid(M_W, J_W)), tuple(_grid(M_tau, J_tau)))


@dataclass
class Exp3pState:
    alpha: float
    beta: float
    gamma: float
    q: np.ndarray
    i: int = 1

    @property
    def J(self) -> int:
        return len(self.q)


def exp3p_init(J: int, n_blocks: int) -> Exp3pState:
    """EXP3-P constants with J equal to the number of arms; gamma is capped at 1."""
    lnJ = math.log(J) if J > 1 else 0.0
    alpha = 0.95 * math.sqrt(lnJ / (J * n_blocks))
    beta = math.sqrt(lnJ / (J * n_blocks))
    gamma = min(1.0, 1.05 * math.sqrt(J * lnJ / n_blocks))
    return Exp3pState(alpha, beta, gamma, np.zeros(J))


def exp3p_distribution(state: Exp3pState) -> np.ndarray:
    z = state.alpha * state.q
    w = np.exp(z - z.max())
    return (1.0 - state.gamma) * w / w.sum() + state.gamma / state.J


def exp3p_update(state: Exp3pState, chosen: int, R: float, M_len: int, u: np.ndarray) -> None:
    """q_a += (beta + 1{a = chosen} R / M_len) / u_a, in place."""
    if not 0.0 <= R <= M_len:
        raise RewardOutOfRange(f"block reward {R} outside [0, {M_len}]")
    gain = np.full(state.J, state.beta)
    gain[chosen] += R / M_len
    state.q = state.q + gain / u
    state.i += 1


def _entropy(u: np.ndarray) -> float:
    nz = u[u > 0]
    return float(-(nz * np.log(nz)).sum())


@dataclass
class AdaConfig:
    delta: float = 0.1
    c_lambda: float = 1.0
    n_eval: int = 1
    eta: Optional[float] = None
    fixed_arm: Optional[int] = None  # pin every block to one arm (comparator runs)
    grids: Optional[FeasibleGrids] = field(default=None)


def run_ada_portal(env: Environment, model_class: ModelClass, K: int, rng: np.random.Generator,
                   config: Optional[AdaConfig] = None, seed: Optional[int] = None) -> RunLog:
    """Blockwise PORTAL whose (W, tau) per block is drawn by EXP3-P.

    ``rng`` drives only the arm draws; all episode randomness lives in ``env``.
    """
    cfg = config or AdaConfig()
    if env.K < K:
        raise ValueError(f"environment has {env.K} rounds, need {K}")
    H, _, _ = model_class.shape
    grids = cfg.grids or feasible_sets(model_class.dim, H, K)
    n_blocks = math.ceil(K / grids.M)
    state = exp3p_init(grids.n_arms, n_blocks)
    log = RunLog(seed=seed)
    t0 = time.perf_counter()
    for i in range(1, n_blocks + 1):
        u = exp3p_distribution(state)
        arm = int(rng.choice(grids.n_arms, p=u))
        if cfg.fixed_arm is not None:
            arm = cfg.fixed_arm
        W_i, tau_i = grids.arm_values(arm)
        first, last = (i - 1) * grids.M + 1, min(i * grids.M, K)
        M_len = last - first + 1
        # fresh PORTAL per block; its horizon is the block itself
        hyper = PortalHyperparams(K=M_len, W=min(W_i, M_len), tau=min(tau_i, M_len), eta=cfg.eta,
                                  delta=cfg.delta, c_lambda=cfg.c_lambda, n_eval=cfg.n_eval)
        agent = PortalAgent(model_class, hyper)
        R = 0.0
        for k in range(first, last + 1):
            rec = agent.play_round(env.begin_round(k))
            _record(log, rec, W_i, tau_i, agent.eta)
            R += float(np.mean(rec["returns"]))
            log.block.append(i)
            log.u_entropy.append(_entropy(u))
        log.R_block.extend([R] * M_len)
        log.distributions.append(u)
        log.gammas.append(state.gamma)
        exp3p_update(state, arm, R, M_len, u)
    env.close()
    log.wall_clock = time.perf_counter() - t0
    return log
