"""Finite episodic low-rank MDPs: kernels, exact planning, evaluation, sampling.

Array conventions used throughout the package (steps are 0-based internally):

    phi     (H, S, A, d)   representation phi_h(s, a)
    mu      (H, S, d)      embedding mu_h(s')
    P       (H, S, A, S)   kernel P_h(s' | s, a)
    reward  (H, S, A)      r_h(s, a)
    policy  (H, S, A)      pi_h(a | s)
    V       (H + 1, S)     V[H] is the zero terminal row
    Q       (H, S, A)
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import InvalidStopStep, KernelValidationError, ShapeMismatch, Violation

log = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-12
EMBEDDING_ENUM_LIMIT = 12


@dataclass(frozen=True)
class StateActionSpace:
    n_states: int
    n_actions: int
    horizon: int
    initial_state: int = 0

    def __post_init__(self):
        if min(self.n_states, self.n_actions, self.horizon) < 1:
            raise ValueError("n_states, n_actions and horizon must all be >= 1")
        if not 0 <= self.initial_state < self.n_states:
            raise ValueError("initial_state out of range")


@dataclass(frozen=True)
class LowRankKernel:
    """Dense kernel tables together with the factors that produced them."""

    P: np.ndarray
    phi: Optional[np.ndarray] = None
    mu: Optional[np.ndarray] = None

    @property
    def horizon(self) -> int:
        return self.P.shape[0]

    @property
    def n_states(self) -> int:
        return self.P.shape[1]

    @property
    def n_actions(self) -> int:
        return self.P.shape[2]


class ValueTables(NamedTuple):
    V: np.ndarray
    Q: np.ndarray


class Trajectory(NamedTuple):
    states: np.ndarray   # s_1 .. s_{T+1}
    actions: np.ndarray  # a_1 .. a_T


def _kernel_array(P) -> np.ndarray:
    arr = P.P if isinstance(P, LowRankKernel) else np.asarray(P, dtype=float)
    if arr.ndim != 4 or arr.shape[1] != arr.shape[3]:
        raise ShapeMismatch(f"kernel must have shape (H, S, A, S), got {arr.shape}")
    return arr


def _check_tables(P: np.ndarray, **tables: np.ndarray) -> None:
    H, S, A, _ = P.shape
    for name, t in tables.items():
        if t is not None and t.shape != (H, S, A):
            raise ShapeMismatch(f"{name} has shape {t.shape}, expected {(H, S, A)}")


def embedding_norm_bound(mu_h: np.ndarray) -> Optional[float]:
    """Largest ||sum_s' mu_h(s') g(s')||_2 over binary g, or None when |S| is too big.

    The norm is convex in g, so the maximum over g: S -> [0, 1] sits on a vertex.
    """
    S = mu_h.shape[0]
    if S > EMBEDDING_ENUM_LIMIT:
        return None
    G = np.array(list(itertools.product((0.0, 1.0), repeat=S)))
    return float(np.linalg.norm(G @ mu_h, axis=1).max())


def kernel_violations(P: np.ndarray, B: Optional[float] = None, p_min: Optional[float] = None,
                      tol: float = SIMPLEX_TOL) -> list[Violation]:
    out = []
    H, S, A, _ = P.shape
    neg = np.argwhere((P < -tol).any(axis=3))
    out += [Violation("negative", int(h), int(s), int(a)) for h, s, a in neg]
    rows = np.abs(P.sum(axis=3) - 1.0) > tol
    out += [Violation("non_simplex", int(h), int(s), int(a)) for h, s, a in np.argwhere(rows)]
    if B is not None:
        bad = np.argwhere((P > B + tol).any(axis=3))
        out += [Violation("density_bound", int(h), int(s), int(a), f"> {B}") for h, s, a in bad]
    if p_min is not None:
        bad = np.argwhere((P < p_min - tol).any(axis=3))
        out += [Violation("reachability", int(h), int(s), int(a), f"< {p_min}") for h, s, a in bad]
    return out


def kernel_from_factors(phi: np.ndarray, mu: np.ndarray, B: Optional[float] = None,
                        p_min: Optional[float] = None, check_embedding: bool = True) -> LowRankKernel:
    """Build P_h(s'|s,a) = <phi_h(s,a), mu_h(s')> and validate it.

    Raises KernelValidationError listing every violation found.
    """
    phi = np.asarray(phi, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if phi.ndim != 4 or mu.ndim != 3:
        raise ShapeMismatch("phi must be (H, S, A, d) and mu must be (H, S, d)")
    if phi.shape[0] != mu.shape[0] or phi.shape[3] != mu.shape[2] or phi.shape[1] != mu.shape[1]:
        raise ShapeMismatch(f"factor shapes disagree: phi {phi.shape}, mu {mu.shape}")
    P = np.einsum("hsad,htd->hsat", phi, mu)
    violations = kernel_violations(P, B, p_min)
    norms = np.linalg.norm(phi, axis=3)
    for h, s, a in np.argwhere(norms > 1.0 + 1e-12):
        violations.append(Violation("phi_norm", int(h), int(s), int(a)))
    if check_embedding:
        d = mu.shape[2]
        for h in range(mu.shape[0]):
            bound = embedding_norm_bound(mu[h])
            if bound is None:
                log.warning("embedding norm check skipped: |S|=%d > %d", mu.shape[1], EMBEDDING_ENUM_LIMIT)
                break
            if bound > np.sqrt(d) + 1e-12:
                violations.append(Violation("embedding_norm", h, detail=f"{bound:.4f} > sqrt(d)"))
    if violations:
        raise KernelValidationError(violations)
    return LowRankKernel(P=P, phi=phi, mu=mu)


def uniform_policy(H: int, S: int, A: int) -> np.ndarray:
    return np.full((H, S, A), 1.0 / A)


def validate_policy(pi: np.ndarray, tol: float = SIMPLEX_TOL) -> None:
    if (pi < 0).any() or np.abs(pi.sum(axis=2) - 1.0).max() > tol:
        raise ValueError("policy rows must be probability vectors")


def policy_evaluation(P, reward: np.ndarray, policy: np.ndarray) -> ValueTables:
    """Exact backward induction for V^pi and Q^pi."""
    P = _kernel_array(P)
    _check_tables(P, reward=reward, policy=policy)
    H, S, _, _ = P.shape
    V = np.zeros((H + 1, S))
    Q = np.empty_like(reward, dtype=float)
    for h in range(H - 1, -1, -1):
        Q[h] = reward[h] + P[h] @ V[h + 1]
        V[h] = (policy[h] * Q[h]).sum(axis=1)
    return ValueTables(V, Q)


def optimal_planning(P, reward: np.ndarray) -> tuple[np.ndarray, ValueTables]:
    """Greedy backward induction; ties go to the lowest action index."""
    P = _kernel_array(P)
    _check_tables(P, reward=reward)
    H, S, A, _ = P.shape
    V = np.zeros((H + 1, S))
    Q = np.empty((H, S, A))
    pi = np.zeros((H, S, A))
    for h in range(H - 1, -1, -1):
        Q[h] = reward[h] + P[h] @ V[h + 1]
        best = Q[h].argmax(axis=1)
        pi[h, np.arange(S), best] = 1.0
        V[h] = Q[h, np.arange(S), best]
    return pi, ValueTables(V, Q)


def state_distributions(P, policy: np.ndarray, initial_state: int = 0) -> np.ndarray:
    """d[h, s] = Pr(s_{h+1} = s) when running ``policy`` from the fixed start state."""
    P = _kernel_array(P)
    H, S, _, _ = P.shape
    d = np.zeros((H, S))
    d[0, initial_state] = 1.0
    for h in range(H - 1):
        d[h + 1] = np.einsum("s,sa,sat->t", d[h], policy[h], P[h])
    return d


def _draw(p: np.ndarray, rng: np.random.Generator) -> int:
    # inverse-CDF draw; much cheaper than Generator.choice for tiny vectors
    idx = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"))
    return min(idx, len(p) - 1)


def sample_episode(P, policy: np.ndarray, rng: np.random.Generator, stop_step: Optional[int] = None,
                   uniform_tail: int = 0, initial_state: int = 0) -> Trajectory:
    """Roll out one episode.

    With ``stop_step=None`` the full H-step episode follows ``policy``. Otherwise the
    policy acts for steps 1..stop_step, ``uniform_tail`` uniform actions follow, and
    the trajectory ends there. The state after step H is drawn from P_H, so the last
    transition of a full-length episode is always observed.
    """
    P = _kernel_array(P)
    H, S, A, _ = P.shape
    if uniform_tail not in (0, 1, 2):
        raise InvalidStopStep(f"uniform_tail must be 0, 1 or 2, got {uniform_tail}")
    if stop_step is None:
        if uniform_tail:
            raise InvalidStopStep("uniform_tail requires stop_step")
        n_policy, length = H, H
    else:
        if not 0 <= stop_step <= H or stop_step + uniform_tail > H:
            raise InvalidStopStep(f"stop_step={stop_step}, uniform_tail={uniform_tail} exceeds H={H}")
        n_policy, length = stop_step, stop_step + uniform_tail
    states = np.empty(length + 1, dtype=np.int64)
    actions = np.empty(length, dtype=np.int64)
    s = initial_state
    states[0] = s
    for h in range(length):
        if h < n_policy:
            a = _draw(policy[h, s], rng)
        else:
            a = int(rng.integers(A))
        s = _draw(P[h, s, a], rng)
        actions[h] = a
        states[h + 1] = s
    return Trajectory(states, actions)


def tv_distance(P1, P2) -> np.ndarray:
    """Per-(h, s, a) total-variation distance between two kernels."""
    P1, P2 = _kernel_array(P1), _kernel_array(P2)
    if P1.shape != P2.shape:
        raise ShapeMismatch(f"{P1.shape} vs {P2.shape}")
    return 0.5 * np.abs(P1 - P2).sum(axis=3)
