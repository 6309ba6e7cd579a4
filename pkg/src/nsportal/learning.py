"""Model estimation and exploration-policy update over a finite low-rank class.

One call to :func:`e2u` per round: MLE per step, empirical covariance and
elliptical bonus from the windowed data, then the greedy policy for the
truncated bonus value function.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg

from .errors import InvalidDelta, NoValidCandidate, ShapeMismatch, SingularCovariance
from .mdp import ValueTables, kernel_violations, tv_distance


# --------------------------------------------------------------------------
# model class

@dataclass(frozen=True, eq=False)
class ModelClass:
    """Finite candidate sets of representations and embeddings.

    phis   (n_phi, H, S, A, d)
    mus    (n_psi, H, S, d)
    kernels (n_phi, n_psi, H, S, A, S) with kernels[i, j] = <phis[i], mus[j]>
    valid  (n_phi, n_psi): the pair is a valid kernel at every step and meets B / p_min
    """

    phis: np.ndarray
    mus: np.ndarray
    kernels: np.ndarray
    valid: np.ndarray
    B: Optional[float] = None
    p_min: Optional[float] = None

    @classmethod
    def from_factors(cls, phis, mus, B: Optional[float] = None, p_min: Optional[float] = None) -> "ModelClass":
        phis = np.asarray(phis, dtype=float)
        mus = np.asarray(mus, dtype=float)
        if phis.ndim != 5 or mus.ndim != 4 or phis.shape[1:3] != mus.shape[1:3] or phis.shape[-1] != mus.shape[-1]:
            raise ShapeMismatch(f"incompatible candidate shapes {phis.shape} / {mus.shape}")
        kernels = np.einsum("ihsad,jhtd->ijhsat", phis, mus)
        valid = np.zeros(kernels.shape[:2], dtype=bool)
        for i in range(kernels.shape[0]):
            for j in range(kernels.shape[1]):
                valid[i, j] = not kernel_violations(kernels[i, j], B, p_min)
        if not valid.any():
            raise NoValidCandidate("model class has no valid (phi, mu) pair")
        return cls(phis, mus, kernels, valid, B, p_min)

    @property
    def sizes(self) -> tuple[int, int]:
        return self.phis.shape[0], self.mus.shape[0]

    @property
    def dim(self) -> int:
        return self.phis.shape[-1]

    @property
    def shape(self) -> tuple[int, int, int]:
        """(H, S, A)"""
        return self.phis.shape[1:4]

    def kernel(self, i: int, j: int) -> np.ndarray:
        return self.kernels[i, j]

    def log_kernels(self) -> np.ndarray:
        # cached lazily; the dataclass is frozen so bypass __setattr__
        cached = self.__dict__.get("_logk")
        if cached is None:
            with np.errstate(divide="ignore"):
                cached = np.log(np.clip(self.kernels, 0.0, None))
            n_phi, n_psi, H = self.kernels.shape[:3]
            cached = cached.reshape(n_phi, n_psi, H, -1)
            object.__setattr__(self, "_logk", cached)
        return cached


def random_model_class(n_phi: int, n_psi: int, S: int, A: int, H: int, d: int,
                       rng: np.random.Generator, floor: float = 0.3,
                       phi_concentration: float = 0.5, mu_concentration: float = 1.0) -> ModelClass:
    """Mixture-form class: every pair is a valid kernel by construction.

    Each phi_h(s, a) lies on the d-simplex and each embedding coordinate
    mu_h(., i) is a distribution over next states with at least ``floor / S``
    mass per state, so P = sum_i phi_i mu_i is a distribution bounded below by
    ``floor / S`` (reachability) and above by 1.
    """
    phis = rng.dirichlet(np.full(d, phi_concentration), size=(n_phi, H, S, A))
    raw = rng.dirichlet(np.full(S, mu_concentration), size=(n_psi, H, d))  # (n_psi, H, d, S)
    mus = np.swapaxes((1.0 - floor) * raw + floor / S, 2, 3)
    kernels = np.einsum("ihsad,jhtd->ijhsat", phis, mus)
    B = float(kernels.max())
    return ModelClass.from_factors(phis, mus, B=B + 1e-12, p_min=floor / S - 1e-12)


# --------------------------------------------------------------------------
# confidence schedule

@dataclass(frozen=True)
class ScheduleConstants:
    zeta: float
    lam: float
    alpha_tilde: float
    delta: float
    c_lambda: float

    @property
    def alpha(self) -> float:
        return self.alpha_tilde / 5.0


def schedule_constants(k: int, W: int, class_sizes: tuple[int, int], H: int, A: int, d: int,
                       delta: float, K: int, c_lambda: float = 1.0) -> ScheduleConstants:
    """zeta, lambda and alpha~ for round k with window W (natural logs)."""
    if not 0.0 < delta < 1.0:
        raise InvalidDelta(f"delta must lie in (0, 1), got {delta}")
    if k < 1 or W < 1:
        raise ValueError("k and W must be >= 1")
    n_phi, n_psi = class_sizes
    zeta = 2.0 * np.log(2.0 * n_phi * n_psi * k * H / delta) / W
    lam = c_lambda * d * np.log(n_phi * min(k, W) * K * H / delta)
    alpha_tilde = 5.0 * np.sqrt(2.0 * W * A * zeta + lam * d)
    return ScheduleConstants(float(zeta), float(lam), float(alpha_tilde), delta, c_lambda)


# --------------------------------------------------------------------------
# per-step estimation primitives

class MLEResult(NamedTuple):
    phi_index: int
    mu_index: int
    loglik: float


def transition_counts(transitions, S: int, A: int) -> np.ndarray:
    counts = np.zeros((S, A, S), dtype=np.int64)
    arr = np.asarray(transitions, dtype=np.int64).reshape(-1, 3)
    np.add.at(counts, (arr[:, 0], arr[:, 1], arr[:, 2]), 1)
    return counts


def mle_scores(model_class: ModelClass, h: int, counts: np.ndarray) -> np.ndarray:
    """Log-likelihood of every (phi, mu) pair; invalid pairs score NaN."""
    flat = counts.reshape(-1)
    idx = np.flatnonzero(flat)
    logk = model_class.log_kernels()[:, :, h, :]
    scores = logk[:, :, idx] @ flat[idx].astype(float) if idx.size else np.zeros(model_class.valid.shape)
    return np.where(model_class.valid, scores, np.nan)


def mle_fit(model_class: ModelClass, h: int, transitions=None, counts: Optional[np.ndarray] = None) -> MLEResult:
    """Exact maximum likelihood over the valid pairs for step ``h`` (0-based).

    Ties, including the all-(-inf) case, go to the lexicographically lowest pair.
    """
    _, S, A = model_class.shape
    if counts is None:
        counts = transition_counts(transitions if transitions is not None else [], S, A)
    scores = mle_scores(model_class, h, counts)
    valid = model_class.valid
    if not valid.any():
        raise NoValidCandidate("no valid candidate pair")
    best = np.nanmax(scores)
    winners = valid & (scores == best) if np.isfinite(best) else valid
    i, j = np.argwhere(winners)[0]
    return MLEResult(int(i), int(j), float(scores[i, j]))


def empirical_covariance(features: np.ndarray, lam: float) -> np.ndarray:
    """sum_n x_n x_n^T + lam * I for the rows of ``features`` (n, d)."""
    X = np.asarray(features, dtype=float)
    d = X.shape[-1]
    return X.T @ X + lam * np.eye(d)


def bonus(phi_h: np.ndarray, U: np.ndarray, alpha_tilde: float) -> np.ndarray:
    """min{alpha~ * ||phi_h(s, a)||_{U^-1}, 1} via a Cholesky solve."""
    try:
        factor = scipy.linalg.cho_factor(U, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc)) from exc
    S, A, d = phi_h.shape
    X = phi_h.reshape(-1, d)
    quad = np.einsum("nd,nd->n", X, scipy.linalg.cho_solve(factor, X.T).T)
    width = np.sqrt(np.clip(quad, 0.0, None))
    return np.minimum(alpha_tilde * width, 1.0).reshape(S, A)


def truncated_value_dp(P: np.ndarray, b: np.ndarray, policy: np.ndarray) -> ValueTables:
    """Q = min{1, b + P V_next}, V = E_pi[Q], backward from V_{H+1} = 0."""
    P = np.asarray(P, dtype=float)
    if b.shape != P.shape[:3] or policy.shape != P.shape[:3]:
        raise ShapeMismatch(f"bonus {b.shape} / policy {policy.shape} vs kernel {P.shape}")
    H, S, A, _ = P.shape
    V = np.zeros((H + 1, S))
    Q = np.empty((H, S, A))
    for h in range(H - 1, -1, -1):
        Q[h] = np.minimum(1.0, b[h] + P[h] @ V[h + 1])
        V[h] = (policy[h] * Q[h]).sum(axis=1)
    return ValueTables(V, Q)


def greedy_exploration_policy(P: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, ValueTables]:
    """Deterministic maximiser of the truncated bonus value (lowest index on ties)."""
    H, S, A, _ = P.shape
    V = np.zeros((H + 1, S))
    Q = np.empty((H, S, A))
    pi = np.zeros((H, S, A))
    rows = np.arange(S)
    for h in range(H - 1, -1, -1):
        Q[h] = np.minimum(1.0, b[h] + P[h] @ V[h + 1])
        best = Q[h].argmax(axis=1)
        pi[h, rows, best] = 1.0
        V[h] = Q[h, rows, best]
    return pi, ValueTables(V, Q)


# --------------------------------------------------------------------------
# windowed datasets

class WindowDataset:
    """Per-step FIFO transition windows keyed by round index.

    ``mle[h]`` holds (s_h, a_h, s_{h+1}) from sub-episode h, ``cov[h]`` holds the
    same-step triple from sub-episode h+1. Running counts of ``mle[h]`` are kept
    so the likelihood never needs a pass over the raw data.
    """

    def __init__(self, H: int, S: int, A: int, W: int):
        if W < 1:
            raise ValueError("window must be >= 1")
        self.H, self.S, self.A, self.W = H, S, A, W
        self.mle: list[deque] = [deque() for _ in range(H)]
        self.cov: list[deque] = [deque() for _ in range(H)]
        self.mle_counts = np.zeros((H, S, A, S), dtype=np.int64)

    def add(self, k: int, h: int, first, second) -> None:
        """Record sub-episode h (0-based) of round k; ``first`` is None for h = 0."""
        s, a, s2 = second
        self.mle[h].append((k, s, a, s2))
        self.mle_counts[h, s, a, s2] += 1
        if first is not None:
            self.cov[h - 1].append((k,) + tuple(first))
        if h == self.H - 1:
            # nothing produces the step-H covariance triple; reuse sub-episode H's own
            self.cov[h].append((k, s, a, s2))

    def evict(self, k: int) -> None:
        oldest = max(1, k - self.W + 1)
        for h in range(self.H):
            q = self.mle[h]
            while q and q[0][0] < oldest:
                _, s, a, s2 = q.popleft()
                self.mle_counts[h, s, a, s2] -= 1
            c = self.cov[h]
            while c and c[0][0] < oldest:
                c.popleft()

    def rounds(self, h: int, which: str = "mle") -> set[int]:
        q = self.mle[h] if which == "mle" else self.cov[h]
        return {e[0] for e in q}

    def cov_pairs(self, h: int) -> np.ndarray:
        if not self.cov[h]:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array([(e[1], e[2]) for e in self.cov[h]], dtype=np.int64)

    def __len__(self) -> int:
        return max(len(q) for q in self.mle)


def update_windows(data: WindowDataset, k: int, round_triples, W: Optional[int] = None) -> None:
    """Append one round's sub-episode triples and drop rounds older than k - W + 1."""
    if W is not None and W != data.W:
        data.W = W
    for h, (first, second) in enumerate(round_triples):
        data.add(k, h, first, second)
    data.evict(k)


# --------------------------------------------------------------------------
# E2U

@dataclass(frozen=True)
class EstimatedModel:
    phi_index: np.ndarray  # (H,)
    mu_index: np.ndarray   # (H,)
    P: np.ndarray          # (H, S, A, S)
    U: np.ndarray          # (H, d, d)
    bonus: np.ndarray      # (H, S, A)
    loglik: np.ndarray     # (H,)

    def tv_error(self, P_true: np.ndarray) -> np.ndarray:
        return tv_distance(self.P, P_true)


def e2u(k: int, data: WindowDataset, model_class: ModelClass,
        constants: ScheduleConstants) -> tuple[EstimatedModel, np.ndarray, ValueTables]:
    """Estimate the round-k model and the exploration policy for round k + 1."""
    H, S, A = model_class.shape
    d = model_class.dim
    phi_idx = np.empty(H, dtype=np.int64)
    mu_idx = np.empty(H, dtype=np.int64)
    loglik = np.empty(H)
    P_hat = np.empty((H, S, A, S))
    U = np.empty((H, d, d))
    b = np.empty((H, S, A))
    for h in range(H):
        fit = mle_fit(model_class, h, counts=data.mle_counts[h])
        phi_idx[h], mu_idx[h], loglik[h] = fit
        P_hat[h] = model_class.kernels[fit.phi_index, fit.mu_index, h]
        phi_h = model_class.phis[fit.phi_index, h]
        pairs = data.cov_pairs(h)
        feats = phi_h[pairs[:, 0], pairs[:, 1]] if len(pairs) else np.zeros((0, d))
        U[h] = empirical_covariance(feats, constants.lam)
        b[h] = bonus(phi_h, U[h], constants.alpha_tilde)
    pi_explore, values = greedy_exploration_policy(P_hat, b)
    return EstimatedModel(phi_idx, mu_idx, P_hat, U, b, loglik), pi_explore, values
