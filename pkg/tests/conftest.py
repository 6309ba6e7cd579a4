import itertools

import numpy as np
import pytest

from nsportal.learning import random_model_class
from nsportal.rng import stream


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_class():
    """|Phi|=3, |Psi|=4, S=3, A=2, H=3, d=2."""
    return random_model_class(3, 4, 3, 2, 3, 2, stream(7, "class"))


def random_kernel(rng, H, S, A):
    return rng.dirichlet(np.ones(S), size=(H, S, A))


def deterministic_policies(H, S, A):
    """Every deterministic Markov policy as an (H, S, A) one-hot table."""
    for choice in itertools.product(range(A), repeat=H * S):
        pi = np.zeros((H, S, A))
        c = np.array(choice).reshape(H, S)
        for h in range(H):
            pi[h, np.arange(S), c[h]] = 1.0
        yield pi


def enumerate_value(P, r, pi, s0=0):
    """V_1(s0) as a sum over every trajectory, weighted by its probability."""
    H, S, A, _ = P.shape
    total = 0.0
    for states in itertools.product(range(S), repeat=H):
        if states[0] != s0:
            continue
        for actions in itertools.product(range(A), repeat=H):
            prob, ret = 1.0, 0.0
            for h in range(H):
                prob *= pi[h, states[h], actions[h]]
                ret += r[h, states[h], actions[h]]
                if h + 1 < H:
                    prob *= P[h, states[h], actions[h], states[h + 1]]
            total += prob * ret
    return total


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
