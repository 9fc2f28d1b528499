"""
Shared fixtures for the monitor test suites
"""

import numpy as np
import pytest

from app.monitoring.markov import lending_chain, new_chain
from app.monitoring.states import StateSpace

FOUR_STATE_ROWS = [
    [0.1, 0.4, 0.3, 0.2],
    [0.3, 0.2, 0.25, 0.25],
    [0.5, 0.1, 0.1, 0.3],
    [0.25, 0.25, 0.25, 0.25],
]


@pytest.fixture
def two_states():
    """Unnamed two-state space."""
    return StateSpace(2)


@pytest.fixture
def two_state_chain():
    """The small running example: M_11=0.2, M_12=0.8, M_21=0.4, M_22=0.6."""
    return new_chain([[0.2, 0.8], [0.4, 0.6]], initial=1)


@pytest.fixture
def four_state_chain():
    """Fully connected 4-state chain used by the unbiasedness suites."""
    return new_chain(FOUR_STATE_ROWS, initial=1)


@pytest.fixture
def lending():
    """Lending chain with the default reconstructed probabilities."""
    return lending_chain()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_stochastic_matrix(rng: np.random.Generator, n: int) -> np.ndarray:
    """Dense row-stochastic matrix with entries bounded away from 0."""
    rows = rng.dirichlet(np.full(n, 2.0), size=n)
    return rows


def build_random_pse(rng: np.random.Generator, n: int, budget: int, division: bool = False):
    """Random tree with ``budget`` operators over states 1..n."""
    from app.monitoring.pse import Add, Const, Inv, Mul, Sub, Var

    def leaf():
        if rng.random() < 0.2:
            return Const(float(rng.choice([0.5, 1.0, 2.0])))
        return Var(int(rng.integers(1, n + 1)), int(rng.integers(1, n + 1)))

    def build(ops: int):
        if ops == 0:
            return leaf()
        if division and rng.random() < 0.2:
            body = Var(int(rng.integers(1, n + 1)), int(rng.integers(1, n + 1)))
            return Mul(build(ops - 1), Inv(body), implicit=True)
        left_ops = int(rng.integers(0, ops))
        kind = rng.choice(["add", "sub", "mul"])
        left, right = build(left_ops), build(ops - 1 - left_ops)
        if kind == "add":
            return Add(left, right)
        if kind == "sub":
            return Sub(left, right)
        return Mul(left, right)

    return build(budget)


@pytest.fixture
def random_pse():
    """Factory for random expression trees."""
    return build_random_pse


@pytest.fixture
def random_matrix():
    """Factory for random row-stochastic matrices."""
    return random_stochastic_matrix
