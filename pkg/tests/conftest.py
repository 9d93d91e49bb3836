"""pytest configuration and shared joints for the maximum-entropy tests."""

from collections.abc import Callable
from pathlib import Path

from _pytest.config import Config
from loguru import logger
import numpy as np
import pytest

from app.prob_core import Alphabet, FloatArray, JointTable

# Configure test logging
test_log_path = Path(__file__).parent / "test_logs" / "test.log"
test_log_path.parent.mkdir(exist_ok=True)
logger.add(test_log_path, rotation="10 MB", retention="1 week")

TRANSITION = np.array([[0.9, 0.1], [0.2, 0.8]])
INITIAL = np.array([0.5, 0.5])


def pytest_configure(config: Config) -> None:
    """Configure pytest with custom markers."""
    config.addinivalue_line(
        "markers", "slow: marks tests as slow (deselect with '-m \"not slow\"')"
    )
    config.addinivalue_line("markers", "integration: marks tests as integration tests")


def markov_probs(initial: FloatArray, transition: FloatArray, length: int) -> FloatArray:
    """Joint table of a homogeneous first-order chain.

    Parameters
    ----------
    initial : FloatArray
        Distribution of the first variable.
    transition : FloatArray
        Row-stochastic transition matrix.
    length : int
        Number of variables.

    Returns
    -------
    FloatArray
        Array with one axis per variable, first variable first.

    """
    probs = np.asarray(initial, dtype=np.float64)
    for _ in range(length - 1):
        probs = probs[..., np.newaxis] * transition[(np.newaxis,) * (probs.ndim - 1)]
    return probs


@pytest.fixture
def markov_truth() -> JointTable:
    """Two-state chain over variables 1, 2, 3.

    Returns
    -------
    JointTable
        ``p(x1) p(x2 | x1) p(x3 | x2)`` with a uniform start.

    """
    return JointTable((1, 2, 3), Alphabet(2), markov_probs(INITIAL, TRANSITION, 3))


@pytest.fixture
def copy_joint() -> JointTable:
    """Three binary variables that always agree.

    Returns
    -------
    JointTable
        Mass 1/2 on 000 and on 111.

    """
    probs = np.zeros((2, 2, 2))
    probs[0, 0, 0] = probs[1, 1, 1] = 0.5
    return JointTable((1, 2, 3), Alphabet(2), probs)


@pytest.fixture
def transition() -> FloatArray:
    """Transition matrix of ``markov_truth``.

    Returns
    -------
    FloatArray
        Rows indexed by the previous symbol.

    """
    return TRANSITION.copy()


@pytest.fixture
def markov_chain() -> Callable[[FloatArray, FloatArray, int], JointTable]:
    """Factory for joints of first-order chains of any length."""

    def build(initial: FloatArray, transition: FloatArray, length: int) -> JointTable:
        probs = markov_probs(np.asarray(initial), np.asarray(transition), length)
        return JointTable(tuple(range(1, length + 1)), Alphabet(len(initial)), probs)

    return build
