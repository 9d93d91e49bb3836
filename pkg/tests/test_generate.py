"""Tests for sliding-window generation from a reconstructed joint."""

from collections.abc import Callable
import math

from loguru import logger
import numpy as np
import pytest

from app.constraints import Method, chain_pair_system, reduce_redundancy
from app.errors import ArgumentError
from app.generate import generate_sequence, generation_order
from app.prob_core import FloatArray, JointTable, marginalize
from app.solver import SolveResult, solve


def solved(truth: JointTable) -> SolveResult:
    system = chain_pair_system(truth)
    return solve(system, reduce_redundancy(system))


def test_generation_order() -> None:
    assert generation_order(Method.MEP_T, (1, 2, 3)) == (3, 2, 1)
    assert generation_order(Method.GMEP, (1, 2, 3, 4)) == (4, 3, 2, 1)
    assert generation_order(Method.SMEP, (-1, 0, 1)) == (-1, 0, 1)
    assert generation_order(Method.CUSTOM, (3, 1, 2)) == (1, 2, 3)


def test_seeded_generation_repeats(markov_truth: JointTable) -> None:
    result = solved(markov_truth)
    first = generate_sequence(result, 50, seed=4)
    second = generate_sequence(result, 50, seed=4)
    assert first.symbols == second.symbols
    assert first.logprobs == second.logprobs
    assert first.window == (1, 2, 3)
    assert len(first.symbols) == 50


def test_greedy_generation(
    markov_chain: Callable[[FloatArray, FloatArray, int], JointTable],
) -> None:
    truth = markov_chain([0.7, 0.3], [[0.99, 0.01], [0.02, 0.98]], 3)
    result = solved(truth)
    sequence = generate_sequence(result, 20, temperature=1e-9)
    assert sequence.symbols == (0,) * 20
    first = marginalize(result.joint, [3]).probs[0]
    assert sequence.logprobs[0] == pytest.approx(math.log(first), abs=1e-9)
    assert sequence.logprobs[5] == pytest.approx(math.log(0.99), abs=1e-8)
    assert sequence.total_logprob == pytest.approx(math.fsum(sequence.logprobs))


def test_logprobs_ignore_temperature(markov_truth: JointTable) -> None:
    result = solved(markov_truth)
    hot = generate_sequence(result, 30, temperature=3.0, seed=1)
    for logprob in hot.logprobs[2:]:
        assert any(
            logprob == pytest.approx(math.log(p), abs=1e-8) for p in (0.9, 0.1, 0.2, 0.8)
        )


def test_explicit_window(markov_truth: JointTable) -> None:
    result = solved(markov_truth)
    sequence = generate_sequence(result, 5, seed=2, order=(3, 2, 1))
    assert sequence.window == (3, 2, 1)
    with pytest.raises(ArgumentError):
        generate_sequence(result, 5, order=(1, 2))


def test_length_must_be_positive(markov_truth: JointTable) -> None:
    with pytest.raises(ArgumentError):
        generate_sequence(solved(markov_truth), 0)


@pytest.mark.slow
def test_bigram_frequencies(markov_truth: JointTable, transition: FloatArray) -> None:
    sequence = generate_sequence(solved(markov_truth), 100_000, seed=7)
    symbols = np.array(sequence.symbols)
    counts = np.zeros((2, 2))
    np.add.at(counts, (symbols[1:-1], symbols[2:]), 1)
    freq = counts / counts.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(freq, transition, atol=0.01)
    logger.info(f"Bigram frequencies {freq.tolist()}")
