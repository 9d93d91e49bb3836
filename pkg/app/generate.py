"""Autoregressive sampling from a reconstructed joint over a sliding window."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
import math

from loguru import logger
import numpy as np

from app.constraints import Method
from app.errors import ArgumentError
from app.prob_core import ConditionalSlice, sample
from app.solver import SolveResult, augmented_conditional


def generation_order(method: Method, full_vars: Sequence[int]) -> tuple[int, ...]:
    """Variables of the window from oldest to newest.

    MEP[T] and GMEP predict variable 1 from larger labels; SMEP and custom systems read
    their labels left to right.
    """
    if Method(method) in (Method.MEP_T, Method.GMEP):
        return tuple(sorted(full_vars, reverse=True))
    return tuple(sorted(full_vars))


@dataclass(frozen=True)
class GeneratedSequence:
    symbols: tuple[int, ...]
    logprobs: tuple[float, ...]
    window: tuple[int, ...]
    temperature: float
    seed: int

    @property
    def total_logprob(self) -> float:
        return math.fsum(self.logprobs)


def generate_sequence(
    result: SolveResult,
    length: int,
    temperature: float = 1.0,
    seed: int = 0,
    order: Sequence[int] | None = None,
) -> GeneratedSequence:
    """Sample ``length`` symbols, each conditioned on as many previous symbols as fit.

    ``logprobs`` holds the untempered log-probability of each chosen symbol.

    Raises:
        ArgumentError: If ``length`` is below 1 or ``order`` is not a permutation of the
            joint's variables.

    """
    if length < 1:
        raise ArgumentError(f"length must be positive, got {length}")
    window = (
        generation_order(result.method, result.joint.vars) if order is None else tuple(order)
    )
    if sorted(window) != sorted(result.joint.vars):
        raise ArgumentError(f"window {window} is not an ordering of {result.joint.vars}")

    rng = np.random.default_rng(seed)
    target = window[-1]
    cache: dict[tuple[int, ...], ConditionalSlice] = {}
    symbols: list[int] = []
    logprobs: list[float] = []
    for _ in range(length):
        depth = min(len(symbols), len(window) - 1)
        context = tuple(symbols[len(symbols) - depth :]) if depth else ()
        slice_ = cache.get(context)
        if slice_ is None:
            given = dict(zip(window[len(window) - 1 - depth : -1], context, strict=True))
            slice_ = augmented_conditional(result, target, given)
            cache[context] = slice_
        symbol = sample(slice_, temperature, rng)
        symbols.append(symbol)
        p = slice_.probs[symbol]
        logprobs.append(math.log(p) if p > 0 else -math.inf)

    logger.debug(f"Generated {length} symbols over window {list(window)}")
    return GeneratedSequence(tuple(symbols), tuple(logprobs), window, temperature, seed)
