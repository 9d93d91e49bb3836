"""Order-n autoregressive chain models fitted exactly from a joint table."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum
import functools
import math

import numpy as np

from app.errors import ArgumentError, TableError
from app.prob_core import (
    Alphabet,
    FloatArray,
    JointTable,
    conditional_entropy,
    marginalize,
    reorder,
)

ROW_TOLERANCE = 1e-12


class ChainKind(StrEnum):
    """Named members of the chain family."""

    IND = "ind"
    MC = "mc"
    AMC = "amc"
    AUTO = "auto"


def chain_order(kind: ChainKind, length: int) -> int:
    """Context length used by ``kind`` on a sequence of ``length`` variables."""
    orders = {ChainKind.IND: 0, ChainKind.MC: 1, ChainKind.AMC: 2, ChainKind.AUTO: length - 1}
    order = orders[ChainKind(kind)]
    if order >= length:
        raise ArgumentError(f"{kind} needs more than {length} variables")
    return order


@functools.total_ordering
@dataclass(frozen=True)
class LogProbability:
    """Natural-log probability with an explicit impossible value.

    ``value`` is ``None`` for a zero-probability event; such values compare below every
    finite log-probability.
    """

    value: float | None

    @classmethod
    def impossible(cls) -> LogProbability:
        return cls(None)

    @property
    def is_impossible(self) -> bool:
        return self.value is None

    def as_float(self) -> float:
        return -math.inf if self.value is None else self.value

    def __lt__(self, other: object) -> bool:
        if not isinstance(other, LogProbability):
            return NotImplemented
        if self.value is None:
            return other.value is not None
        return other.value is not None and self.value < other.value


@dataclass(frozen=True, eq=False)
class ChainModel:
    """Factorized model ``prod_i p(x_i | x_{i-1}, ..., x_{i-n})``.

    Factor ``i`` has one axis per context variable (oldest first) followed by the axis of
    variable ``i``; contexts are truncated at the first variable.

    Attributes:
        order: Context length ``n`` (0 means independent factors).
        vars: Variable labels in sequence order.
        alphabet: Shared alphabet.
        factors: One conditional table per position.
        truth: The joint the model was fitted from, if any; used to weight contexts.

    """

    order: int
    vars: tuple[int, ...]
    alphabet: Alphabet
    factors: tuple[FloatArray, ...]
    truth: JointTable | None = None

    def __post_init__(self) -> None:
        if self.order < 0 or self.order >= max(len(self.vars), 1):
            raise ArgumentError(f"order {self.order} invalid for {len(self.vars)} variables")
        if len(self.factors) != len(self.vars):
            raise TableError("one factor per variable is required")
        size = self.alphabet.size
        frozen = []
        for i, factor in enumerate(self.factors):
            arr = np.array(factor, dtype=np.float64)
            expected = (size,) * (self.context_length(i) + 1)
            if arr.shape != expected:
                raise TableError(f"factor {i} has shape {arr.shape}, expected {expected}")
            if np.any(arr < 0) or np.any(np.abs(arr.sum(axis=-1) - 1.0) > ROW_TOLERANCE):
                raise TableError(f"factor {i} rows are not distributions")
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "factors", tuple(frozen))

    @property
    def length(self) -> int:
        return len(self.vars)

    def context_length(self, position: int) -> int:
        return min(self.order, position)

    def context_vars(self, position: int) -> tuple[int, ...]:
        return self.vars[position - self.context_length(position) : position]


def fit_chain(truth: JointTable, order: int) -> ChainModel:
    """Fit the order-``order`` chain whose factors are the exact conditionals of ``truth``.

    Contexts of zero mass get a uniform row.

    Raises:
        ArgumentError: If ``order`` is negative or not below the number of variables.

    """
    length = len(truth.vars)
    if order < 0 or order >= length:
        raise ArgumentError(f"order must lie in [0, {length - 1}], got {order}")

    size = truth.alphabet_size
    factors = []
    for position, var in enumerate(truth.vars):
        context = truth.vars[position - min(order, position) : position]
        block = reorder(marginalize(truth, [*context, var]), [*context, var]).probs
        mass = block.sum(axis=-1, keepdims=True)
        factor = np.divide(
            block, mass, out=np.full(block.shape, 1.0 / size), where=mass > 0
        )
        factors.append(factor)
    return ChainModel(order, truth.vars, truth.alphabet, tuple(factors), truth)


def chain_joint(model: ChainModel) -> JointTable:
    """Multiply out every factor into the full joint table."""
    probs = model.factors[0]
    for position in range(1, model.length):
        factor = model.factors[position]
        lead = (1,) * (position - model.context_length(position))
        probs = probs[..., np.newaxis] * factor.reshape(lead + factor.shape)
    return JointTable(model.vars, model.alphabet, probs)


def chain_entropy(model: ChainModel) -> float:
    """Sum of per-position conditional entropies, contexts weighted by the truth.

    Models built without a truth weight contexts by their own joint, which has the same
    context marginals when the model was fitted exactly.
    """
    weights = model.truth if model.truth is not None else chain_joint(model)
    weights = reorder(weights, model.vars)
    return math.fsum(
        conditional_entropy(weights, var, model.context_vars(position))
        for position, var in enumerate(model.vars)
    )


def sequence_logprob(model: ChainModel, sequence: Sequence[int]) -> LogProbability:
    """Log-probability of a full-length sequence under the chain.

    Raises:
        ArgumentError: If the length differs from the model or a symbol is out of range.

    """
    if len(sequence) != model.length:
        raise ArgumentError(f"sequence has {len(sequence)} symbols, model has {model.length}")
    if any(not 0 <= s < model.alphabet.size for s in sequence):
        raise ArgumentError(f"sequence {list(sequence)} leaves the alphabet")

    total = 0.0
    for position, factor in enumerate(model.factors):
        start = position - model.context_length(position)
        p = factor[tuple(sequence[start : position + 1])]
        if p <= 0:
            return LogProbability.impossible()
        total += math.log(p)
    return LogProbability(total)
