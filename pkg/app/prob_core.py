"""Dense discrete probability tables.

Every table is defined over an ordered tuple of integer variable labels that share one
alphabet of ``I`` symbols. Values are stored as an ``(I,) * n`` array, which is the
row-major layout of the flat value list used by the JSON format.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
import math
from types import MappingProxyType

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import entr

from app.errors import (
    ArgumentError,
    ConditioningOnNullEventError,
    TableError,
    UnknownVariableError,
    ZeroMassError,
)

NORMALIZATION_TOLERANCE = 1e-12

# Below this temperature sampling is the argmax limit.
GREEDY_TEMPERATURE = 1e-8

FloatArray = NDArray[np.float64]
BoolArray = NDArray[np.bool_]


@dataclass(frozen=True)
class Alphabet:
    """Number of symbol values shared by every variable."""

    size: int

    def __post_init__(self) -> None:
        if int(self.size) != self.size or self.size < 1:
            raise TableError(f"alphabet size must be a positive integer, got {self.size}")


@dataclass(frozen=True, eq=False)
class JointTable:
    """Probability table over an ordered set of discrete variables.

    Attributes:
        vars: Distinct variable labels, in axis order.
        alphabet: Shared alphabet.
        probs: Read-only array of shape ``(alphabet.size,) * len(vars)``.

    """

    vars: tuple[int, ...]
    alphabet: Alphabet
    probs: FloatArray

    def __post_init__(self) -> None:
        labels = tuple(int(v) for v in self.vars)
        if not labels:
            raise TableError("a table needs at least one variable")
        if len(set(labels)) != len(labels):
            raise TableError(f"variable labels must be distinct, got {labels}")

        size = self.alphabet.size
        shape = (size,) * len(labels)
        arr = np.array(self.probs, dtype=np.float64)
        if arr.shape != shape:
            if arr.size != size ** len(labels):
                raise TableError(
                    f"expected {size ** len(labels)} values for {len(labels)} variables "
                    f"over an alphabet of {size}, got {arr.size}"
                )
            arr = arr.reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise TableError("table entries must be finite")
        if np.any(arr < 0):
            raise TableError("table entries must be non-negative")

        arr.setflags(write=False)
        object.__setattr__(self, "vars", labels)
        object.__setattr__(self, "probs", arr)

    @classmethod
    def from_values(
        cls, vars: Sequence[int], alphabet_size: int, values: ArrayLike
    ) -> JointTable:
        """Build a table from a flat row-major value list."""
        return cls(tuple(vars), Alphabet(alphabet_size), np.asarray(values, dtype=np.float64))

    @property
    def alphabet_size(self) -> int:
        return self.alphabet.size

    @property
    def values(self) -> FloatArray:
        """Flat row-major copy of the entries."""
        return self.probs.ravel().copy()

    @property
    def total(self) -> float:
        return float(self.probs.sum())

    def axis(self, var: int) -> int:
        """Return the axis holding ``var``.

        Raises:
            UnknownVariableError: If ``var`` is not a variable of the table.

        """
        try:
            return self.vars.index(var)
        except ValueError:
            raise UnknownVariableError(
                f"variable {var} is not one of {self.vars}"
            ) from None

    def is_normalized(self, tolerance: float = NORMALIZATION_TOLERANCE) -> bool:
        return abs(self.total - 1.0) <= tolerance


@dataclass(frozen=True, eq=False)
class ConditionalSlice:
    """Distribution of one variable given an assignment of others."""

    target_var: int
    given: Mapping[int, int]
    probs: FloatArray

    def __post_init__(self) -> None:
        given = {int(k): int(v) for k, v in self.given.items()}
        if self.target_var in given:
            raise ArgumentError(
                f"target variable {self.target_var} cannot also be conditioned on"
            )
        arr = np.array(self.probs, dtype=np.float64).ravel()
        if arr.size == 0 or np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise TableError("conditional probabilities must be finite and non-negative")
        if abs(arr.sum() - 1.0) > NORMALIZATION_TOLERANCE:
            raise TableError(f"conditional probabilities sum to {arr.sum()!r}, not 1")
        arr.setflags(write=False)
        object.__setattr__(self, "given", MappingProxyType(given))
        object.__setattr__(self, "probs", arr)


def uniform_joint(vars: Sequence[int], alphabet_size: int) -> JointTable:
    """Uniform table over ``vars``."""
    shape = (alphabet_size,) * len(vars)
    return JointTable(tuple(vars), Alphabet(alphabet_size), np.full(shape, 1.0 / math.prod(shape)))


def independent_joint(vars: Sequence[int], marginals: Sequence[ArrayLike]) -> JointTable:
    """Product of one-variable marginals, in ``vars`` order."""
    if len(vars) != len(marginals):
        raise ArgumentError("one marginal per variable is required")
    arrays = [np.asarray(m, dtype=np.float64) for m in marginals]
    sizes = {a.size for a in arrays}
    if len(sizes) != 1:
        raise TableError("all marginals must share one alphabet")
    probs = arrays[0]
    for arr in arrays[1:]:
        probs = np.multiply.outer(probs, arr)
    return JointTable(tuple(vars), Alphabet(arrays[0].size), probs)


def dirichlet_joint(
    vars: Sequence[int],
    alphabet_size: int,
    rng: np.random.Generator | int,
    concentration: float = 1.0,
) -> JointTable:
    """Draw a table uniformly from the simplex (Dirichlet with equal concentrations)."""
    generator = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    cells = alphabet_size ** len(vars)
    values = generator.dirichlet(np.full(cells, concentration))
    return JointTable.from_values(vars, alphabet_size, values)


def normalize(table: JointTable) -> JointTable:
    """Rescale a table so its entries sum to one.

    Raises:
        ZeroMassError: If every entry is zero.

    """
    total = table.probs.sum()
    if total <= 0:
        raise ZeroMassError(f"table over {table.vars} has no probability mass")
    return JointTable(table.vars, table.alphabet, table.probs / total)


def reorder(joint: JointTable, order: Sequence[int]) -> JointTable:
    """Return the same distribution with its axes in ``order``."""
    order = tuple(order)
    if sorted(order) != sorted(joint.vars):
        raise UnknownVariableError(f"{order} is not a permutation of {joint.vars}")
    if order == joint.vars:
        return joint
    axes = [joint.axis(v) for v in order]
    return JointTable(order, joint.alphabet, np.transpose(joint.probs, axes))


def marginalize(joint: JointTable, keep: Iterable[int]) -> JointTable:
    """Sum out every variable not in ``keep``.

    The result keeps the variables in the joint's own order.

    Raises:
        UnknownVariableError: If ``keep`` names a variable the joint does not have.
        ArgumentError: If ``keep`` is empty.

    """
    wanted = set(keep)
    if not wanted:
        raise ArgumentError("at least one variable must be kept")
    unknown = wanted.difference(joint.vars)
    if unknown:
        raise UnknownVariableError(f"variables {sorted(unknown)} are not in {joint.vars}")

    kept = tuple(v for v in joint.vars if v in wanted)
    if len(kept) == len(joint.vars):
        return joint
    dropped = tuple(i for i, v in enumerate(joint.vars) if v not in wanted)
    return JointTable(kept, joint.alphabet, joint.probs.sum(axis=dropped))


def condition(joint: JointTable, target: int, given: Mapping[int, int]) -> ConditionalSlice:
    """Distribution of ``target`` given the assignment ``given``.

    Variables that are neither the target nor assigned are summed out.

    Raises:
        ArgumentError: If the target is assigned or a symbol is outside the alphabet.
        ConditioningOnNullEventError: If the conditioning event has zero mass.

    """
    joint.axis(target)
    if target in given:
        raise ArgumentError(f"target variable {target} cannot also be conditioned on")
    for var, symbol in given.items():
        joint.axis(var)
        if not 0 <= symbol < joint.alphabet_size:
            raise ArgumentError(
                f"symbol {symbol} for variable {var} is outside the alphabet "
                f"of size {joint.alphabet_size}"
            )

    sub = marginalize(joint, [target, *given])
    index = tuple(slice(None) if v == target else given[v] for v in sub.vars)
    row = sub.probs[index]
    mass = row.sum()
    if mass <= 0:
        raise ConditioningOnNullEventError(
            f"conditioning event {dict(given)} has zero probability"
        )
    return ConditionalSlice(target, given, row / mass)


def entropy(joint: JointTable) -> float:
    """Shannon entropy in nats, with ``0 ln 0 = 0``."""
    return float(entr(joint.probs).sum())


def conditional_entropy(joint: JointTable, target: int, given_vars: Sequence[int]) -> float:
    """Conditional entropy ``H(target | given_vars)`` in nats.

    Raises:
        ArgumentError: If the target also appears among ``given_vars``.

    """
    if target in given_vars:
        raise ArgumentError(f"target variable {target} is also in the conditioning set")
    if not given_vars:
        return entropy(marginalize(joint, [target]))
    both = entropy(marginalize(joint, [target, *given_vars]))
    context = entropy(marginalize(joint, given_vars))
    return max(0.0, both - context)


def convert_entropy(nats: float, base: float = 2.0) -> float:
    """Express an entropy in nats in another logarithm base."""
    if base <= 0 or base == 1:
        raise ArgumentError(f"invalid logarithm base {base}")
    return nats / math.log(base)


def spread(probs: ArrayLike) -> float:
    """Largest minus smallest value."""
    arr = np.asarray(probs, dtype=np.float64)
    if arr.size == 0:
        raise ArgumentError("spread of an empty array is undefined")
    return float(arr.max() - arr.min())


def sample(
    slice_: ConditionalSlice,
    temperature: float,
    rng_seed: int | np.random.Generator,
) -> int:
    """Draw a symbol from the tempered conditional.

    The distribution is ``probs ** (1 / temperature)`` renormalized. Temperatures at or
    below ``GREEDY_TEMPERATURE`` return the argmax, ties broken by the lowest index.

    Raises:
        ArgumentError: If the temperature is not a positive finite number.

    """
    if not math.isfinite(temperature) or temperature <= 0:
        raise ArgumentError(f"temperature must be positive and finite, got {temperature}")

    probs = slice_.probs
    if temperature <= GREEDY_TEMPERATURE:
        return int(np.argmax(probs))

    with np.errstate(divide="ignore"):
        logits = np.log(probs) / temperature
    weights = np.exp(logits - logits.max())
    weights /= weights.sum()

    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return int(rng.choice(weights.size, p=weights))
