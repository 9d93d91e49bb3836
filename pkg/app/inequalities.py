"""Numerical checks that conditioning widens spread and lowers entropy.

For a target variable and growing context sets ``G`` within ``G'``:

* every conditional ``p(x | g)`` lies between the smallest and the largest
  ``p(x | g')`` over the extensions ``g'`` of ``g`` (pointwise bounds);
* hence the smallest conditional over ``G'`` is at most the smallest over ``G`` and the
  largest is at least the largest over ``G`` (global bounds);
* ``H(x | G') <= H(x | G)``.

Zero-mass contexts have no conditional; they are skipped and counted.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from typing import Literal

from loguru import logger
import numpy as np

from app.chains import chain_entropy, chain_joint, fit_chain
from app.errors import ArgumentError
from app.prob_core import (
    FloatArray,
    JointTable,
    conditional_entropy,
    dirichlet_joint,
    marginalize,
    reorder,
)

SLACK = 1e-12


@dataclass(frozen=True)
class ContextBounds:
    """Extremes of ``p(target | context)`` over positive-mass context assignments."""

    context: tuple[int, ...]
    min: float
    max: float
    contexts: int
    skipped: int

    @property
    def spread(self) -> float:
        return self.max - self.min


@dataclass(frozen=True)
class SpreadViolation:
    """One failed comparison between a context set and the next larger one.

    ``outcome`` holds the inner context's symbols followed by the target symbol for
    pointwise violations, and is empty for global ones.
    """

    kind: Literal["pointwise_min", "pointwise_max", "global_min", "global_max"]
    inner: tuple[int, ...]
    outer: tuple[int, ...]
    outcome: tuple[int, ...]
    magnitude: float


@dataclass(frozen=True)
class SpreadReport:
    target: int
    bounds: tuple[ContextBounds, ...]
    violations: tuple[SpreadViolation, ...]
    worst_margin: float
    slack: float = SLACK

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def skipped_contexts(self) -> int:
        return sum(b.skipped for b in self.bounds)


def _conditional(joint: JointTable, target: int, context: Sequence[int]) -> tuple[FloatArray, FloatArray]:
    """Conditional table with axes ``(*context, target)`` and the context mass."""
    order = [*context, target]
    block = reorder(marginalize(joint, order), order).probs
    mass = block.sum(axis=-1)
    cond = np.divide(
        block, mass[..., np.newaxis], out=np.zeros_like(block), where=mass[..., np.newaxis] > 0
    )
    return cond, mass


def _bounds(joint: JointTable, target: int, context: tuple[int, ...]) -> ContextBounds:
    cond, mass = _conditional(joint, target, context)
    positive = mass > 0
    skipped = int(positive.size - positive.sum())
    if skipped:
        logger.debug(f"Skipping {skipped} zero-mass assignments of context {list(context)}")
    rows = cond[positive]
    return ContextBounds(context, float(rows.min()), float(rows.max()), int(positive.sum()), skipped)


def _validate_nesting(joint: JointTable, target: int, nesting: Sequence[Sequence[int]]) -> list[tuple[int, ...]]:
    joint.axis(target)
    sets = [tuple(dict.fromkeys(int(v) for v in ctx)) for ctx in nesting]
    if not sets:
        raise ArgumentError("at least one context set is required")
    for ctx in sets:
        for var in ctx:
            joint.axis(var)
        if target in ctx:
            raise ArgumentError(f"target {target} cannot be part of its context {list(ctx)}")
    for inner, outer in zip(sets, sets[1:]):
        if not set(inner) < set(outer):
            raise ArgumentError(f"context {list(inner)} is not strictly inside {list(outer)}")
    return sets


def _pointwise(
    joint: JointTable,
    target: int,
    inner: tuple[int, ...],
    outer: tuple[int, ...],
    slack: float,
) -> tuple[list[SpreadViolation], float]:
    size = joint.alphabet_size
    extra = tuple(v for v in outer if v not in inner)
    cond_in, mass_in = _conditional(joint, target, inner)
    cond_out, mass_out = _conditional(joint, target, (*inner, *extra))

    rows_in = cond_in.reshape(size ** len(inner), size)
    live = mass_in.reshape(-1) > 0
    cond_out = cond_out.reshape(size ** len(inner), size ** len(extra), size)
    mask_out = (mass_out.reshape(size ** len(inner), size ** len(extra)) > 0)[..., np.newaxis]
    low = np.where(mask_out, cond_out, np.inf).min(axis=1)
    high = np.where(mask_out, cond_out, -np.inf).max(axis=1)

    below = rows_in - low
    above = high - rows_in
    margin = float(min(below[live].min(), above[live].min())) if live.any() else np.inf

    violations = []
    shape = (size,) * len(inner)
    for kind, gap in (("pointwise_min", below), ("pointwise_max", above)):
        for flat, symbol in zip(*np.nonzero((gap < -slack) & live[:, np.newaxis]), strict=True):
            assignment = np.unravel_index(flat, shape) if inner else ()
            violations.append(
                SpreadViolation(
                    kind,  # type: ignore[arg-type]
                    inner,
                    outer,
                    (*(int(s) for s in assignment), int(symbol)),
                    float(-gap[flat, symbol]),
                )
            )
    return violations, margin


def verify_nested_spread(
    joint: JointTable,
    target: int,
    nesting: Sequence[Sequence[int]],
    slack: float = SLACK,
) -> SpreadReport:
    """Check spread widening along a chain of strictly growing context sets.

    Raises:
        ArgumentError: If the sets are not strictly nested or contain the target.
        UnknownVariableError: If a variable is not in the joint.

    """
    sets = _validate_nesting(joint, target, nesting)
    bounds = tuple(_bounds(joint, target, ctx) for ctx in sets)

    violations: list[SpreadViolation] = []
    worst = np.inf
    for (inner, outer), (b_in, b_out) in zip(
        zip(sets, sets[1:]), zip(bounds, bounds[1:]), strict=True
    ):
        found, margin = _pointwise(joint, target, inner, outer, slack)
        violations.extend(found)
        worst = min(worst, margin, b_in.min - b_out.min, b_out.max - b_in.max)
        if b_out.min > b_in.min + slack:
            violations.append(SpreadViolation("global_min", inner, outer, (), b_out.min - b_in.min))
        if b_out.max < b_in.max - slack:
            violations.append(SpreadViolation("global_max", inner, outer, (), b_in.max - b_out.max))

    return SpreadReport(target, bounds, tuple(violations), float(worst), slack)


def verify_pairwise_spread(joint: JointTable, slack: float = SLACK) -> SpreadReport:
    """``min p(x3|x2,x1) <= min p(x3|x2) <= max p(x3|x2) <= max p(x3|x2,x1)``.

    ``x1, x2, x3`` are the last three variables of the joint.

    Raises:
        ArgumentError: If the joint has fewer than three variables.

    """
    if len(joint.vars) < 3:
        raise ArgumentError(f"pairwise spread needs three variables, got {len(joint.vars)}")
    x1, x2, x3 = joint.vars[-3:]
    return verify_nested_spread(joint, x3, [(x2,), (x2, x1)], slack)


def growing_contexts(joint: JointTable, target: int) -> list[tuple[int, ...]]:
    """Context sets from empty to every other variable, nearest predecessors first."""
    position = joint.axis(target)
    before = list(reversed(joint.vars[:position]))
    after = list(joint.vars[position + 1 :])
    order = before + after
    return [tuple(order[:size]) for size in range(len(order) + 1)]


@dataclass(frozen=True)
class EntropyChainReport:
    target: int
    contexts: tuple[tuple[int, ...], ...]
    entropies: tuple[float, ...]
    violations: tuple[tuple[int, int], ...]
    slack: float = SLACK

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def worst_margin(self) -> float:
        gaps = [a - b for a, b in zip(self.entropies, self.entropies[1:])]
        return min(gaps) if gaps else float("inf")


def verify_entropy_chain(
    joint: JointTable, target: int, slack: float = SLACK
) -> EntropyChainReport:
    """Conditional entropy of ``target`` never rises as the context grows."""
    contexts = growing_contexts(joint, target)
    entropies = tuple(conditional_entropy(joint, target, ctx) for ctx in contexts)
    violations = tuple(
        (i, i + 1) for i in range(len(entropies) - 1) if entropies[i + 1] > entropies[i] + slack
    )
    return EntropyChainReport(target, tuple(contexts), entropies, violations, slack)


@dataclass(frozen=True)
class SpreadProfilePoint:
    context: tuple[int, ...]
    min: float
    max: float

    @property
    def spread(self) -> float:
        return self.max - self.min


def spread_profile(
    joint: JointTable, target: int, contexts: Sequence[Sequence[int]] | None = None
) -> list[SpreadProfilePoint]:
    """Spread of ``p(target | context)`` for each context set, default growing contexts."""
    sets = growing_contexts(joint, target) if contexts is None else [tuple(c) for c in contexts]
    points = []
    for ctx in sets:
        b = _bounds(joint, target, tuple(ctx))
        points.append(SpreadProfilePoint(b.context, b.min, b.max))
    return points


@dataclass(frozen=True)
class ChainSpreadLevel:
    order: int
    min: float
    max: float
    entropy: float


@dataclass(frozen=True)
class ChainSpreadReport:
    """Extremes and entropy of the chain joints of every order fitted to one truth.

    ``ordering_violations`` lists consecutive orders whose joint extremes do not widen.
    This ordering is measured, not guaranteed: a chain of higher order can have a larger
    minimum than one of lower order. The entropy ordering always holds.
    """

    levels: tuple[ChainSpreadLevel, ...]
    ordering_violations: tuple[tuple[int, int], ...]
    entropy_violations: tuple[tuple[int, int], ...]

    @property
    def ordering_holds(self) -> bool:
        return not self.ordering_violations

    @property
    def entropy_monotone(self) -> bool:
        return not self.entropy_violations


def verify_chain_spread(truth: JointTable, slack: float = SLACK) -> ChainSpreadReport:
    """Fit chains of order ``0 .. N-1`` to ``truth`` and compare their joints."""
    levels = []
    for order in range(len(truth.vars)):
        model = fit_chain(truth, order)
        probs = chain_joint(model).probs
        levels.append(
            ChainSpreadLevel(order, float(probs.min()), float(probs.max()), chain_entropy(model))
        )

    ordering = []
    entropy_order = []
    for low, high in zip(levels, levels[1:]):
        if high.min > low.min + slack or high.max < low.max - slack:
            ordering.append((low.order, high.order))
        if high.entropy > low.entropy + slack:
            entropy_order.append((low.order, high.order))
    return ChainSpreadReport(tuple(levels), tuple(ordering), tuple(entropy_order))


def random_joints(
    count: int, n_vars: int, alphabet_size: int, seed: int = 0
) -> Iterator[JointTable]:
    """Seeded joints drawn uniformly from the simplex over variables ``1..n_vars``."""
    rng = np.random.default_rng(seed)
    labels = tuple(range(1, n_vars + 1))
    for _ in range(count):
        yield dirichlet_joint(labels, alphabet_size, rng)


@dataclass
class SuiteSummary:
    """Pass/fail counts of :func:`run_suite`."""

    joints: int = 0
    pairwise_failures: int = 0
    nested_failures: int = 0
    entropy_failures: int = 0
    skipped_contexts: int = 0
    worst_margin: float = float("inf")
    violations: list[SpreadViolation] = field(default_factory=list)

    @property
    def failures(self) -> int:
        return self.pairwise_failures + self.nested_failures + self.entropy_failures

    @property
    def passed(self) -> bool:
        return self.failures == 0


def run_suite(
    joints: Iterable[JointTable], slack: float = SLACK, keep_violations: int = 20
) -> SuiteSummary:
    """Run every verifier on each joint, using its last variable as the target."""
    summary = SuiteSummary()
    for joint in joints:
        summary.joints += 1
        target = joint.vars[-1]
        contexts = growing_contexts(joint, target)

        if len(joint.vars) >= 3:
            pairwise = verify_pairwise_spread(joint, slack)
            summary.pairwise_failures += not pairwise.passed
            summary.worst_margin = min(summary.worst_margin, pairwise.worst_margin)
            summary.violations.extend(pairwise.violations)
        if len(contexts) >= 2:
            nested = verify_nested_spread(joint, target, contexts, slack)
            summary.nested_failures += not nested.passed
            summary.skipped_contexts += nested.skipped_contexts
            summary.worst_margin = min(summary.worst_margin, nested.worst_margin)
            summary.violations.extend(nested.violations)

        chain = verify_entropy_chain(joint, target, slack)
        summary.entropy_failures += not chain.passed
        summary.worst_margin = min(summary.worst_margin, chain.worst_margin)

    del summary.violations[keep_violations:]
    if not summary.passed:
        logger.warning(f"Inequality suite found {summary.failures} failing joints")
    return summary
