"""Marginal constraint systems for MEP[T], GMEP and SMEP.

A system is the set of joint marginals a maximum-entropy joint must reproduce. This
module builds the three named systems, checks that their marginals agree where they
overlap, and removes the redundant constraint cells before the dual is optimized.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
import itertools
import math
from typing import Literal

from loguru import logger
import numpy as np
from numpy.typing import ArrayLike

from app.config import config
from app.errors import (
    ArgumentError,
    ConsistencyError,
    PairCoverageError,
    ShapeError,
    TableError,
)
from app.prob_core import (
    Alphabet,
    BoolArray,
    FloatArray,
    JointTable,
    marginalize,
    reorder,
)

Reference = Literal["last", "first"]


class Method(StrEnum):
    """Constraint system families."""

    MEP_T = "mep_t"
    GMEP = "gmep"
    SMEP = "smep"
    CUSTOM = "custom"


@dataclass(frozen=True, eq=False)
class MarginalConstraint:
    """Target marginal over a subset of the problem variables."""

    vars: tuple[int, ...]
    target: JointTable

    def __post_init__(self) -> None:
        labels = tuple(int(v) for v in self.vars)
        if sorted(labels) != sorted(self.target.vars):
            raise ShapeError(
                f"constraint variables {labels} differ from its table's {self.target.vars}"
            )
        if not self.target.is_normalized(config.maxent_normalization_tolerance):
            raise TableError(f"target over {labels} sums to {self.target.total!r}")
        object.__setattr__(self, "vars", labels)
        object.__setattr__(self, "target", reorder(self.target, labels))

    @classmethod
    def of(cls, table: JointTable) -> MarginalConstraint:
        return cls(table.vars, table)

    @property
    def var_set(self) -> frozenset[int]:
        return frozenset(self.vars)

    @property
    def cell_count(self) -> int:
        return self.target.probs.size


def expected_constraint_count(method: Method, T: int) -> int | None:
    """Closed-form constraint count of a named method, ``None`` for custom systems."""
    counts = {Method.MEP_T: 3, Method.GMEP: T * (T - 1) // 2, Method.SMEP: 2 * T + 2}
    return counts.get(Method(method))


def expected_dual_dimension(method: Method, T: int, alphabet_size: int) -> int | None:
    """Constraint cells of a named method before redundancy reduction."""
    match Method(method):
        case Method.MEP_T:
            return 3 * alphabet_size ** (T + 1)
        case Method.GMEP:
            return T * (T - 1) // 2 * alphabet_size**2
        case Method.SMEP:
            return (2 * T + 2) * alphabet_size ** (T + 1)
    return None


def method_full_vars(method: Method, T: int) -> tuple[int, ...]:
    """Variables of the joint each named method reconstructs."""
    if T < 1:
        raise ArgumentError(f"T must be positive, got {T}")
    match Method(method):
        case Method.MEP_T:
            return tuple(range(1, 2 * T + 2))
        case Method.GMEP:
            return tuple(range(1, T + 1))
        case Method.SMEP:
            return tuple(range(-T, T + 1))
    raise ArgumentError(f"{method} has no fixed variable set")


@dataclass(frozen=True, eq=False)
class ConstraintSystem:
    """All constraints of one maximum-entropy problem.

    Constraint variables are stored in ``full_vars`` order.
    """

    full_vars: tuple[int, ...]
    alphabet: Alphabet
    constraints: tuple[MarginalConstraint, ...]
    method: Method = Method.CUSTOM
    horizon: int | None = None

    def __post_init__(self) -> None:
        full = tuple(int(v) for v in self.full_vars)
        if not full or len(set(full)) != len(full):
            raise ShapeError(f"full variables must be distinct and non-empty, got {full}")
        if not self.constraints:
            raise ShapeError("a system needs at least one constraint")

        position = {v: i for i, v in enumerate(full)}
        ordered = []
        for constraint in self.constraints:
            if not constraint.var_set <= position.keys():
                raise ShapeError(f"constraint {constraint.vars} is not inside {full}")
            if constraint.target.alphabet_size != self.alphabet.size:
                raise ShapeError(
                    f"constraint {constraint.vars} uses alphabet "
                    f"{constraint.target.alphabet_size}, system uses {self.alphabet.size}"
                )
            labels = tuple(sorted(constraint.vars, key=position.__getitem__))
            ordered.append(MarginalConstraint(labels, constraint.target))

        method = Method(self.method)
        if method is not Method.CUSTOM:
            if self.horizon is None:
                raise ShapeError(f"{method} systems need their horizon T")
            expected = expected_constraint_count(method, self.horizon)
            if expected != len(ordered):
                raise ShapeError(
                    f"{method} with T={self.horizon} needs {expected} constraints, "
                    f"got {len(ordered)}"
                )

        object.__setattr__(self, "full_vars", full)
        object.__setattr__(self, "constraints", tuple(ordered))
        object.__setattr__(self, "method", method)

    @property
    def alphabet_size(self) -> int:
        return self.alphabet.size

    @property
    def outcome_count(self) -> int:
        return self.alphabet.size ** len(self.full_vars)

    @property
    def dual_dimension(self) -> int:
        """Number of constraint cells before redundancy reduction."""
        return sum(c.cell_count for c in self.constraints)

    def axes(self, index: int) -> tuple[int, ...]:
        """Axes of the full table covered by constraint ``index``."""
        return tuple(self.full_vars.index(v) for v in self.constraints[index].vars)


# Builders


def _require_vars(constraint: MarginalConstraint, expected: Iterable[int], name: str) -> None:
    if constraint.var_set != frozenset(expected):
        raise ShapeError(
            f"{name} must cover variables {sorted(expected)}, got {sorted(constraint.vars)}"
        )


def mep_t_groups(T: int) -> tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]:
    """Return ``(g1, g1_plus, g2)`` for MEP[T]."""
    if T < 1:
        raise ArgumentError(f"T must be positive, got {T}")
    g1 = tuple(range(2, T + 2))
    return g1, g1[1:], tuple(range(T + 2, 2 * T + 2))


def build_mep_t(
    T: int,
    p_1g1: MarginalConstraint,
    p_1g2: MarginalConstraint,
    p_2g2: MarginalConstraint,
) -> ConstraintSystem:
    """Three-constraint system over ``(1, g1, g2)``.

    The constraints are ordered ``p(2, g2)``, ``p(1, g1)``, ``p(1, g2)``; the first one
    leaves variable 1 and ``g1_plus`` free.

    Raises:
        ShapeError: If a marginal does not cover the variables MEP[T] assigns to it.

    """
    g1, _, g2 = mep_t_groups(T)
    _require_vars(p_1g1, (1, *g1), "p(1, g1)")
    _require_vars(p_1g2, (1, *g2), "p(1, g2)")
    _require_vars(p_2g2, (2, *g2), "p(2, g2)")
    return ConstraintSystem(
        method_full_vars(Method.MEP_T, T),
        p_1g1.target.alphabet,
        (p_2g2, p_1g1, p_1g2),
        Method.MEP_T,
        T,
    )


def build_gmep(T: int, pairs: Sequence[MarginalConstraint]) -> ConstraintSystem:
    """Pairwise system with one constraint for every ``{t, t'}`` in ``1..T``.

    Raises:
        PairCoverageError: If a pair is missing, duplicated or not a pair of ``1..T``.

    """
    if T < 2:
        raise ArgumentError(f"GMEP needs T >= 2, got {T}")
    wanted = {frozenset(p) for p in itertools.combinations(range(1, T + 1), 2)}
    seen: dict[frozenset[int], MarginalConstraint] = {}
    for pair in pairs:
        if pair.var_set not in wanted:
            raise PairCoverageError(f"{pair.vars} is not a pair of variables 1..{T}")
        if pair.var_set in seen:
            raise PairCoverageError(f"pair {sorted(pair.vars)} is given twice")
        seen[pair.var_set] = pair
    missing = wanted - seen.keys()
    if missing:
        raise PairCoverageError(f"missing pairs {sorted(sorted(p) for p in missing)}")

    ordered = [seen[frozenset(p)] for p in itertools.combinations(range(1, T + 1), 2)]
    return ConstraintSystem(
        method_full_vars(Method.GMEP, T), ordered[0].target.alphabet, tuple(ordered), Method.GMEP, T
    )


def _match_sets(
    constraints: Sequence[MarginalConstraint], sets: Sequence[Iterable[int]], name: str
) -> tuple[MarginalConstraint, ...]:
    """Fill each slot of ``sets`` with the next unused constraint over the same variables.

    Two slots over one variable set keep their own tables, in the order given.
    """
    if len(constraints) != len(sets):
        raise ShapeError(f"{name} needs {len(sets)} marginals, got {len(constraints)}")
    unused = list(range(len(constraints)))
    ordered = []
    for wanted in sets:
        slot = frozenset(wanted)
        match = next((i for i in unused if constraints[i].var_set == slot), None)
        if match is None:
            raise ShapeError(
                f"{name} needs marginals over {[tuple(s) for s in sets]}, "
                f"got {[c.vars for c in constraints]}"
            )
        unused.remove(match)
        ordered.append(constraints[match])
    return tuple(ordered)


def smep_var_sets(T: int) -> list[tuple[int, ...]]:
    """The ``2T + 2`` variable sets of SMEP, each of ``T + 1`` variables."""
    positive = tuple(range(1, T + 1))
    negative = tuple(range(-1, -T - 1, -1))
    sets = [(-g, *positive) for g in range(T, 0, -1)]
    sets.append((0, *positive))
    sets.append((0, *negative))
    sets.extend((g, *negative) for g in range(1, T + 1))
    return sets


def build_smep(T: int, marginals: Sequence[MarginalConstraint]) -> ConstraintSystem:
    """Symmetric system over ``-T..T`` with ``2T + 2`` constraints.

    Raises:
        ShapeError: If the count or the variable sets differ from SMEP's.

    """
    ordered = _match_sets(marginals, smep_var_sets(T), f"SMEP with T={T}")
    return ConstraintSystem(
        method_full_vars(Method.SMEP, T), ordered[0].target.alphabet, ordered, Method.SMEP, T
    )


def custom_system(
    full_vars: Sequence[int], alphabet_size: int, constraints: Sequence[MarginalConstraint]
) -> ConstraintSystem:
    """System over arbitrary constraint sets."""
    return ConstraintSystem(tuple(full_vars), Alphabet(alphabet_size), tuple(constraints))


def horizon_for(method: Method, n_vars: int) -> int:
    """Horizon ``T`` of a named method whose joint has ``n_vars`` variables.

    Raises:
        ShapeError: If no horizon gives that many variables.

    """
    method = Method(method)
    match method:
        case Method.MEP_T | Method.SMEP if n_vars >= 3 and n_vars % 2 == 1:
            return (n_vars - 1) // 2
        case Method.GMEP if n_vars >= 2:
            return n_vars
    raise ShapeError(f"{method} has no horizon with {n_vars} variables")


def build_system(
    method: Method,
    full_vars: Sequence[int],
    alphabet_size: int,
    constraints: Sequence[MarginalConstraint],
    T: int | None = None,
) -> ConstraintSystem:
    """Build a system of any method from loose constraints, checking a named method's shape.

    ``T`` is derived from ``full_vars`` when omitted.

    Raises:
        ShapeError: If the variables or constraint sets do not fit the named method.

    """
    method = Method(method)
    if method is Method.CUSTOM:
        return custom_system(full_vars, alphabet_size, constraints)

    horizon = horizon_for(method, len(full_vars)) if T is None else T
    expected = method_full_vars(method, horizon)
    if sorted(full_vars) != sorted(expected):
        raise ShapeError(f"{method} with T={horizon} needs variables {expected}, got {full_vars}")
    if any(c.target.alphabet_size != alphabet_size for c in constraints):
        raise ShapeError(f"every constraint must use alphabet {alphabet_size}")

    match method:
        case Method.MEP_T:
            g1, _, g2 = mep_t_groups(horizon)
            p_1g1, p_1g2, p_2g2 = _match_sets(
                constraints, [(1, *g1), (1, *g2), (2, *g2)], f"MEP[T] with T={horizon}"
            )
            return build_mep_t(horizon, p_1g1, p_1g2, p_2g2)
        case Method.GMEP:
            return build_gmep(horizon, constraints)
        case _:
            return build_smep(horizon, constraints)


def constraint_from_conditional(
    target_var: int, context: JointTable, conditional: ArrayLike
) -> MarginalConstraint:
    """Joint marginal ``p(context, target)`` from ``p(target | context)`` and ``p(context)``.

    ``conditional`` has one axis per context variable, in ``context.vars`` order, followed
    by the target axis.
    """
    table = np.asarray(conditional, dtype=np.float64)
    if table.shape != context.probs.shape + (context.alphabet_size,):
        raise ShapeError(
            f"conditional shape {table.shape} does not match context {context.vars}"
        )
    joint = context.probs[..., np.newaxis] * table
    return MarginalConstraint.of(
        JointTable((*context.vars, target_var), context.alphabet, joint)
    )


def _from_sets(truth: JointTable, sets: Iterable[Iterable[int]]) -> list[MarginalConstraint]:
    return [MarginalConstraint.of(marginalize(truth, s)) for s in sets]


def system_from_joint(method: Method, truth: JointTable, T: int) -> ConstraintSystem:
    """Marginalize a ground-truth joint into the constraints of a named method."""
    method = Method(method)
    full = method_full_vars(method, T)
    if sorted(truth.vars) != sorted(full):
        raise ShapeError(f"{method} with T={T} needs a joint over {full}, got {truth.vars}")
    match method:
        case Method.MEP_T:
            g1, _, g2 = mep_t_groups(T)
            p_1g1, p_1g2, p_2g2 = _from_sets(truth, [(1, *g1), (1, *g2), (2, *g2)])
            return build_mep_t(T, p_1g1, p_1g2, p_2g2)
        case Method.GMEP:
            return build_gmep(T, _from_sets(truth, itertools.combinations(full, 2)))
        case _:
            return build_smep(T, _from_sets(truth, smep_var_sets(T)))


def chain_pair_system(truth: JointTable) -> ConstraintSystem:
    """Contiguous-pair constraints along the joint's variable order."""
    pairs = zip(truth.vars, truth.vars[1:], strict=False)
    return custom_system(truth.vars, truth.alphabet_size, _from_sets(truth, pairs))


# Consistency


@dataclass(frozen=True)
class OverlapMismatch:
    """Two constraints whose shared sub-marginal disagrees."""

    first: int
    second: int
    shared: tuple[int, ...]
    deviation: float


@dataclass(frozen=True)
class UnnormalizedConstraint:
    index: int
    total: float


@dataclass(frozen=True)
class ConsistencyReport:
    """Result of :func:`check_consistency`; empty means consistent."""

    mismatches: tuple[OverlapMismatch, ...] = ()
    unnormalized: tuple[UnnormalizedConstraint, ...] = ()
    tolerance: float = 1e-9

    @property
    def consistent(self) -> bool:
        return not self.mismatches and not self.unnormalized

    def describe(self) -> list[str]:
        lines = [
            f"constraints {m.first} and {m.second} disagree on {list(m.shared)} "
            f"by {m.deviation:.3e}"
            for m in self.mismatches
        ]
        lines.extend(
            f"constraint {u.index} sums to {u.total!r}" for u in self.unnormalized
        )
        return lines


def check_consistency(
    system: ConstraintSystem, tolerance: float | None = None
) -> ConsistencyReport:
    """Compare every overlapping pair of constraints on their shared variables."""
    tol = config.maxent_consistency_tolerance if tolerance is None else tolerance
    constraints = system.constraints

    unnormalized = tuple(
        UnnormalizedConstraint(i, c.target.total)
        for i, c in enumerate(constraints)
        if abs(c.target.total - 1.0) > tol
    )

    mismatches = []
    for i, j in itertools.combinations(range(len(constraints)), 2):
        shared = [v for v in system.full_vars if v in constraints[i].var_set & constraints[j].var_set]
        if not shared:
            continue
        left = marginalize(constraints[i].target, shared).probs
        right = marginalize(constraints[j].target, shared).probs
        deviation = float(np.max(np.abs(left - right)))
        if deviation > tol:
            mismatches.append(OverlapMismatch(i, j, tuple(shared), deviation))

    report = ConsistencyReport(tuple(mismatches), unnormalized, tol)
    if not report.consistent:
        logger.debug(f"Constraint system is inconsistent: {report.describe()}")
    return report


# Redundancy reduction


@dataclass(frozen=True)
class DroppedCell:
    """A constraint cell implied by the kept cells.

    ``identity`` is ``"normalization"`` when the cell follows from the other cells of its
    table and the total mass, or ``"shared_marginal"`` when it follows from the marginal
    over ``subset`` that constraint ``source`` already fixes.
    """

    constraint: int
    cell: int
    identity: Literal["normalization", "shared_marginal"]
    subset: tuple[int, ...] = ()
    source: int | None = None


@dataclass(frozen=True, eq=False)
class ReductionPlan:
    """Independent constraint cells and the identities that recover the rest.

    Each cell of a constraint table is classified by its support, the variables whose
    symbol differs from the reference symbol. A support belongs to the first constraint
    containing it; a cell is kept when its own constraint owns its support. The kept cells
    together with the normalization row form a basis of the constraint row space.
    """

    kept: tuple[tuple[int, int], ...]
    dropped: tuple[DroppedCell, ...]
    reference: Reference
    owners: Mapping[frozenset[int], int]
    masks: tuple[BoolArray, ...] = field(repr=False)

    @property
    def kept_count(self) -> int:
        return len(self.kept)

    @property
    def full_count(self) -> int:
        return len(self.kept) + len(self.dropped)

    def reference_symbol(self, alphabet_size: int) -> int:
        return alphabet_size - 1 if self.reference == "last" else 0


def reduce_redundancy(
    system: ConstraintSystem, reference: Reference = "last"
) -> ReductionPlan:
    """Drop every constraint cell implied by lower-order shared marginals or normalization.

    ``reference="last"`` fixes the last symbol of each variable (row-based elimination),
    ``reference="first"`` fixes the first (column-based elimination).

    Raises:
        ConsistencyError: If the constraint marginals disagree.

    """
    report = check_consistency(system)
    if not report.consistent:
        raise ConsistencyError("cannot reduce an inconsistent constraint system", report)

    size = system.alphabet_size
    ref = size - 1 if reference == "last" else 0

    owners: dict[frozenset[int], int] = {}
    for index, constraint in enumerate(system.constraints):
        for r in range(1, len(constraint.vars) + 1):
            for subset in itertools.combinations(constraint.vars, r):
                owners.setdefault(frozenset(subset), index)

    kept: list[tuple[int, int]] = []
    dropped: list[DroppedCell] = []
    masks = []
    for index, constraint in enumerate(system.constraints):
        shape = constraint.target.probs.shape
        mask = np.zeros(shape, dtype=bool)
        for flat, cell in enumerate(np.ndindex(shape)):
            support = tuple(v for v, s in zip(constraint.vars, cell, strict=True) if s != ref)
            if not support:
                dropped.append(DroppedCell(index, flat, "normalization"))
                continue
            owner = owners[frozenset(support)]
            if owner == index:
                kept.append((index, flat))
                mask[cell] = True
            else:
                dropped.append(DroppedCell(index, flat, "shared_marginal", support, owner))
        mask.setflags(write=False)
        masks.append(mask)

    logger.debug(
        f"Reduced {system.dual_dimension} constraint cells to {len(kept)} "
        f"({reference} reference)"
    )
    return ReductionPlan(tuple(kept), tuple(dropped), reference, owners, tuple(masks))


# Rank oracle


def _outcome_coordinates(system: ConstraintSystem, max_outcomes: int | None) -> np.ndarray:
    limit = config.maxent_max_rank_outcomes if max_outcomes is None else max_outcomes
    if system.outcome_count > limit:
        raise ArgumentError(
            f"{system.outcome_count} outcomes exceed the dense matrix limit of {limit}"
        )
    shape = (system.alphabet_size,) * len(system.full_vars)
    return np.indices(shape).reshape(len(shape), -1)


def constraint_matrix(system: ConstraintSystem, max_outcomes: int | None = None) -> FloatArray:
    """Dense 0/1 matrix with one row per constraint cell and one column per outcome."""
    coords = _outcome_coordinates(system, max_outcomes)
    blocks = []
    for index, constraint in enumerate(system.constraints):
        shape = constraint.target.probs.shape
        cells = np.ravel_multi_index(tuple(coords[list(system.axes(index))]), shape)
        block = np.zeros((math.prod(shape), coords.shape[1]))
        block[cells, np.arange(coords.shape[1])] = 1.0
        blocks.append(block)
    return np.vstack(blocks)


def kept_matrix(
    system: ConstraintSystem, plan: ReductionPlan, max_outcomes: int | None = None
) -> FloatArray:
    """Rows of :func:`constraint_matrix` retained by ``plan``."""
    full = constraint_matrix(system, max_outcomes)
    offsets = np.cumsum([0] + [c.cell_count for c in system.constraints])
    rows = [offsets[c] + cell for c, cell in plan.kept]
    return full[rows]


def plan_rank_check(
    system: ConstraintSystem, plan: ReductionPlan, max_outcomes: int | None = None
) -> bool:
    """Whether the kept rows plus normalization are independent and span every row."""
    full = constraint_matrix(system, max_outcomes)
    kept = kept_matrix(system, plan, max_outcomes)
    basis = np.vstack([kept, np.ones((1, full.shape[1]))])
    rank_full = np.linalg.matrix_rank(full)
    rank_basis = np.linalg.matrix_rank(basis)
    return rank_full == rank_basis == plan.kept_count + 1
